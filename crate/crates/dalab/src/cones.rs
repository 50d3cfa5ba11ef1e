//! Cone families in the adapted metric, constant selection, sampled invariance checks,
//! and continuation of invariant subspaces along orbits.

use crate::error::{LabError, Result};
use crate::linear::{Splitting, SplittingKind, SpectrumFrame};
use crate::matfun::{Mat4, Vec4};
use crate::model::DiffeoModel;
use crate::sampling::{cube_to_sphere, halton};
use crate::torus::{frac, TangentVector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeConstants {
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub mu1: f64,
    pub lambda2: f64,
    pub mu2: f64,
    pub lambda3: f64,
    /// rates of the perturbation, 1 ± ε for ε = epsilon_budget
    pub big_l: f64,
    pub small_l: f64,
    pub epsilon: f64,
    /// moduli the constants were built from: max stable, min center, max center, min unstable
    pub anchors: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConeFamily {
    S,
    Cs,
    U,
    Cu,
}

impl ConeFamily {
    pub const ALL: [ConeFamily; 4] = [ConeFamily::S, ConeFamily::Cs, ConeFamily::U, ConeFamily::Cu];

    pub fn name(&self) -> &'static str {
        match self {
            ConeFamily::S => "s",
            ConeFamily::Cs => "cs",
            ConeFamily::U => "u",
            ConeFamily::Cu => "cu",
        }
    }

    pub fn is_forward(&self) -> bool {
        matches!(self, ConeFamily::U | ConeFamily::Cu)
    }

    /// Adapted-coordinate indices spanning the cone's core subspace.
    pub fn indices(&self, sp: &Splitting) -> Vec<usize> {
        let mut v = match self {
            ConeFamily::S => sp.stable.clone(),
            ConeFamily::Cs => [sp.stable.clone(), sp.center.clone()].concat(),
            ConeFamily::U => sp.unstable.clone(),
            ConeFamily::Cu => [sp.center.clone(), sp.unstable.clone()].concat(),
        };
        v.sort();
        v
    }
}

fn place(a: f64, b: f64) -> (f64, f64) {
    // lower and upper quarter points of (a, b) on the log scale
    (a.powf(0.75) * b.powf(0.25), a.powf(0.25) * b.powf(0.75))
}

/// Constants of Eqs 6.3–6.4 from the four anchor moduli.
pub fn constants_from_moduli(s_max: f64, c_min: f64, c_max: f64, u_min: f64) -> Result<ConeConstants> {
    let theta = (c_min / s_max).min(u_min / c_max);
    if !(theta > 1.0) || !(s_max < 1.0) || !(u_min > 1.0) {
        return Err(LabError::NotPartiallyHyperbolic(theta));
    }
    let one_b = theta.powf(0.25).min(u_min.sqrt()).min(1.0 / s_max.sqrt());
    let beta = one_b - 1.0;
    let (a1, b1) = (one_b * s_max, c_min / one_b);
    let (a2, b2) = (one_b * c_max, u_min / one_b);
    let (mut mu1, lambda2) = place(a1, b1);
    let (mu2, mut lambda3) = place(a2, b2);
    if mu1 >= 1.0 {
        mu1 = (a1 * lambda2.min(1.0)).sqrt();
    }
    if lambda3 <= 1.0 {
        lambda3 = (b2 * mu2.max(1.0)).sqrt();
    }
    let gamma = (mu2 / lambda3).max(mu1 / lambda2);
    let mut c = ConeConstants {
        beta,
        gamma,
        theta,
        mu1,
        lambda2,
        mu2,
        lambda3,
        big_l: 1.0,
        small_l: 1.0,
        epsilon: 0.0,
        anchors: [s_max, c_min, c_max, u_min],
    };
    let eps = epsilon_budget(&c);
    c.epsilon = eps;
    c.big_l = 1.0 + eps;
    c.small_l = 1.0 - eps;
    Ok(c)
}

pub fn choose_constants(frame: &SpectrumFrame, kind: SplittingKind) -> Result<ConeConstants> {
    let m = frame.moduli();
    let sp = frame.splitting(kind);
    let max_of = |ix: &[usize]| ix.iter().map(|&i| m[i]).fold(0.0, f64::max);
    let min_of = |ix: &[usize]| ix.iter().map(|&i| m[i]).fold(f64::INFINITY, f64::min);
    constants_from_moduli(max_of(&sp.stable), min_of(&sp.center), max_of(&sp.center), min_of(&sp.unstable))
}

/// Largest ε such that ‖Dg − I‖ < ε keeps the rate chain and re-includes the γβ cone in the β cone.
pub fn epsilon_budget(c: &ConeConstants) -> f64 {
    let s = (1.0 + (c.gamma * c.beta).powi(2)).sqrt();
    let cone = c.beta * (1.0 - c.gamma) / (s * (1.0 + c.beta));
    let ratio = (1.0 - c.gamma) / (1.0 + c.gamma);
    let low = 1.0 / c.mu1 - 1.0;
    let high = 1.0 - 1.0 / c.lambda3;
    // strict inequalities: stay just inside the supremum
    cone.min(ratio).min(low).min(high).max(0.0) * (1.0 - 1e-9)
}

/// C¹ budget recorded with composite models (E-splitting constants).
pub fn model_budget(frame: &SpectrumFrame) -> Result<f64> {
    Ok(choose_constants(frame, SplittingKind::E)?.epsilon)
}

#[derive(Clone, Debug)]
pub struct ConeSpec {
    pub indices: Vec<usize>,
    pub beta: f64,
    /// torus coordinates → adapted coordinates
    pub to_adapted: Mat4,
}

impl ConeSpec {
    pub fn new(family: ConeFamily, frame: &SpectrumFrame, kind: SplittingKind, beta: f64) -> Self {
        Self {
            indices: family.indices(frame.splitting(kind)),
            beta,
            to_adapted: frame.basis_inv(),
        }
    }
}

/// (‖v_E‖, ‖v_F‖) of an adapted vector.
pub fn split_norms(indices: &[usize], y: &Vec4) -> (f64, f64) {
    let mut e = 0.0;
    let mut f = 0.0;
    for i in 0..4 {
        if indices.contains(&i) {
            e += y[i] * y[i];
        } else {
            f += y[i] * y[i];
        }
    }
    (e.sqrt(), f.sqrt())
}

/// ‖v_F‖ − β‖v_E‖ in the adapted metric; negative means strictly inside.
pub fn cone_contains(spec: &ConeSpec, v: &TangentVector<4>) -> (bool, f64) {
    let y = spec.to_adapted * Vec4::from(v.dir);
    if y.norm() == 0.0 {
        return (true, 0.0);
    }
    let (e, f) = split_norms(&spec.indices, &y);
    let m = f - spec.beta * e;
    (m <= 0.0, m)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: ConeFamily,
    pub angle: f64,
    /// max over samples of (image angle − angle); ≤ 0 passes
    pub worst_inclusion: f64,
    /// max over samples of the worst image angle relative to the input angle
    pub worst_angle_ratio: f64,
    /// min over samples of (growth − required rate); > 0 passes
    pub worst_rate: f64,
    pub required_rate: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub family: ConeFamily,
    pub point: [f64; 4],
    pub vector: [f64; 4],
    pub check: String,
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeVerdict {
    pub splitting: SplittingKind,
    pub constants: ConeConstants,
    pub samples: usize,
    pub families: Vec<FamilyReport>,
    pub pass: bool,
    pub witness: Option<Witness>,
    pub note: String,
}

#[derive(Clone, Copy, Debug)]
pub struct SamplePlan {
    pub samples: usize,
    pub seed: u64,
}

fn tangent_samples(indices: &[usize], angle: f64, i: u64) -> Vec4 {
    let e_dim = indices.len();
    let f_idx: Vec<usize> = (0..4).filter(|k| !indices.contains(k)).collect();
    let h = halton(i, 5, 4);
    let e_dir = if e_dim == 1 { vec![1.0] } else { cube_to_sphere(&h[..e_dim]) };
    let f_dir = if f_idx.len() == 1 {
        vec![if h[3] < 0.5 { 1.0 } else { -1.0 }]
    } else {
        cube_to_sphere(&h[e_dim..e_dim + f_idx.len()])
    };
    // boundary most of the time, interior levels for sanity
    let level = match i % 8 {
        5 => 0.25,
        6 => 0.5,
        7 => 0.75,
        _ => 1.0,
    };
    let mut v = Vec4::zeros();
    for (k, &ix) in indices.iter().enumerate() {
        v[ix] = e_dir[k];
    }
    for (k, &ix) in f_idx.iter().enumerate() {
        v[ix] = f_dir[k] * angle * level;
    }
    v
}

// exact worst-case directions: eigen-axis pairs on the boundary
fn axis_pairs(indices: &[usize], angle: f64) -> Vec<Vec4> {
    let mut out = vec![];
    for &e in indices {
        for f in (0..4).filter(|k| !indices.contains(k)) {
            for s in [1.0, -1.0] {
                let mut v = Vec4::zeros();
                v[e] = 1.0;
                v[f] = s * angle;
                out.push(v);
            }
        }
    }
    out
}

struct Check {
    incl: f64,
    ratio: f64,
    rate: f64,
    x: Vec4,
    v: Vec4,
}

pub fn verify_invariance(
    model: &DiffeoModel,
    constants: &ConeConstants,
    kind: SplittingKind,
    plan: SamplePlan,
) -> ConeVerdict {
    let sp = model.frame.splitting(kind).clone();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let shift: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
    let per_family = (plan.samples / 4).max(1);
    let basis = *model.basis();
    let basis_inv = *model.basis_inv();
    let c = *constants;
    // part of the budget goes to the supports of local factors, which uniform points miss
    let probes: Vec<Vec4> = model
        .factors
        .iter()
        .flat_map(|f| f.probe_points(per_family / (4 * model.factors.len().max(1))))
        .collect();
    let mut families = vec![];
    let mut witness: Option<Witness> = None;
    for fam in ConeFamily::ALL {
        let idx = fam.indices(&sp);
        let forward = fam.is_forward();
        let angle = if forward { c.gamma * c.beta } else { c.beta };
        let required = match fam {
            ConeFamily::Cu => c.small_l * c.lambda2,
            ConeFamily::U => c.small_l * c.lambda3,
            ConeFamily::S => 1.0 / (c.big_l * c.mu1),
            ConeFamily::Cs => 1.0 / (c.big_l * c.mu2),
        };
        let pairs = axis_pairs(&idx, angle);
        let checks: Vec<Check> = (0..per_family as u64)
            .into_par_iter()
            .map(|i| {
                let x = match probes.get(i as usize) {
                    Some(p) => *p,
                    None => {
                        let h = halton(i, 4, 0);
                        Vec4::from_fn(|k, _| frac(h[k] + shift[k]))
                    }
                };
                let m = if forward {
                    basis_inv * model.differential(&x) * basis
                } else {
                    let d = model.differential(&x);
                    basis_inv * d.try_inverse().unwrap_or_else(Mat4::zeros) * basis
                };
                let mut vs = vec![tangent_samples(&idx, angle, i)];
                if (i as usize) < 16 {
                    vs.extend(pairs.iter().cloned());
                }
                let mut worst = Check {
                    incl: f64::NEG_INFINITY,
                    ratio: 0.0,
                    rate: f64::INFINITY,
                    x,
                    v: vs[0],
                };
                for v in vs {
                    let w = m * v;
                    let (e, f) = split_norms(&idx, &w);
                    let (ve, vf) = split_norms(&idx, &v);
                    let img = f / e;
                    let incl = img - angle;
                    let growth = w.norm() / v.norm();
                    if incl > worst.incl {
                        worst.incl = incl;
                        worst.x = x;
                        worst.v = v;
                    }
                    if vf > 0.5 * angle * ve {
                        worst.ratio = worst.ratio.max(img / (vf / ve));
                    }
                    worst.rate = worst.rate.min(growth - required);
                }
                worst
            })
            .collect();
        let mut rep = FamilyReport {
            family: fam,
            angle,
            worst_inclusion: f64::NEG_INFINITY,
            worst_angle_ratio: 0.0,
            worst_rate: f64::INFINITY,
            required_rate: required,
            pass: true,
        };
        let mut wit: Option<Witness> = None;
        for ch in &checks {
            rep.worst_angle_ratio = rep.worst_angle_ratio.max(ch.ratio);
            rep.worst_rate = rep.worst_rate.min(ch.rate);
            if ch.incl > rep.worst_inclusion {
                rep.worst_inclusion = ch.incl;
                if ch.incl > 0.0 {
                    wit = Some(Witness {
                        family: fam,
                        point: ch.x.into(),
                        vector: (basis * ch.v).into(),
                        check: "inclusion".into(),
                        margin: ch.incl,
                    });
                }
            }
            if ch.rate <= 0.0 && wit.is_none() {
                wit = Some(Witness {
                    family: fam,
                    point: ch.x.into(),
                    vector: (basis * ch.v).into(),
                    check: "rate".into(),
                    margin: ch.rate,
                });
            }
        }
        rep.pass = rep.worst_inclusion <= 0.0 && rep.worst_rate > 0.0;
        if witness.is_none() {
            witness = wit;
        }
        families.push(rep);
    }
    let pass = families.iter().all(|f| f.pass);
    ConeVerdict {
        splitting: kind,
        constants: c,
        samples: per_family * 4,
        families,
        pass,
        witness,
        note: "sampled verification, not an interval-arithmetic proof".into(),
    }
}

/// Orthonormal basis (columns) of the span of `m`'s columns.
fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// Angular width of a set of vectors about a subspace: max ‖v⊥‖/‖v∥‖.
fn width_about(q: &DMatrix<f64>, vs: &[Vec4]) -> f64 {
    let mut w: f64 = 0.0;
    for v in vs {
        let dv = DMatrix::from_column_slice(4, 1, v.as_slice());
        let par = q * (q.transpose() * &dv);
        let perp = &dv - &par;
        w = w.max(perp.norm() / par.norm());
    }
    w
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleEstimate {
    pub family: ConeFamily,
    /// orthonormal adapted-coordinate basis
    pub basis: Vec<[f64; 4]>,
    pub widths: Vec<f64>,
    pub initial_width: f64,
}

/// Adapted orthonormal basis of the continued bundle plus per-step cone widths.
pub fn continue_bundle(
    model: &DiffeoModel,
    family: ConeFamily,
    kind: SplittingKind,
    x: &Vec4,
    k: usize,
    beta: f64,
) -> BundleEstimate {
    let idx = family.indices(model.frame.splitting(kind));
    let bi = *model.basis_inv();
    let b = *model.basis();
    // orbit points, nearest to x first
    let mut mats: Vec<Mat4> = Vec::with_capacity(k);
    if family.is_forward() {
        let mut y = *x;
        for _ in 0..k {
            y = model.step_back(&y);
            mats.push(bi * model.differential(&y) * b);
        }
    } else {
        let mut y = *x;
        for _ in 0..k {
            let d = model.differential(&y);
            mats.push(bi * d.try_inverse().unwrap_or_else(Mat4::zeros) * b);
            y = model.step(&y);
        }
    }
    let mut sub = DMatrix::<f64>::zeros(4, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        sub[(i, c)] = 1.0;
    }
    let mut edges = axis_pairs(&idx, beta);
    let initial = beta;
    let mut widths = vec![];
    // apply from the far end of the orbit towards x
    for m in mats.iter().rev() {
        let dm = DMatrix::from_column_slice(4, 4, m.as_slice());
        sub = orthonormalize(&(&dm * &sub));
        for e in edges.iter_mut() {
            let w = m * *e;
            *e = w / w.norm();
        }
        widths.push(width_about(&sub, &edges));
    }
    let basis = (0..sub.ncols()).map(|c| [sub[(0, c)], sub[(1, c)], sub[(2, c)], sub[(3, c)]]).collect();
    BundleEstimate {
        family,
        basis,
        widths,
        initial_width: initial,
    }
}

pub fn basis_matrix(b: &[[f64; 4]]) -> DMatrix<f64> {
    DMatrix::from_fn(4, b.len(), |i, j| b[j][i])
}

/// Orthonormal basis of the intersection of two subspaces given by orthonormal columns.
pub fn intersect(u: &DMatrix<f64>, s: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let (a, b) = (u.ncols(), s.ncols());
    let mut m = DMatrix::<f64>::zeros(4, a + b);
    m.view_mut((0, 0), (4, a)).copy_from(u);
    m.view_mut((0, a), (4, b)).copy_from(&(-s));
    let g = m.transpose() * &m;
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..a + b).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut out = DMatrix::<f64>::zeros(4, dim);
    for (c, &o) in order.iter().take(dim).enumerate() {
        let coef = eig.eigenvectors.column(o);
        let v = u * coef.rows(0, a);
        out.set_column(c, &v);
    }
    orthonormalize(&out)
}

/// Center bundle of the model at x (adapted orthonormal columns), as cu ∩ cs.
pub fn center_bundle(model: &DiffeoModel, kind: SplittingKind, x: &Vec4, k: usize) -> DMatrix<f64> {
    let c = choose_constants(&model.frame, kind).map(|c| c.beta).unwrap_or(0.1);
    let cu = continue_bundle(model, ConeFamily::Cu, kind, x, k, c);
    let cs = continue_bundle(model, ConeFamily::Cs, kind, x, k, c);
    let dim = model.frame.splitting(kind).center_dim();
    intersect(&basis_matrix(&cu.basis), &basis_matrix(&cs.basis), dim)
}

/// Largest singular value of an adapted differential restricted to the column span of q.
pub fn restricted_norm(m: &Mat4, q: &DMatrix<f64>) -> f64 {
    let dm = DMatrix::from_column_slice(4, 4, m.as_slice());
    let img = dm * q;
    let g = img.transpose() * img;
    g.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max).sqrt()
}

/// |det| of the restriction, measured against the image subspace (area/volume ratio).
pub fn restricted_jacobian(m: &Mat4, q: &DMatrix<f64>) -> f64 {
    let dm = DMatrix::from_column_slice(4, 4, m.as_slice());
    let img = dm * q;
    (img.transpose() * img).determinant().abs().sqrt()
}

/// Sweep the amplitude of a destabilizing shear by bisection until verification fails.
pub fn breaking_shear_amplitude(
    a: &crate::linear::IntegerMatrix,
    kind: SplittingKind,
    plan: SamplePlan,
) -> Result<(f64, ConeVerdict)> {
    let make = |amp: f64| -> Result<DiffeoModel> {
        let f = crate::perturb::domination_breaking_shear(a, amp)?;
        crate::model::compose_da(a, vec![f])
    };
    let frame = crate::linear::solve_spectrum(a)?;
    let c = choose_constants(&frame, kind)?;
    let mut lo = 0.0;
    let mut hi = 0.4;
    let mut fail = None;
    for _ in 0..40 {
        let m = make(hi)?;
        let v = verify_invariance(&m, &c, kind, plan);
        if !v.pass {
            fail = Some(v);
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    let mut fail = fail.ok_or_else(|| LabError::Precondition("no breaking amplitude found".into()))?;
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        let v = verify_invariance(&make(mid)?, &c, kind, plan);
        if v.pass {
            lo = mid;
        } else {
            hi = mid;
            fail = v;
        }
    }
    Ok((hi, fail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{build_an, build_theorem_c_matrix, solve_spectrum};
    use crate::model::compose_da;
    use proptest::prelude::*;

    fn check_invariants(c: &ConeConstants) {
        let [s, c1, cj, u] = c.anchors;
        let b = 1.0 + c.beta;
        assert!(1.0 < b * b && b * b < c.theta);
        assert!(b * s < c.mu1);
        assert!(c.mu1 < c.lambda2);
        assert!(c.lambda2 < c1 / b);
        assert!(c1 / b <= b * cj);
        assert!(b * cj < c.mu2);
        assert!(c.mu2 < c.lambda3);
        assert!(c.lambda3 < u / b);
        assert!(c.mu1 < 1.0 && 1.0 < c.lambda3);
        assert!(c.gamma < 1.0);
        assert!((c.gamma - (c.mu2 / c.lambda3).max(c.mu1 / c.lambda2)).abs() < 1e-15);
        assert!(c.big_l < 1.0 / c.mu1);
        assert!(c.small_l > 1.0 / c.lambda3);
        assert!(c.small_l / c.big_l > c.gamma);
        assert!(c.epsilon > 0.0);
    }

    #[test]
    fn theorem_c_constants() {
        let f = solve_spectrum(&build_theorem_c_matrix()).unwrap();
        let c = choose_constants(&f, SplittingKind::E).unwrap();
        check_invariants(&c);
        assert!((c.theta - 1.911477).abs() < 1e-5);
        assert!((c.beta - 0.175827).abs() < 1e-5);
        assert!(c.beta < c.theta.sqrt() - 1.0);
        // regression value of the budget
        assert!((c.epsilon - 0.0221139).abs() < 1e-6, "eps {}", c.epsilon);
        let (l, m1, l2, m2, l3, big) = (c.small_l, c.mu1, c.lambda2, c.mu2, c.lambda3, c.big_l);
        assert!(0.0 < big * m1 && big * m1 < l * l2 && l * l2 <= big * m2 && big * m2 < l * l3);
        assert!(big * m1 < 1.0 && 1.0 < l * l3);
    }

    #[test]
    fn an100_f_splitting_theta() {
        let f = solve_spectrum(&build_an(100).unwrap()).unwrap();
        let c = choose_constants(&f, SplittingKind::F).unwrap();
        let m = f.moduli();
        let expect = (m[1] / m[0]).min(m[2] / m[1]);
        assert!((c.theta - expect).abs() < 1e-12);
        assert!((m[1] / m[0] - 1.00508929 / 3.32600759e-3).abs() < 1e-4);
        assert!((m[2] / m[1] - 2.976233).abs() < 1e-5);
        check_invariants(&c);
    }

    #[test]
    fn theta_at_most_one_is_rejected() {
        assert!(matches!(constants_from_moduli(0.5, 0.5, 2.0, 3.0), Err(LabError::NotPartiallyHyperbolic(_))));
        assert!(constants_from_moduli(0.5, 0.6, 2.0, 1.5).is_err());
    }

    #[test]
    fn beta_collapses_as_theta_approaches_one() {
        let c = constants_from_moduli(0.5, 0.5 * 1.0001, 2.0, 2.0 * 1.0001).unwrap();
        assert!(c.beta < 1e-4);
        assert!(c.epsilon < 1e-4);
    }

    #[test]
    fn membership_examples() {
        let f = solve_spectrum(&build_an(100).unwrap()).unwrap();
        let spec = ConeSpec::new(ConeFamily::Cu, &f, SplittingKind::E, 0.3);
        let b = f.basis();
        let tv = |y: Vec4| TangentVector {
            base: crate::torus::LiftPoint::new([0.0; 4]),
            dir: (b * y).into(),
        };
        let (inside, m) = cone_contains(&spec, &tv(Vec4::new(0.0, 2.0, 0.0, 0.0)));
        assert!(inside && (m + 0.6).abs() < 1e-12);
        let (inside, m) = cone_contains(&spec, &tv(Vec4::new(1.5, 0.0, 0.0, 0.0)));
        assert!(!inside && (m - 1.5).abs() < 1e-12);
        let (_, m) = cone_contains(&spec, &tv(Vec4::new(0.3 * 2.0, 0.0, 2.0, 0.0)));
        assert!(m.abs() < 1e-12);
        assert_eq!(cone_contains(&spec, &tv(Vec4::zeros())), (true, 0.0));
    }

    #[test]
    fn linear_model_passes_with_closed_form_angles() {
        for a in [build_an(100).unwrap(), build_theorem_c_matrix()] {
            let m = compose_da(&a, vec![]).unwrap();
            for kind in [SplittingKind::E, SplittingKind::F] {
                let c = choose_constants(&m.frame, kind).unwrap();
                let v = verify_invariance(&m, &c, kind, SamplePlan { samples: 2000, seed: 1 });
                assert!(v.pass, "{kind:?} {:?}", v.families);
                let mo = m.frame.moduli();
                let sp = m.frame.splitting(kind);
                for r in &v.families {
                    let idx = r.family.indices(sp);
                    let inside: Vec<f64> = idx.iter().map(|&i| mo[i]).collect();
                    let outside: Vec<f64> = (0..4).filter(|i| !idx.contains(i)).map(|i| mo[i]).collect();
                    // forward: worst = max outside / min inside; backward: inverse rates
                    let expect = if r.family.is_forward() {
                        outside.iter().cloned().fold(0.0, f64::max) / inside.iter().cloned().fold(f64::INFINITY, f64::min)
                    } else {
                        inside.iter().cloned().fold(0.0, f64::max) / outside.iter().cloned().fold(f64::INFINITY, f64::min)
                    };
                    assert!((r.worst_angle_ratio - expect).abs() < 1e-10 * expect.max(1.0), "{:?} {} vs {}", r.family, r.worst_angle_ratio, expect);
                    let bound = if r.family.is_forward() {
                        if r.family == ConeFamily::U { c.mu2 / c.lambda3 } else { c.mu1 / c.lambda2 }
                    } else if r.family == ConeFamily::S {
                        c.mu1 / c.lambda2
                    } else {
                        c.mu2 / c.lambda3
                    };
                    assert!(r.worst_angle_ratio <= bound + 1e-12);
                }
            }
        }
    }

    #[test]
    fn continued_bundle_of_linear_model_is_eigenspace() {
        let a = build_an(100).unwrap();
        let m = compose_da(&a, vec![]).unwrap();
        let x = Vec4::new(0.1, 0.2, 0.3, 0.4);
        for fam in ConeFamily::ALL {
            let est = continue_bundle(&m, fam, SplittingKind::E, &x, 5, 0.3);
            let q = basis_matrix(&est.basis);
            let idx = fam.indices(&m.frame.splitting_e);
            for i in 0..4 {
                let row: f64 = (0..q.ncols()).map(|c| q[(i, c)] * q[(i, c)]).sum();
                let expect = if idx.contains(&i) { 1.0 } else { 0.0 };
                assert!((row - expect).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn constants_satisfy_chain(s in 0.01f64..0.95, r1 in 1.05f64..50.0, r2 in 1.0f64..5.0, r3 in 1.05f64..50.0) {
            let c1 = s * r1;
            let cj = c1 * r2;
            let u = (cj * r3).max(1.0001 * cj).max(1.01);
            if let Ok(c) = constants_from_moduli(s, c1, cj, u) {
                check_invariants(&c);
            } else {
                prop_assert!((c1 / s).min(u / cj) <= 1.0 || u <= 1.0);
            }
        }
    }
}
