//! Constructors for the center-Jacobian booster, the local Franks-type bump and its
//! rescalings, nested balls around the fixed point, and the target differential.

use crate::bump::{BumpProfile, Factor, LocalizedFlow, SlabTwist, WaveTwist};
use crate::cones::{center_bundle, restricted_norm};
use crate::error::{LabError, Result};
use crate::linear::{real_roots, solve_spectrum, IntegerMatrix, SpectrumFrame, SplittingKind};
use crate::matfun::{logm, op_norm, Mat4, Vec4};
use crate::model::{compose_da, DiffeoModel};
use crate::sampling::halton4;
use crate::torus::{torus_distance, TorusPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Wave twist H(x) = x + V a Ψ(k·x): the adapted shear direction a is built from couplings so that
/// a·(Vᵀk) = 0. `center_coupling` feeds the wave into the strong center direction, `weak_coupling`
/// into the weak one, and `transverse_coupling` balances them between the stable and unstable directions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoosterDesign {
    pub k: [i64; 4],
    pub center_coupling: f64,
    pub transverse_coupling: f64,
    #[serde(default)]
    pub weak_coupling: f64,
}

impl BoosterDesign {
    pub fn an_default() -> Self {
        Self {
            k: [1, 0, -2, 1],
            center_coupling: 0.006,
            transverse_coupling: 0.1,
            weak_coupling: 0.0,
        }
    }

    /// Transverse = center + weak leaves no stable component in the shear direction; k is nearly orthogonal to Eˢ.
    pub fn theorem_c_default() -> Self {
        Self {
            k: [3, 2, 0, 1],
            center_coupling: 0.01,
            transverse_coupling: 0.02,
            weak_coupling: 0.01,
        }
    }

    pub fn reversed(&self) -> Self {
        Self {
            center_coupling: -self.center_coupling,
            ..*self
        }
    }

    /// Adapted shear coefficients (s, c1, c2, u) for the given frame.
    pub fn adapted_direction(&self, frame: &SpectrumFrame, strength: f64) -> Result<[f64; 4]> {
        let b = wave_covector(frame, &self.k);
        let (q, x, p) = (
            self.center_coupling * strength,
            self.transverse_coupling * strength,
            self.weak_coupling * strength,
        );
        let rest = x - q - p;
        for (i, name, used) in [(0, "stable", rest != 0.0), (1, "weak center", p != 0.0), (2, "center", true), (3, "unstable", true)] {
            if used && b[i].abs() < 1e-6 {
                return Err(LabError::InvalidInput(format!("wave vector nearly orthogonal to the {name} direction")));
            }
        }
        let a_s = if rest == 0.0 { 0.0 } else { rest / b[0] };
        let a_w = if p == 0.0 { 0.0 } else { p / b[1] };
        let mut a = [a_s, a_w, q / b[2], -x / b[3]];
        // remove round-off along b
        let ab: f64 = (0..4).map(|i| a[i] * b[i]).sum();
        let bb: f64 = b.iter().map(|v| v * v).sum();
        for i in 0..4 {
            a[i] -= ab / bb * b[i];
        }
        Ok(a)
    }
}

/// b = Vᵀk: the wave covector in adapted coordinates.
pub fn wave_covector(frame: &SpectrumFrame, k: &[i64; 4]) -> [f64; 4] {
    let kv = Vec4::new(k[0] as f64, k[1] as f64, k[2] as f64, k[3] as f64);
    (frame.basis().transpose() * kv).into()
}

fn wave_from_adapted(frame: &SpectrumFrame, k: [i64; 4], a: [f64; 4], profile: BumpProfile, site: [f64; 4]) -> Result<WaveTwist> {
    let w = frame.basis() * Vec4::from(a);
    let mut w: [f64; 4] = w.into();
    // exact orthogonality to the integer wave vector
    let kk: f64 = k.iter().map(|&c| (c * c) as f64).sum();
    let kw: f64 = (0..4).map(|i| k[i] as f64 * w[i]).sum();
    for i in 0..4 {
        w[i] -= kw / kk * k[i] as f64;
    }
    WaveTwist::new(k, w, site, profile)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapReport {
    pub center_e_norm: f64,
    pub center_e_cap: f64,
    pub center_f_norm: f64,
    pub center_f_cap: f64,
    pub pass: bool,
}

/// Sampled sup of ‖Dg|Eᶜ_g‖ and ‖Dg|Fᶜ_g‖ (adapted metric, bundles by cone continuation).
pub fn center_caps(model: &DiffeoModel, samples: usize) -> CapReport {
    let alpha = model.frame.alpha_n;
    let mut e_norm: f64 = 0.0;
    let mut f_norm: f64 = 0.0;
    let mut pts = vec![Vec4::zeros()];
    pts.extend((0..samples as u64).map(|i| Vec4::from(halton4(i))));
    for x in pts {
        let m = model.adapted_differential(&x);
        let qe = center_bundle(model, SplittingKind::E, &x, 12);
        let qf = center_bundle(model, SplittingKind::F, &x, 12);
        e_norm = e_norm.max(restricted_norm(&m, &qe));
        f_norm = f_norm.max(restricted_norm(&m, &qf));
    }
    let (ec, fc) = (3.0 + 3.0 * alpha, 1.0 + 2.0 * alpha);
    CapReport {
        center_e_norm: e_norm,
        center_e_cap: ec,
        center_f_norm: f_norm,
        center_f_cap: fc,
        pass: e_norm < ec && f_norm < fc,
    }
}

/// Booster factor H with the given design; errors when A∘H breaks the center caps.
pub fn make_booster_with(
    a: &IntegerMatrix,
    design: &BoosterDesign,
    strength: f64,
    support: BumpProfile,
    site: &TorusPoint<4>,
) -> Result<(Factor, CapReport)> {
    let frame = solve_spectrum(a)?;
    let dir = design.adapted_direction(&frame, strength)?;
    let h = Factor::Wave(wave_from_adapted(&frame, design.k, dir, support, *site.coords())?);
    let model = compose_da(a, vec![h.clone()])?;
    let caps = center_caps(&model, 64);
    if caps.center_e_norm >= caps.center_e_cap {
        return Err(LabError::ConstraintViolation {
            what: "center norm on E^c".into(),
            measured: caps.center_e_norm,
            cap: caps.center_e_cap,
        });
    }
    if caps.center_f_norm >= caps.center_f_cap {
        return Err(LabError::ConstraintViolation {
            what: "center norm on F^c".into(),
            measured: caps.center_f_norm,
            cap: caps.center_f_cap,
        });
    }
    Ok((h, caps))
}

pub fn make_center_booster(a: &IntegerMatrix, strength: f64, support: BumpProfile, site: &TorusPoint<4>) -> Result<Factor> {
    let design = if a.is_shift_companion() {
        BoosterDesign::an_default()
    } else {
        BoosterDesign::theorem_c_default()
    };
    make_booster_with(a, &design, strength, support, site).map(|r| r.0)
}

/// Wave twist leaking the unstable direction into the weak center; large amplitudes break domination.
pub fn domination_breaking_shear(a: &IntegerMatrix, amplitude: f64) -> Result<Factor> {
    let frame = solve_spectrum(a)?;
    let k = [1, 0, -2, 1];
    let b = wave_covector(&frame, &k);
    let n = (b[0] * b[0] + b[1] * b[1]).sqrt();
    let dir = [amplitude * b[1] / n, -amplitude * b[0] / n, 0.0, 0.0];
    Ok(Factor::Wave(wave_from_adapted(&frame, k, dir, BumpProfile::new(1.0 / 3.0, 2)?, [0.0; 4])?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    Twist,
    Flow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpOptions {
    pub center: [f64; 4],
    /// support radius (flow: in the frame coordinates; twist: slab half-width)
    pub radius: f64,
    pub order: u32,
    pub realization: Realization,
    pub steps: usize,
}

impl Default for BumpOptions {
    fn default() -> Self {
        Self {
            center: [0.0; 4],
            radius: 0.2,
            order: 2,
            realization: Realization::Twist,
            steps: 32,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FranksBump {
    pub realization: Realization,
    pub target: Mat4,
    pub center: [f64; 4],
    /// outermost first
    pub factors: Vec<Factor>,
    /// sampled sup ‖Dh − I‖ in the frame metric
    pub c1_distance: f64,
}

impl FranksBump {
    pub fn apply(&self, x: &Vec4) -> Vec4 {
        self.factors.iter().rev().fold(*x, |y, f| f.apply(&y))
    }

    pub fn differential(&self, x: &Vec4) -> Mat4 {
        let mut y = *x;
        let mut d = Mat4::identity();
        for f in self.factors.iter().rev() {
            let (yn, df) = f.apply_with_differential(&y);
            d = df * d;
            y = yn;
        }
        d
    }
}

// factors whose composition has differential `m` at the center: x_active += form·(x − p)
fn transvection(active: usize, form: [f64; 4], center: [f64; 4], p: BumpProfile) -> Result<Option<Factor>> {
    if form.iter().all(|&c| c == 0.0) {
        return Ok(None);
    }
    Ok(Some(Factor::Slab(SlabTwist::new(active, form, center, p)?)))
}

fn twist_factors(target: &Mat4, center: [f64; 4], p: BumpProfile) -> Result<Vec<Factor>> {
    // Doolittle without pivoting: target = L·U'
    let mut l = Mat4::identity();
    let mut u = *target;
    for j in 0..4 {
        if u[(j, j)].abs() < 1e-8 {
            return Err(LabError::OutOfNeighborhood {
                distance: (target - Mat4::identity()).abs().max(),
                limit: 0.5,
            });
        }
        for i in j + 1..4 {
            let f = u[(i, j)] / u[(j, j)];
            l[(i, j)] = f;
            for c in 0..4 {
                u[(i, c)] -= f * u[(j, c)];
            }
        }
    }
    let d: Vec<f64> = (0..4).map(|i| u[(i, i)]).collect();
    if d.iter().any(|&x| x <= 0.0) {
        return Err(LabError::OutOfNeighborhood {
            distance: (target - Mat4::identity()).abs().max(),
            limit: 0.5,
        });
    }
    let mut unit_u = u;
    for i in 0..4 {
        for c in 0..4 {
            unit_u[(i, c)] /= d[i];
        }
    }
    let mut out = vec![];
    // L = R1·R2·R3 (row i adds Σ_{j<i} l_ij x_j)
    for i in 1..4 {
        let mut form = [0.0; 4];
        for j in 0..i {
            form[j] = l[(i, j)];
        }
        out.extend(transvection(i, form, center, p)?);
    }
    // D = Π_k diag(.., c_k, 1/c_k, ..) on pairs (k, k+1) with c_k = d_0⋯d_k
    let mut acc = 1.0;
    for k in 0..3 {
        acc *= d[k];
        let c = acc;
        let delta = c - 1.0;
        if delta == 0.0 {
            continue;
        }
        // diag(c, 1/c) = L(−z/c)·U(y)·L(z)·U(−y/c) with y·z = c − 1
        let y = delta.abs().sqrt();
        let z = delta.signum() * y;
        let lo = |coef: f64| {
            let mut f = [0.0; 4];
            f[k] = coef;
            (k + 1, f)
        };
        let up = |coef: f64| {
            let mut f = [0.0; 4];
            f[k + 1] = coef;
            (k, f)
        };
        for (act, form) in [lo(-z / c), up(y), lo(z), up(-y / c)] {
            out.extend(transvection(act, form, center, p)?);
        }
    }
    // U = R2·R1·R0 (row i adds Σ_{j>i} u_ij x_j), applied rows 0, 1, 2
    for i in (0..3).rev() {
        let mut form = [0.0; 4];
        for j in i + 1..4 {
            form[j] = unit_u[(i, j)];
        }
        out.extend(transvection(i, form, center, p)?);
    }
    Ok(out)
}

/// Local volume-preserving h with h(p) = p, Dh(p) = target, h = Id off a small support.
/// `frame` defines the metric (and, for the flow, the round support ball).
pub fn make_franks_bump(target: &Mat4, rho_cap: f64, frame: &Mat4, opts: &BumpOptions) -> Result<FranksBump> {
    let det = target.determinant();
    if (det - 1.0).abs() > 1e-12 {
        return Err(LabError::InvalidInput(format!("target determinant {det} is not 1")));
    }
    let profile = BumpProfile::new(opts.radius, opts.order)?;
    let id = Mat4::identity();
    let frame_inv = frame
        .try_inverse()
        .ok_or_else(|| LabError::InvalidInput("singular frame".into()))?;
    let dist = op_norm(&(frame_inv * (target - id) * frame));
    let factors = if (target - id).abs().max() == 0.0 {
        vec![]
    } else {
        match opts.realization {
            Realization::Flow => {
                let b = logm(target)?;
                // remove the trace left by round-off in det(target)
                let b = b - id * (b.trace() / 4.0);
                vec![Factor::Flow(LocalizedFlow::new(opts.center, b, *frame, profile, opts.steps)?)]
            }
            Realization::Twist => twist_factors(target, opts.center, profile)?,
        }
    };
    let mut bump = FranksBump {
        realization: opts.realization,
        target: *target,
        center: opts.center,
        factors,
        c1_distance: 0.0,
    };
    let mut worst: f64 = 0.0;
    let probes: Vec<Vec4> = bump.factors.iter().flat_map(|f| f.probe_points(2048)).collect();
    for x in probes {
        worst = worst.max(op_norm(&(frame_inv * (bump.differential(&x) - id) * frame)));
    }
    bump.c1_distance = worst;
    if worst > rho_cap {
        return Err(LabError::OutOfNeighborhood {
            distance: dist,
            limit: rho_cap,
        });
    }
    Ok(bump)
}

/// h_ε(x) = p + ε(h(p + (x − p)/ε) − p): support shrinks by ε, derivatives at p unchanged.
pub fn rescale_bump(h: &FranksBump, eps: f64) -> Result<FranksBump> {
    if !(eps > 0.0) {
        return Err(LabError::InvalidInput(format!("rescale factor {eps}")));
    }
    Ok(FranksBump {
        realization: h.realization,
        target: h.target,
        center: h.center,
        factors: h.factors.iter().map(|f| f.rescaled(eps)).collect::<Result<Vec<_>>>()?,
        c1_distance: h.c1_distance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedBallSystem {
    pub center: [f64; 4],
    pub n: u64,
    /// radii[0] = ε, radii[j] = (20n)^{-j} radii[j-1]
    pub radii: Vec<f64>,
}

pub fn nested_balls(p: &TorusPoint<4>, eps: f64, n: u64, depth: usize) -> Result<NestedBallSystem> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(LabError::InvalidInput(format!("base radius {eps} must lie in (0, 1/2)")));
    }
    let mut radii = vec![eps];
    let base = 20.0 * n as f64;
    for j in 1..=depth {
        let prev = radii[j - 1];
        radii.push(prev * base.powi(-(j as i32)));
    }
    Ok(NestedBallSystem {
        center: *p.coords(),
        n,
        radii,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReturnVerdict {
    pub j: usize,
    pub pass: bool,
    pub worst_margin: f64,
    pub counterexample: Option<([f64; 4], i64)>,
    pub lipschitz_max: f64,
    pub lipschitz_inv_max: f64,
    pub lipschitz_pass: bool,
}

/// Samples x just outside V_{j−1} and checks g^k(x) ∉ V_j for 0 < |k| ≤ j; also samples ‖Dg‖, ‖Dg⁻¹‖ ≤ 20n.
pub fn check_return_times(model: &DiffeoModel, balls: &NestedBallSystem, j: usize, samples: usize, seed: u64) -> Result<ReturnVerdict> {
    let cap = 20.0 * balls.n as f64;
    let mut lip: f64 = 0.0;
    let mut lip_inv: f64 = 0.0;
    for x in model.sample_points() {
        let d = model.differential(&x);
        lip = lip.max(op_norm(&d));
        lip_inv = lip_inv.max(op_norm(&d.try_inverse().unwrap_or_else(|| Mat4::identity() * f64::INFINITY)));
    }
    let mut v = ReturnVerdict {
        j,
        pass: true,
        worst_margin: f64::INFINITY,
        counterexample: None,
        lipschitz_max: lip,
        lipschitz_inv_max: lip_inv,
        lipschitz_pass: lip <= cap && lip_inv <= cap,
    };
    if j == 0 {
        return Ok(v);
    }
    if j >= balls.radii.len() {
        return Err(LabError::InvalidInput(format!("depth {j} beyond the ball system")));
    }
    let outer = balls.radii[j - 1];
    let inner = balls.radii[j];
    let p = TorusPoint::new(balls.center)?;
    let c = Vec4::from(balls.center);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let mut dir = Vec4::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0);
        while dir.norm() < 1e-3 {
            dir = Vec4::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0);
        }
        let r = outer * (1.0 + rng.gen::<f64>());
        let x0 = c + dir / dir.norm() * r;
        for sign in [1i64, -1] {
            let mut x = x0;
            for k in 1..=j as i64 {
                x = if sign > 0 { model.step(&x) } else { model.step_back(&x) };
                let d = torus_distance(&TorusPoint::new(x.into())?, &p);
                let margin = d - inner;
                if margin < v.worst_margin {
                    v.worst_margin = margin;
                }
                if margin <= 0.0 && v.counterexample.is_none() {
                    v.pass = false;
                    v.counterexample = Some((x0.into(), sign * k));
                }
            }
        }
    }
    Ok(v)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetDifferential {
    pub dn: [[f64; 4]; 4],
    /// [Dg(p)]⁻¹ Dₙ
    pub correction: [[f64; 4]; 4],
    /// eigenvalues of Dg(p) by modulus (s, c1, c2, u)
    pub eigenvalues: [f64; 4],
    pub theta_c1: f64,
    pub alpha: f64,
    /// max{|1 − θ/(1−α)|, |1 − (1−α)/θ|}
    pub diagonal_deviation: f64,
    pub deviation_bound_holds: bool,
    /// ‖[Dg(p)]⁻¹Dₙ − I‖ in the adapted metric
    pub correction_distance: f64,
    pub correction_bound_holds: bool,
    eigvecs: [[f64; 4]; 4],
}

fn char_poly_f64(m: &Mat4) -> Vec<f64> {
    // Faddeev-LeVerrier
    let mut c = vec![1.0];
    let mut mk = Mat4::zeros();
    let id = Mat4::identity();
    for k in 1..=4 {
        mk = m * (mk + id * c[k - 1]);
        let ck = -mk.trace() / k as f64;
        c.push(ck);
    }
    c
}

fn null_vec(m: &Mat4, lambda: f64) -> Vec4 {
    let s = (m - Mat4::identity() * lambda).svd(false, true);
    let vt = s.v_t.expect("v_t requested");
    let mut k = 0;
    for i in 1..4 {
        if s.singular_values[i] < s.singular_values[k] {
            k = i;
        }
    }
    let v = Vec4::new(vt[(k, 0)], vt[(k, 1)], vt[(k, 2)], vt[(k, 3)]);
    v / v.norm()
}

impl TargetDifferential {
    pub fn dn(&self) -> Mat4 {
        crate::bump::rows_to_mat(&self.dn)
    }

    pub fn correction(&self) -> Mat4 {
        crate::bump::rows_to_mat(&self.correction)
    }

    pub fn eigenvectors(&self) -> Mat4 {
        crate::bump::rows_to_mat(&self.eigvecs)
    }

    /// Dₙ in the basis {w_u, w_c2, w_c1, w_s}.
    pub fn in_moving_basis(&self) -> Mat4 {
        let p = self.eigenvectors();
        let perm = Mat4::from_fn(|i, j| if i == 3 - j { 1.0 } else { 0.0 });
        let b = p * perm;
        b.try_inverse().unwrap_or_else(Mat4::zeros) * self.dn() * b
    }
}

pub fn target_differential(dg_p: &Mat4, frame: &SpectrumFrame) -> Result<TargetDifferential> {
    let cp = char_poly_f64(dg_p);
    let mut roots = real_roots(&cp);
    if roots.len() != 4 {
        return Err(LabError::Precondition(format!("Dg(p) has {} real eigenvalues", roots.len())));
    }
    roots.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let alpha = frame.alpha_n;
    let theta = roots[1];
    if !(theta > 1.0 && theta < 1.0 + 2.0 * alpha) {
        return Err(LabError::Precondition(format!(
            "weak center eigenvalue {theta} outside (1, 1 + 2 alpha) = (1, {})",
            1.0 + 2.0 * alpha
        )));
    }
    let mut p = Mat4::zeros();
    for (c, &l) in roots.iter().enumerate() {
        let mut v = null_vec(dg_p, l);
        // align with the frame's eigenvector signs
        let fv = Vec4::from_column_slice(&frame.eigenvectors[c]);
        if v.dot(&fv) < 0.0 {
            v = -v;
        }
        p.set_column(c, &v);
    }
    let pinv = p
        .try_inverse()
        .ok_or_else(|| LabError::Precondition("Dg(p) eigenvectors are dependent".into()))?;
    let f_s = theta / (1.0 - alpha);
    let f_c = (1.0 - alpha) / theta;
    let corr = p * Mat4::from_diagonal(&Vec4::new(f_s, f_c, 1.0, 1.0)) * pinv;
    let dn = dg_p * corr;
    let dev = (1.0 - f_s).abs().max((1.0 - f_c).abs());
    let cd = op_norm(&(frame.basis_inv() * (corr - Mat4::identity()) * frame.basis()));
    Ok(TargetDifferential {
        dn: crate::bump::mat_to_rows(&dn),
        correction: crate::bump::mat_to_rows(&corr),
        eigenvalues: [roots[0], roots[1], roots[2], roots[3]],
        theta_c1: theta,
        alpha,
        diagonal_deviation: dev,
        deviation_bound_holds: dev < 3.5 * alpha,
        correction_distance: cd,
        correction_bound_holds: cd < 4.0 * alpha,
        eigvecs: crate::bump::mat_to_rows(&p),
    })
}

/// Number of eigenvalues of modulus < 1.
pub fn stable_index(m: &Mat4) -> usize {
    real_roots(&char_poly_f64(m)).iter().filter(|r| r.abs() < 1.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{build_an, build_theorem_c_matrix};
    use proptest::prelude::*;
    use rand::Rng;

    fn origin() -> TorusPoint<4> {
        TorusPoint::new([0.0; 4]).unwrap()
    }

    fn booster_profile() -> BumpProfile {
        BumpProfile::new(1.0 / 3.0, 2).unwrap()
    }

    #[test]
    fn zero_strength_booster_is_identity() {
        let a = build_an(100).unwrap();
        let h = make_center_booster(&a, 0.0, booster_profile(), &origin()).unwrap();
        for i in 0..50 {
            let x = Vec4::from(halton4(i));
            assert_eq!(h.apply(&x), x);
        }
    }

    #[test]
    fn booster_respects_caps_and_fixes_origin() {
        let a = build_an(100).unwrap();
        let (h, caps) = make_booster_with(&a, &BoosterDesign::an_default(), 1.0, booster_profile(), &origin()).unwrap();
        assert!(caps.pass);
        assert_eq!(h.apply(&Vec4::zeros()), Vec4::zeros());
        let m = compose_da(&a, vec![h]).unwrap();
        assert!(m.certificates.within_budget, "{:?}", m.certificates);
        assert!(m.certificates.homotopic_to_linear);
    }

    #[test]
    fn oversized_booster_breaks_center_cap() {
        let a = build_an(100).unwrap();
        let r = make_booster_with(&a, &BoosterDesign::an_default(), 2.5, booster_profile(), &origin());
        match r {
            Err(LabError::ConstraintViolation { measured, cap, .. }) => assert!(measured >= cap),
            other => panic!("expected cap violation, got {other:?}"),
        }
    }

    #[test]
    fn theorem_c_booster_nearly_preserves_stable_direction() {
        let a = build_theorem_c_matrix();
        let frame = solve_spectrum(&a).unwrap();
        let b = wave_covector(&frame, &BoosterDesign::theorem_c_default().k);
        assert!(b[0].abs() < 0.01);
        let h = make_center_booster(&a, 1.0, booster_profile(), &origin()).unwrap();
        let m = compose_da(&a, vec![h]).unwrap();
        let vs = Vec4::from_column_slice(&frame.eigenvectors[0]);
        for i in 0..100 {
            let d = m.perturbation_with_differential(&Vec4::from(halton4(i))).1;
            let img = d * vs;
            let off = (img - vs * img.dot(&vs)).norm();
            assert!(off < 1e-3, "{off}");
        }
    }

    #[test]
    fn nested_ball_radii() {
        let b = nested_balls(&origin(), 0.1, 1, 2).unwrap();
        assert!((b.radii[1] - 0.1 / 20.0).abs() < 1e-18);
        assert!((b.radii[2] - b.radii[1] / 400.0).abs() < 1e-20);
        let b = nested_balls(&origin(), 0.1, 7, 0).unwrap();
        assert_eq!(b.radii, vec![0.1]);
        let b = nested_balls(&origin(), 0.01, 100, 3).unwrap();
        assert_eq!(b.radii[1] / b.radii[0], 1.0 / 2000.0);
        for w in b.radii.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    fn boosted_an100() -> (IntegerMatrix, Factor) {
        let a = build_an(100).unwrap();
        let h = make_center_booster(&a, 1.0, booster_profile(), &origin()).unwrap();
        (a, h)
    }

    #[test]
    fn target_differential_without_booster_is_diagonal() {
        let a = build_an(100).unwrap();
        let frame = solve_spectrum(&a).unwrap();
        let t = target_differential(&a.to_matrix4().unwrap(), &frame).unwrap();
        let b1 = frame.moduli()[1];
        let al = frame.alpha_n;
        assert!((t.theta_c1 - b1).abs() < 1e-10);
        let expect = [b1 / (1.0 - al), (1.0 - al) / b1, 1.0, 1.0];
        let p = t.eigenvectors();
        let diag = p.try_inverse().unwrap() * t.correction() * p;
        for i in 0..4 {
            assert!((diag[(i, i)] - expect[i]).abs() < 1e-9);
        }
        assert!((t.dn().determinant() - a.to_matrix4().unwrap().determinant()).abs() < 1e-9);
        assert!(t.deviation_bound_holds && t.correction_bound_holds);
    }

    #[test]
    fn target_differential_items() {
        let (a, h) = boosted_an100();
        let frame = solve_spectrum(&a).unwrap();
        let g = compose_da(&a, vec![h]).unwrap();
        let dg = g.differential(&Vec4::zeros());
        let t = target_differential(&dg, &frame).unwrap();
        let dn = t.dn();
        let p = t.eigenvectors();
        // shares eigenvectors, equal on F^u, weak center scaled to 1 − α
        let d = p.try_inverse().unwrap() * dn * p;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(d[(i, j)].abs() < 1e-8);
                }
            }
        }
        assert!((d[(2, 2)] - t.eigenvalues[2]).abs() < 1e-8);
        assert!((d[(3, 3)] - t.eigenvalues[3]).abs() < 1e-6);
        assert!((d[(1, 1)] - (1.0 - t.alpha)).abs() < 1e-10);
        assert!((dn.determinant() - dg.determinant()).abs() < 1e-12 * dg.determinant().abs().max(1.0) * 100.0);
        assert!(t.diagonal_deviation < 3.5 * t.alpha);
        assert_eq!(stable_index(&dn), 2);
        assert_eq!(stable_index(&a.to_matrix4().unwrap()), 1);
        let mb = t.in_moving_basis();
        assert!((mb[(2, 2)] - (1.0 - t.alpha)).abs() < 1e-10);
    }

    #[test]
    fn theta_outside_window_is_rejected() {
        let a = build_an(100).unwrap();
        let frame = solve_spectrum(&a).unwrap();
        let m = Mat4::from_diagonal(&Vec4::new(0.01, 1.5, 3.0, 1.0 / 0.045));
        assert!(matches!(target_differential(&m, &frame), Err(LabError::Precondition(_))));
    }

    fn franks_target() -> (Mat4, SpectrumFrame, Mat4) {
        let (a, h) = boosted_an100();
        let frame = solve_spectrum(&a).unwrap();
        let g = compose_da(&a, vec![h]).unwrap();
        let dg = g.differential(&Vec4::zeros());
        let t = target_differential(&dg, &frame).unwrap();
        (t.correction(), frame, dg)
    }

    #[test]
    fn identity_target_gives_identity_bump() {
        let frame = solve_spectrum(&build_an(100).unwrap()).unwrap();
        for r in [Realization::Twist, Realization::Flow] {
            let opts = BumpOptions { realization: r, radius: 0.1, ..Default::default() };
            let b = make_franks_bump(&Mat4::identity(), 0.05, &frame.basis(), &opts).unwrap();
            assert!(b.factors.is_empty());
            let x = Vec4::new(0.01, 0.02, 0.0, 0.03);
            assert_eq!(b.apply(&x), x);
        }
    }

    #[test]
    fn flow_bump_hits_target() {
        let (t, frame, dg) = franks_target();
        let opts = BumpOptions {
            realization: Realization::Flow,
            radius: 0.2,
            ..Default::default()
        };
        let b = make_franks_bump(&t, 0.1, &frame.basis(), &opts).unwrap();
        let d0 = b.differential(&Vec4::zeros());
        assert!((d0 - t).abs().max() < 1e-8);
        let dn = dg * d0;
        let td = target_differential(&dg, &frame).unwrap();
        assert!((dn - td.dn()).abs().max() < 1e-7);
        assert!(b.c1_distance <= 0.1);
        assert!(matches!(make_franks_bump(&t, 0.02, &frame.basis(), &opts), Err(LabError::OutOfNeighborhood { .. })));
        // rescaling keeps the differential at p and the C¹ size, shrinks C⁰
        let r = rescale_bump(&b, 0.01).unwrap();
        assert!((r.differential(&Vec4::zeros()) - d0).abs().max() < 1e-10);
        let mut c0_big: f64 = 0.0;
        let mut c0_small: f64 = 0.0;
        for x in b.factors[0].probe_points(400) {
            c0_big = c0_big.max((b.apply(&x) - x).norm());
            let xs = x * 0.01;
            c0_small = c0_small.max((r.apply(&xs) - xs).norm());
        }
        assert!((c0_small - 0.01 * c0_big).abs() < 1e-9 * c0_big.max(1e-12) + 1e-15);
    }

    #[test]
    fn twist_bump_hits_target_exactly() {
        let (t, frame, _) = franks_target();
        let opts = BumpOptions { radius: 0.2, ..Default::default() };
        let b = make_franks_bump(&t, 10.0, &frame.basis(), &opts).unwrap();
        assert!((b.differential(&Vec4::zeros()) - t).abs().max() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = Vec4::from_fn(|_, _| rng.gen::<f64>() * 0.4 - 0.2);
            assert!((b.differential(&x).determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn far_target_is_rejected() {
        let frame = solve_spectrum(&build_an(100).unwrap()).unwrap();
        let t = Mat4::from_diagonal(&Vec4::new(2.0, 0.5, 1.0, 1.0));
        let opts = BumpOptions { realization: Realization::Flow, ..Default::default() };
        assert!(matches!(make_franks_bump(&t, 0.05, &frame.basis(), &opts), Err(LabError::OutOfNeighborhood { .. })));
    }

    #[test]
    fn return_times_hold_for_localized_model() {
        let (t, frame, _) = franks_target();
        let (a, h) = boosted_an100();
        let opts = BumpOptions { realization: Realization::Flow, radius: 0.2, ..Default::default() };
        let bump = make_franks_bump(&t, 0.1, &frame.basis(), &opts).unwrap();
        let balls = nested_balls(&origin(), 0.1, 100, 3).unwrap();
        let reach = match &bump.factors[0] {
            Factor::Flow(f) => f.support_radius(),
            _ => unreachable!(),
        };
        let small = rescale_bump(&bump, balls.radii[1] / reach).unwrap();
        let mut f = vec![h];
        f.extend(small.factors);
        let g = compose_da(&a, f).unwrap();
        let v0 = check_return_times(&g, &balls, 0, 10, 1).unwrap();
        assert!(v0.pass);
        let v = check_return_times(&g, &balls, 3, 1000, 1).unwrap();
        assert!(v.pass, "{v:?}");
        assert!(v.lipschitz_pass, "{v:?}");
    }

    proptest! {
        #[test]
        fn composition_is_associative(c in prop::array::uniform4(0.0f64..1.0)) {
            let (a, h) = boosted_an100();
            let br = domination_breaking_shear(&a, 0.01).unwrap();
            let x = Vec4::from(c);
            let g = compose_da(&a, vec![h.clone(), br.clone()]).unwrap();
            let inner = br.apply(&x);
            let grouped = g.a() * h.apply(&inner);
            prop_assert!((g.forward_lift(&x) - grouped).norm() < 1e-10);
            let dg = g.differential(&x);
            let dd = g.a() * h.differential(&inner) * br.differential(&x);
            prop_assert!((dg - dd).abs().max() < 1e-10 * dg.abs().max());
            let back = g.inverse_lift(&g.forward_lift(&x));
            prop_assert!((back - x).norm() < 1e-9);
        }
    }
}
