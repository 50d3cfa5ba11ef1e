//! Lyapunov spectra by QR iteration, center Jacobian sums along orbits, and grid quadrature
//! of the center Jacobian.

use crate::bundles::{depth, graph_at, graph_basis, projected_log_jac, pull_axes, push_axes, qr_positive, to_dm, AxisBlock};
use crate::error::{LabError, Result};
use crate::linear::{SplittingKind, SpectrumFrame};
use crate::matfun::{Mat4, Vec4};
use crate::model::DiffeoModel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitPlan {
    pub orbits: usize,
    pub seed: u64,
    pub t: usize,
    /// requested re-orthonormalization stride (capped per model, see `effective_stride`)
    pub stride: usize,
    pub burn_in: usize,
}

impl Default for OrbitPlan {
    fn default() -> Self {
        Self {
            orbits: 32,
            seed: 7,
            t: 10_000,
            stride: 10,
            burn_in: 1000,
        }
    }
}

impl OrbitPlan {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.t < 10 * self.stride || self.orbits == 0 {
            return Err(LabError::InvalidInput(format!(
                "orbit plan needs stride >= 1, T >= 10 stride, orbits >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Largest stride not exceeding the request whose block stretch ratio stays below 1e8.
pub fn effective_stride(frame: &SpectrumFrame, requested: usize) -> usize {
    let m = frame.moduli();
    let spread = (m[3] / m[0]).log10();
    let cap = (8.0 / spread).floor().max(1.0) as usize;
    requested.min(cap).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRow {
    pub orbit_id: usize,
    /// descending
    pub lambdas: [f64; 4],
    pub center_sum: f64,
    /// same quantities over the first half of the orbit
    pub lambdas_half: [f64; 4],
    pub center_sum_half: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub splitting: SplittingKind,
    pub plan: OrbitPlan,
    pub stride_used: usize,
    pub rows: Vec<OrbitRow>,
    pub rejected: Vec<usize>,
    pub exponents: [f64; 4],
    pub exponents_stderr: [f64; 4],
    pub exponent_sum: f64,
    pub exponent_sum_stderr: f64,
    /// per-step rounding bound on the log-determinant, ε·‖Dg‖·‖Dg⁻¹‖
    pub exponent_sum_floor: f64,
    pub center_sum: f64,
    pub center_sum_stderr: f64,
    /// Σ log βᵢᶜ of the linear part
    pub linear_center_sum: f64,
    pub gap: f64,
    pub gap_stderr: f64,
    /// middle exponents (qr estimator of the same center sum)
    pub qr_center_sum: f64,
    pub qr_center_sum_stderr: f64,
    /// T vs T/2 difference of the center sum
    pub finite_t_bias: f64,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

struct OrbitOut {
    row: OrbitRow,
    ok: bool,
}

fn run_orbit(model: &DiffeoModel, kind: SplittingKind, plan: &OrbitPlan, stride: usize, id: usize, lookahead: usize) -> OrbitOut {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(id as u64);
    let mut x = Vec4::from_fn(|_, _| rng.gen::<f64>());
    let block = AxisBlock::center_of(&model.frame, kind);
    let total = plan.burn_in + plan.t + lookahead;
    let bi = *model.basis_inv();
    let b = *model.basis();
    let mut mats: Vec<Mat4> = Vec::with_capacity(total);
    for _ in 0..total {
        let (y, d) = model.step_with_differential(&x);
        mats.push(bi * d * b);
        x = y;
    }
    if mats.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
        return OrbitOut {
            row: OrbitRow {
                orbit_id: id,
                lambdas: [f64::NAN; 4],
                center_sum: f64::NAN,
                lambdas_half: [f64::NAN; 4],
                center_sum_half: f64::NAN,
            },
            ok: false,
        };
    }
    // annihilators of the cs bundle, pulled back from the end of the orbit
    let mut ann = pull_axes(block);
    let mut anns: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); plan.burn_in + plan.t + 1];
    for t in (0..total).rev() {
        let dm = to_dm(&mats[t]);
        ann = qr_positive(&(dm.transpose() * &ann)).0;
        if t <= plan.burn_in + plan.t {
            anns[t] = ann.clone();
        }
    }
    let mut q = DMatrix::<f64>::identity(4, 4);
    let mut cu = push_axes(block);
    let mut logs = [0.0; 4];
    let mut logs_half = [0.0; 4];
    let mut csum = 0.0;
    let mut csum_half = 0.0;
    let half = plan.t / 2;
    let mut acc = DMatrix::<f64>::identity(4, 4);
    for t in 0..plan.burn_in + plan.t {
        let dm = to_dm(&mats[t]);
        acc = &dm * &acc;
        let last = t + 1 == plan.burn_in + plan.t;
        if (t + 1) % stride == 0 || last || t + 1 == plan.burn_in || t + 1 == plan.burn_in + half {
            let (qn, r) = qr_positive(&(&acc * &q));
            q = qn;
            acc = DMatrix::identity(4, 4);
            if t >= plan.burn_in {
                for i in 0..4 {
                    logs[i] += r[i].ln();
                }
            }
        }
        if t + 1 == plan.burn_in + half {
            logs_half = logs;
        }
        if t >= plan.burn_in {
            if let Some(c) = graph_basis(&cu, &anns[t], block) {
                let l = projected_log_jac(&dm, &c, block);
                csum += l;
                if t < plan.burn_in + half {
                    csum_half += l;
                }
            }
        }
        cu = qr_positive(&(&dm * &cu)).0;
    }
    let tt = plan.t as f64;
    let mut lam = [0.0; 4];
    let mut lam_h = [0.0; 4];
    for i in 0..4 {
        lam[i] = logs[i] / tt;
        lam_h[i] = logs_half[i] / half as f64;
    }
    lam.sort_by(|a, b| b.total_cmp(a));
    lam_h.sort_by(|a, b| b.total_cmp(a));
    OrbitOut {
        row: OrbitRow {
            orbit_id: id,
            lambdas: lam,
            center_sum: csum / tt,
            lambdas_half: lam_h,
            center_sum_half: csum_half / half as f64,
        },
        ok: true,
    }
}

/// Full spectrum and center sum in one orbit sweep per initial point.
pub fn qr_spectrum(model: &DiffeoModel, plan: &OrbitPlan, kind: SplittingKind) -> Result<LyapunovReport> {
    plan.validate()?;
    let stride = effective_stride(&model.frame, plan.stride);
    let lookahead = 64;
    let outs: Vec<OrbitOut> = (0..plan.orbits)
        .into_par_iter()
        .map(|id| run_orbit(model, kind, plan, stride, id, lookahead))
        .collect();
    let rejected: Vec<usize> = outs.iter().filter(|o| !o.ok).map(|o| o.row.orbit_id).collect();
    let rows: Vec<OrbitRow> = outs.into_iter().filter(|o| o.ok).map(|o| o.row).collect();
    if rows.is_empty() {
        return Err(LabError::InvalidInput("every orbit was rejected".into()));
    }
    let mut exps = [0.0; 4];
    let mut errs = [0.0; 4];
    for i in 0..4 {
        let v: Vec<f64> = rows.iter().map(|r| r.lambdas[i]).collect();
        let (m, s) = mean_stderr(&v);
        exps[i] = m;
        errs[i] = s;
    }
    let sums: Vec<f64> = rows.iter().map(|r| r.lambdas.iter().sum()).collect();
    let (sum, sum_err) = mean_stderr(&sums);
    let cs: Vec<f64> = rows.iter().map(|r| r.center_sum).collect();
    let (c, c_err) = mean_stderr(&cs);
    let csh: Vec<f64> = rows.iter().map(|r| r.center_sum_half).collect();
    let (ch, _) = mean_stderr(&csh);
    let sp = model.frame.splitting(kind);
    let lm = model.frame.log_moduli();
    let linear: f64 = sp.center.iter().map(|&i| lm[i]).sum();
    // qr estimator: the exponents in the center slots (descending order)
    let nu = sp.unstable.len();
    let nc = sp.center.len();
    let qc: Vec<f64> = rows.iter().map(|r| r.lambdas[nu..nu + nc].iter().sum()).collect();
    let (qm, qe) = mean_stderr(&qc);
    Ok(LyapunovReport {
        splitting: kind,
        plan: *plan,
        stride_used: stride,
        rows,
        rejected,
        exponents: exps,
        exponents_stderr: errs,
        exponent_sum: sum,
        exponent_sum_stderr: sum_err,
        exponent_sum_floor: f64::EPSILON * model.certificates.lipschitz * model.certificates.lipschitz_inv,
        center_sum: c,
        center_sum_stderr: c_err,
        linear_center_sum: linear,
        gap: c - linear,
        gap_stderr: c_err,
        qr_center_sum: qm,
        qr_center_sum_stderr: qe,
        finite_t_bias: c - ch,
    })
}

/// Center sum with its standard error (Birkhoff estimator).
pub fn center_sum(model: &DiffeoModel, plan: &OrbitPlan, kind: SplittingKind) -> Result<(f64, f64)> {
    let r = qr_spectrum(model, plan, kind)?;
    Ok((r.center_sum, r.center_sum_stderr))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReport {
    pub resolution: usize,
    pub value: f64,
    pub value_fine: f64,
    /// |value_fine − value|
    pub refinement_change: f64,
    pub linear_value: f64,
    pub continuation_steps: usize,
    /// integral of (log Jacᶜ − linear value) over grid cells where some factor is active
    pub support_partial: f64,
}

/// log Jacᶜ in graph coordinates at x, with bundles continued k steps each way.
pub fn center_log_jac_at(model: &DiffeoModel, kind: SplittingKind, x: &Vec4, k: usize) -> Option<f64> {
    let block = AxisBlock::center_of(&model.frame, kind);
    let c = graph_at(model, x, block, k)?;
    let m = to_dm(&model.adapted_differential(x));
    Some(projected_log_jac(&m, &c, block))
}

fn grid_integral(model: &DiffeoModel, kind: SplittingKind, r: usize, k: usize, linear: f64) -> (f64, f64) {
    let n = r.pow(4);
    let vals: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut c = [0usize; 4];
            let mut q = i;
            for ci in c.iter_mut() {
                *ci = q % r;
                q /= r;
            }
            let x = Vec4::from_fn(|j, _| (c[j] as f64 + 0.5) / r as f64);
            let v = center_log_jac_at(model, kind, &x, k).unwrap_or(f64::NAN);
            let active = (model.perturbation_with_differential(&x).1 - Mat4::identity()).abs().max() > 0.0;
            (v, if active { v - linear } else { 0.0 })
        })
        .collect();
    let s: f64 = vals.iter().map(|v| v.0).sum();
    let p: f64 = vals.iter().map(|v| v.1).sum();
    (s / n as f64, p / n as f64)
}

/// Midpoint rule over the uniform grid of side r, repeated at 2r.
pub fn jacobian_integral_quadrature(model: &DiffeoModel, kind: SplittingKind, r: usize) -> Result<QuadratureReport> {
    if r == 0 {
        return Err(LabError::InvalidInput("grid resolution 0".into()));
    }
    let k = depth(&model.frame, AxisBlock::center_of(&model.frame, kind));
    let sp = model.frame.splitting(kind);
    let lm = model.frame.log_moduli();
    let linear: f64 = sp.center.iter().map(|&i| lm[i]).sum();
    let (v, part) = grid_integral(model, kind, r, k, linear);
    let (vf, _) = grid_integral(model, kind, 2 * r, k, linear);
    Ok(QuadratureReport {
        resolution: r,
        value: v,
        value_fine: vf,
        refinement_change: (vf - v).abs(),
        linear_value: linear,
        continuation_steps: k,
        support_partial: part,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapVerdict {
    pub gap: f64,
    pub stderr: f64,
    pub center_dims_equal: bool,
    pub linear_center_positive: bool,
    pub angle_condition: Option<bool>,
    pub fires: bool,
    pub verdict: String,
}

/// Signed gap against the linear center sum plus the non-absolute-continuity verdict.
pub fn theorem_a_gap(report: &LyapunovReport, frame: &SpectrumFrame, center_dim_model: usize, angle_condition: Option<bool>) -> GapVerdict {
    let sp = frame.splitting(report.splitting);
    let lm = frame.log_moduli();
    let dims = center_dim_model == sp.center.len();
    let positive = sp.center.iter().all(|&i| lm[i] > 0.0);
    let significant = report.gap > 3.0 * report.gap_stderr && report.gap > 0.0;
    let (fires, verdict) = match angle_condition {
        None => (false, "hypotheses unchecked (angle condition missing): verdict withheld".to_string()),
        Some(_) if !(dims && positive) => (false, "hypotheses fail: verdict withheld".to_string()),
        Some(false) => (false, "angle condition fails: verdict withheld".to_string()),
        Some(true) if significant => (true, "center sum exceeds the linear one: center foliation not absolutely continuous".to_string()),
        Some(true) => (false, "consistent with absolute continuity (no conclusion)".to_string()),
    };
    GapVerdict {
        gap: report.gap,
        stderr: report.gap_stderr,
        center_dims_equal: dims,
        linear_center_positive: positive,
        angle_condition,
        fires,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::BumpProfile;
    use crate::linear::{build_an, build_theorem_c_matrix};
    use crate::model::compose_da;
    use crate::perturb::{make_booster_with, BoosterDesign};
    use crate::torus::TorusPoint;

    fn small_plan() -> OrbitPlan {
        OrbitPlan {
            orbits: 8,
            seed: 3,
            t: 2000,
            stride: 10,
            burn_in: 1000,
        }
    }

    #[test]
    fn linear_spectrum_is_exact() {
        for a in [build_an(100).unwrap(), build_theorem_c_matrix()] {
            let m = compose_da(&a, vec![]).unwrap();
            let plan = OrbitPlan { t: 10_000, orbits: 4, ..Default::default() };
            let r = qr_spectrum(&m, &plan, SplittingKind::E).unwrap();
            let mut lm = m.frame.log_moduli();
            lm.sort_by(|a, b| b.total_cmp(a));
            for i in 0..4 {
                assert!((r.exponents[i] - lm[i]).abs() < 1e-8, "{i}: {} vs {}", r.exponents[i], lm[i]);
            }
            assert!((r.center_sum - m.frame.center_log_sum()).abs() < 1e-8);
            assert!(r.gap.abs() < 1e-8);
        }
    }

    #[test]
    fn theorem_c_center_sum_value() {
        let m = compose_da(&build_theorem_c_matrix(), vec![]).unwrap();
        let r = qr_spectrum(&m, &small_plan(), SplittingKind::E).unwrap();
        assert!((r.center_sum - (1.2489759f64.ln() + 2.2913669f64.ln())).abs() < 1e-6);
        assert!((r.center_sum - (1.2f64.ln() + 2.3f64.ln())).abs() < 0.05);
    }

    #[test]
    fn stride_cap_follows_stretch_ratio() {
        let f = crate::linear::solve_spectrum(&build_an(100).unwrap()).unwrap();
        assert_eq!(effective_stride(&f, 10), 1);
        let f = crate::linear::solve_spectrum(&build_theorem_c_matrix()).unwrap();
        assert_eq!(effective_stride(&f, 10), 4);
        assert_eq!(effective_stride(&f, 2), 2);
    }

    #[test]
    fn plan_validation() {
        assert!(OrbitPlan { stride: 0, ..Default::default() }.validate().is_err());
        assert!(OrbitPlan { t: 50, stride: 10, ..Default::default() }.validate().is_err());
    }

    fn booster_model(design: BoosterDesign, s: f64) -> DiffeoModel {
        let a = build_an(100).unwrap();
        let (h, _) = make_booster_with(&a, &design, s, BumpProfile::new(1.0 / 3.0, 2).unwrap(), &TorusPoint::new([0.0; 4]).unwrap()).unwrap();
        compose_da(&a, vec![h]).unwrap()
    }

    #[test]
    fn booster_gap_positive_and_reversed_negative() {
        let plan = small_plan();
        let m = booster_model(BoosterDesign::an_default(), 1.0);
        let r = qr_spectrum(&m, &plan, SplittingKind::E).unwrap();
        assert!(r.gap > 3.0 * r.gap_stderr, "gap {} +- {}", r.gap, r.gap_stderr);
        assert!(r.exponent_sum.abs() < 3.0 * r.exponent_sum_stderr.hypot(r.exponent_sum_floor));
        let q = (r.center_sum - r.qr_center_sum).abs();
        assert!(q < 3.0 * (r.center_sum_stderr.powi(2) + r.qr_center_sum_stderr.powi(2)).sqrt() + 1e-9, "{q}");
        let rev = booster_model(BoosterDesign::an_default().reversed(), 1.0);
        let rr = qr_spectrum(&rev, &plan, SplittingKind::E).unwrap();
        assert!(rr.gap < -3.0 * rr.gap_stderr, "reversed gap {}", rr.gap);
        let frame = &m.frame;
        let v = theorem_a_gap(&rr, frame, 2, Some(true));
        assert!(!v.fires);
        let v = theorem_a_gap(&r, frame, 2, Some(true));
        assert!(v.fires);
        assert!(!theorem_a_gap(&r, frame, 2, None).fires);
    }

    #[test]
    fn gap_increases_with_strength() {
        let plan = small_plan();
        let mut prev = -1.0;
        for s in [0.0, 0.5, 1.0] {
            let g = qr_spectrum(&booster_model(BoosterDesign::an_default(), s), &plan, SplittingKind::E).unwrap().gap;
            assert!(g > prev, "{s}: {g}");
            prev = g;
        }
    }

    #[test]
    fn quadrature_of_linear_model_is_constant() {
        let m = compose_da(&build_an(100).unwrap(), vec![]).unwrap();
        let q = jacobian_integral_quadrature(&m, SplittingKind::E, 3).unwrap();
        assert!((q.value - m.frame.center_log_sum()).abs() < 1e-12);
        assert!(q.refinement_change < 1e-12);
    }

    #[test]
    fn block_and_step_accumulation_agree() {
        let m = booster_model(BoosterDesign::an_default(), 1.0);
        let bi = *m.basis_inv();
        let b = *m.basis();
        let mut x = Vec4::new(0.1, 0.2, 0.3, 0.4);
        let mut v = Vec4::new(0.3, -0.1, 0.5, 0.2);
        let mut w = v;
        let mut one = 0.0;
        let mut blocks = 0.0;
        let mut acc = Mat4::identity();
        for t in 0..40 {
            let d = bi * m.differential(&x) * b;
            let dt = d.transpose();
            let nv = dt * v;
            one += nv.norm().ln();
            v = nv / nv.norm();
            acc = dt * acc;
            if (t + 1) % 4 == 0 {
                let nw = acc * w;
                blocks += nw.norm().ln();
                w = nw / nw.norm();
                acc = Mat4::identity();
            }
            x = m.step(&x);
        }
        assert!((one - blocks).abs() < 1e-9);
    }
}
