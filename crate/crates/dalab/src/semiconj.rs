//! Semiconjugacy h = Id + u with h∘f = A∘h, solved on a periodic grid in the eigenbasis of A.
//!
//! In eigen coordinates w = V⁻¹u and e = V⁻¹(P − Id) the equation reads
//! w_i∘f = λ_i (w_i − e_i). Expanding components iterate w_i ← w_i∘f / λ_i + e_i, contracting
//! ones w_i ← λ_i (w_i∘f⁻¹ − e_i∘f⁻¹). Off the grid, h is evaluated by unrolling the same
//! equation a fixed number of steps before interpolating, which damps the interpolation error.

use crate::bundles::AxisBlock;
use crate::error::{LabError, Result};
use crate::foliation::LeafPatch;
use crate::linear::SplittingKind;
use crate::matfun::Vec4;
use crate::model::{wrap4, DiffeoModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// points drawn from the 2×-finer verification grid
    pub verify_samples: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            verify_samples: 8192,
            seed: 11,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConjugacyField {
    pub grid: usize,
    /// eigen components at the nodes i/grid, node-major
    w: Vec<[f64; 4]>,
    lambda: [f64; 4],
    /// unrolling depth for expanding and contracting components
    pub depth: (usize, usize),
    pub residual: f64,
    /// sup of the last grid update
    pub grid_residual: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub predicted_rate: f64,
    pub observed_rate: f64,
    /// sampled interpolation residual before unrolling
    pub interpolation_residual: f64,
}

fn node_index(n: usize, c: [usize; 4]) -> usize {
    ((c[0] * n + c[1]) * n + c[2]) * n + c[3]
}

fn node_coords(n: usize, mut i: usize) -> [usize; 4] {
    let mut c = [0; 4];
    for k in (0..4).rev() {
        c[k] = i % n;
        i /= n;
    }
    c
}

impl ConjugacyField {
    fn expanding(&self, i: usize) -> bool {
        self.lambda[i].abs() > 1.0
    }

    /// Multilinear periodic interpolation of the grid values.
    pub fn interpolate(&self, x: &Vec4) -> [f64; 4] {
        interpolate(&self.w, self.grid, x)
    }

    /// Eigen components of u at a torus point, with the equation unrolled.
    pub fn eigen_at(&self, model: &DiffeoModel, x: &Vec4) -> [f64; 4] {
        let (ke, ks) = self.depth;
        let bi = *model.basis_inv();
        let mut out = [0.0; 4];
        if (0..4).any(|i| self.expanding(i)) {
            let mut y = *x;
            let mut scale = [1.0; 4];
            for _ in 0..ke {
                let e = bi * (model.perturbation(&y) - y);
                for i in (0..4).filter(|&i| self.expanding(i)) {
                    out[i] += e[i] * scale[i];
                    scale[i] /= self.lambda[i];
                }
                y = model.step(&y);
            }
            let w = self.interpolate(&y);
            for i in (0..4).filter(|&i| self.expanding(i)) {
                out[i] += w[i] * scale[i];
            }
        }
        if (0..4).any(|i| !self.expanding(i)) {
            let mut y = *x;
            let mut scale = [1.0; 4];
            for _ in 0..ks {
                y = model.step_back(&y);
                let e = bi * (model.perturbation(&y) - y);
                for i in (0..4).filter(|&i| !self.expanding(i)) {
                    scale[i] *= self.lambda[i];
                    out[i] -= e[i] * scale[i];
                }
            }
            let w = self.interpolate(&y);
            for i in (0..4).filter(|&i| !self.expanding(i)) {
                out[i] += w[i] * scale[i];
            }
        }
        out
    }

    /// u at a torus point in standard coordinates.
    pub fn displacement(&self, model: &DiffeoModel, x: &Vec4) -> Vec4 {
        model.basis() * Vec4::from(self.eigen_at(model, x))
    }

    /// h on the cover: y + u(y mod 1).
    pub fn h(&self, model: &DiffeoModel, y: &Vec4) -> Vec4 {
        y + self.displacement(model, &wrap4(y))
    }

    /// ‖h∘f − A∘h‖∞ at x (standard coordinates).
    pub fn residual_at(&self, model: &DiffeoModel, x: &Vec4) -> f64 {
        let fx = model.forward_lift(x);
        let lhs = fx + self.displacement(model, &wrap4(&fx));
        let rhs = model.a() * (x + self.displacement(model, x));
        (lhs - rhs).amax()
    }

    /// Grid values of u in standard coordinates, component-major then row-major over the grid.
    pub fn component_major(&self, model: &DiffeoModel) -> Vec<f64> {
        let n4 = self.w.len();
        let mut out = vec![0.0; 4 * n4];
        for (k, w) in self.w.iter().enumerate() {
            let u = model.basis() * Vec4::from(*w);
            for c in 0..4 {
                out[c * n4 + k] = u[c];
            }
        }
        out
    }

    /// Rebuilds a field from component-major standard-coordinate values.
    pub fn from_component_major(model: &DiffeoModel, header: &FieldHeader, data: &[f64]) -> Result<Self> {
        let n4 = header.grid.pow(4);
        if data.len() != 4 * n4 {
            return Err(LabError::Parse(format!("field has {} values, expected {}", data.len(), 4 * n4)));
        }
        let bi = *model.basis_inv();
        let w = (0..n4)
            .map(|k| {
                let u = Vec4::new(data[k], data[n4 + k], data[2 * n4 + k], data[3 * n4 + k]);
                let e = bi * u;
                [e[0], e[1], e[2], e[3]]
            })
            .collect();
        Ok(Self {
            grid: header.grid,
            w,
            lambda: eigenvalues(model),
            depth: (header.depth_expanding, header.depth_contracting),
            residual: header.residual,
            grid_residual: header.grid_residual,
            iterations: header.iterations,
            trace: vec![],
            predicted_rate: header.predicted_rate,
            observed_rate: header.observed_rate.unwrap_or(f64::NAN),
            interpolation_residual: f64::NAN,
        })
    }

    pub fn header(&self) -> FieldHeader {
        FieldHeader {
            grid: self.grid,
            dim: 4,
            layout: FIELD_LAYOUT.to_string(),
            residual: self.residual,
            grid_residual: self.grid_residual,
            iterations: self.iterations,
            depth_expanding: self.depth.0,
            depth_contracting: self.depth.1,
            predicted_rate: self.predicted_rate,
            observed_rate: self.observed_rate.is_finite().then_some(self.observed_rate),
        }
    }
}

pub const FIELD_LAYOUT: &str = "f64-le component-major, grid row-major (x0 slowest), nodes at i/grid";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub grid: usize,
    pub dim: usize,
    pub layout: String,
    pub residual: f64,
    pub grid_residual: f64,
    pub iterations: usize,
    pub depth_expanding: usize,
    pub depth_contracting: usize,
    pub predicted_rate: f64,
    /// absent when the iteration stopped before a rate could be fitted
    pub observed_rate: Option<f64>,
}

fn eigenvalues(model: &DiffeoModel) -> [f64; 4] {
    let e = &model.frame.eigenvalues;
    [e[0], e[1], e[2], e[3]]
}

fn interpolate(w: &[[f64; 4]], n: usize, x: &Vec4) -> [f64; 4] {
    let mut i0 = [0usize; 4];
    let mut t = [0.0; 4];
    for k in 0..4 {
        let p = x[k].rem_euclid(1.0) * n as f64;
        let f = p.floor();
        i0[k] = (f as usize) % n;
        t[k] = p - f;
    }
    let mut out = [0.0; 4];
    for corner in 0..16usize {
        let mut wt = 1.0;
        let mut c = [0usize; 4];
        for k in 0..4 {
            if corner >> k & 1 == 1 {
                wt *= t[k];
                c[k] = (i0[k] + 1) % n;
            } else {
                wt *= 1.0 - t[k];
                c[k] = i0[k];
            }
        }
        if wt == 0.0 {
            continue;
        }
        let v = &w[node_index(n, c)];
        for comp in 0..4 {
            out[comp] += wt * v[comp];
        }
    }
    out
}

/// Jacobi iteration on the grid until the sup update is below tol/2, then unrolling depths
/// chosen so the damped interpolation error sits below tol/2.
pub fn solve_semiconjugacy(model: &DiffeoModel, grid: usize, tol: f64, opts: &SolveOptions) -> Result<ConjugacyField> {
    if !model.certificates.homotopic_to_linear {
        return Err(LabError::Precondition("model is not certified homotopic to its linear part".into()));
    }
    if grid < 2 || tol <= 0.0 {
        return Err(LabError::InvalidInput("grid >= 2 and tol > 0 required".into()));
    }
    let lambda = eigenvalues(model);
    if lambda.iter().any(|l| (l.abs() - 1.0).abs() < 1e-12) {
        return Err(LabError::UnsupportedSpectrum("eigenvalue on the unit circle".into()));
    }
    let expanding: Vec<bool> = lambda.iter().map(|l| l.abs() > 1.0).collect();
    let predicted = lambda.iter().map(|l| if l.abs() > 1.0 { 1.0 / l.abs() } else { l.abs() }).fold(0.0, f64::max);
    let n4 = grid.pow(4);
    let bi = *model.basis_inv();
    let disp = |y: &Vec4| -> Vec4 { bi * (model.perturbation(y) - y) };
    // per node: f(x), e(x), f⁻¹(x), e(f⁻¹x)
    let pre: Vec<(Vec4, Vec4, Vec4, Vec4)> = (0..n4)
        .into_par_iter()
        .map(|k| {
            let c = node_coords(grid, k);
            let x = Vec4::from_fn(|i, _| c[i] as f64 / grid as f64);
            let fx = model.step(&x);
            let bx = model.step_back(&x);
            (fx, disp(&x), bx, disp(&bx))
        })
        .collect();
    let mut w = vec![[0.0f64; 4]; n4];
    let mut trace = vec![];
    let mut iterations = 0;
    let target = tol / 2.0;
    loop {
        let next: Vec<[f64; 4]> = pre
            .par_iter()
            .map(|(fx, ex, bx, eb)| {
                let wf = interpolate(&w, grid, fx);
                let wb = interpolate(&w, grid, bx);
                let mut o = [0.0; 4];
                for i in 0..4 {
                    o[i] = if expanding[i] {
                        wf[i] / lambda[i] + ex[i]
                    } else {
                        lambda[i] * (wb[i] - eb[i])
                    };
                }
                o
            })
            .collect();
        let upd = next
            .iter()
            .zip(&w)
            .map(|(a, b)| (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        w = next;
        iterations += 1;
        trace.push(upd);
        if upd < target || upd == 0.0 {
            break;
        }
        if iterations >= opts.max_iter || !upd.is_finite() {
            let tail = trace[trace.len().saturating_sub(10)..].to_vec();
            return Err(LabError::NoConvergence { iterations, trace: tail });
        }
    }
    let observed = observed_rate(&trace);
    let mut field = ConjugacyField {
        grid,
        w,
        lambda,
        depth: (0, 0),
        residual: f64::NAN,
        grid_residual: *trace.last().unwrap(),
        iterations,
        trace,
        predicted_rate: predicted,
        observed_rate: observed,
        interpolation_residual: 0.0,
    };
    // interpolation error of the raw grid at off-grid points
    let probe = verification_points(grid, 512, opts.seed ^ 0x5eed);
    let raw = probe.par_iter().map(|x| field.residual_at(model, x)).reduce(|| 0.0, f64::max);
    field.interpolation_residual = raw;
    let slow_e = lambda.iter().filter(|l| l.abs() > 1.0).map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let slow_s = lambda.iter().filter(|l| l.abs() < 1.0).map(|l| 1.0 / l.abs()).fold(f64::INFINITY, f64::min);
    let need = |rate: f64| -> usize {
        if !rate.is_finite() || raw <= target {
            0
        } else {
            ((raw / target).ln() / rate.ln()).ceil() as usize + 1
        }
    };
    field.depth = (need(slow_e), need(slow_s));
    let ver = verification_points(grid, opts.verify_samples, opts.seed);
    field.residual = ver.par_iter().map(|x| field.residual_at(model, x)).reduce(|| 0.0, f64::max);
    Ok(field)
}

/// Geometric mean of update ratios over the tail of the iteration.
fn observed_rate(trace: &[f64]) -> f64 {
    let usable: Vec<f64> = trace.iter().cloned().filter(|v| *v > 0.0).collect();
    if usable.len() < 4 {
        return f64::NAN;
    }
    let lo = usable.len() / 2;
    let hi = usable.len() - 1;
    (usable[hi] / usable[lo]).powf(1.0 / (hi - lo) as f64)
}

/// Points of the 2×-finer grid (cell midpoints at spacing 1/(2n)), drawn without structure.
pub fn verification_points(grid: usize, count: usize, seed: u64) -> Vec<Vec4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 2 * grid;
    (0..count)
        .map(|_| Vec4::from_fn(|_, _| (rng.gen_range(0..m) as f64 + 0.5) / m as f64))
        .collect()
}

/// Image of the fine node grid under h meets every cell of the coarse grid.
pub fn covers_coarse_grid(field: &ConjugacyField, model: &DiffeoModel, coarse: usize) -> bool {
    let n = field.grid;
    let mut hit = vec![false; coarse.pow(4)];
    for k in 0..n.pow(4) {
        let c = node_coords(n, k);
        let x = Vec4::from_fn(|i, _| c[i] as f64 / n as f64);
        let y = wrap4(&(x + model.basis() * Vec4::from(field.w[k])));
        let cell = [0, 1, 2, 3].map(|i| ((y[i] * coarse as f64) as usize).min(coarse - 1));
        hit[node_index(coarse, cell)] = true;
    }
    hit.iter().all(|&b| b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    /// max distance of h(leaf nodes) from the best fitting translate of the linear center plane
    pub deviation: f64,
    /// same with Id in place of h
    pub id_deviation: f64,
    pub tol: f64,
    pub pass: bool,
}

fn plane_deviation(points: &[Vec4], block: AxisBlock) -> f64 {
    let comp = block.complement();
    let mut center = vec![0.0; comp.len()];
    for (a, &i) in comp.iter().enumerate() {
        let lo = points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
        center[a] = 0.5 * (lo + hi);
    }
    points
        .iter()
        .map(|p| comp.iter().enumerate().map(|(a, &i)| (p[i] - center[a]).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Maps the leaf nodes through h and measures their spread off a single center plane.
pub fn leaf_correspondence_check(field: &ConjugacyField, model: &DiffeoModel, patch: &LeafPatch, tol: f64) -> CorrespondenceReport {
    let bi = *model.basis_inv();
    let imgs: Vec<Vec4> = (0..patch.points.len())
        .into_par_iter()
        .map(|k| bi * field.h(model, &patch.cover_point(model, k)))
        .collect();
    let ids: Vec<Vec4> = (0..patch.points.len()).map(|k| bi * patch.cover_point(model, k)).collect();
    let dev = plane_deviation(&imgs, patch.block);
    CorrespondenceReport {
        deviation: dev,
        id_deviation: plane_deviation(&ids, patch.block),
        tol,
        pass: dev < tol,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaqueBox {
    pub center: [f64; 4],
    /// half-width of the box along every eigen axis (adapted units)
    pub half: f64,
    /// bins per transverse axis
    pub plaque_bins: usize,
}

impl Default for PlaqueBox {
    fn default() -> Self {
        Self {
            center: [0.37, 0.61, 0.13, 0.83],
            half: 0.05,
            plaque_bins: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaqueRow {
    pub plaque_id: usize,
    pub n_samples: usize,
    pub max_bin_mass: f64,
    pub tv_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaqueReport {
    pub rows: Vec<PlaqueRow>,
    pub excluded: usize,
    pub cells: usize,
    pub mean_max_bin_mass: f64,
    pub mean_tv_distance: f64,
    pub samples: usize,
}

pub const MIN_PLAQUE_SAMPLES: usize = 100;

/// Bins h-images of uniform box samples into plaques by their transverse eigen coordinates and
/// histograms the center coordinates inside each plaque (about `bins` cells per plaque).
pub fn plaque_mass_probe(field: &ConjugacyField, model: &DiffeoModel, bx: &PlaqueBox, samples: usize, bins: usize, seed: u64) -> Result<PlaqueReport> {
    if samples == 0 || bins == 0 || bx.plaque_bins == 0 || bx.half <= 0.0 {
        return Err(LabError::InvalidInput("probe needs samples, bins and a positive box".into()));
    }
    let block = AxisBlock::center_of(&model.frame, SplittingKind::E);
    let axes = block.axes();
    let comp = block.complement();
    let per_axis = ((bins as f64).powf(1.0 / axes.len() as f64).round() as usize).max(1);
    let cells = per_axis.pow(axes.len() as u32);
    let b = *model.basis();
    let bi = *model.basis_inv();
    let c = Vec4::from(bx.center);
    let hc = bi * field.h(model, &c);
    let chunk = 1024;
    let chunks = samples.div_ceil(chunk);
    let binned: Vec<(usize, usize)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|ci| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ci as u64);
            let m = chunk.min(samples - ci * chunk);
            let mut out = Vec::with_capacity(m);
            for _ in 0..m {
                let xi = Vec4::from_fn(|_, _| (rng.gen::<f64>() * 2.0 - 1.0) * bx.half);
                let z = bi * field.h(model, &(c + b * xi)) - hc;
                let idx = |v: f64, n: usize| -> Option<usize> {
                    let t = (v + bx.half) / (2.0 * bx.half);
                    (0.0..1.0).contains(&t).then(|| (t * n as f64) as usize)
                };
                let mut plaque = 0;
                let mut ok = true;
                for &i in &comp {
                    match idx(z[i], bx.plaque_bins) {
                        Some(k) => plaque = plaque * bx.plaque_bins + k,
                        None => ok = false,
                    }
                }
                let mut cell = 0;
                for &i in &axes {
                    match idx(z[i], per_axis) {
                        Some(k) => cell = cell * per_axis + k,
                        None => ok = false,
                    }
                }
                if ok {
                    out.push((plaque, cell));
                }
            }
            out
        })
        .collect();
    let n_plaques = bx.plaque_bins.pow(comp.len() as u32);
    let mut hist = vec![vec![0usize; cells]; n_plaques];
    for (p, cidx) in binned {
        hist[p][cidx] += 1;
    }
    let mut rows = vec![];
    let mut excluded = 0;
    for (p, h) in hist.iter().enumerate() {
        let tot: usize = h.iter().sum();
        if tot < MIN_PLAQUE_SAMPLES {
            excluded += 1;
            continue;
        }
        let probs: Vec<f64> = h.iter().map(|&v| v as f64 / tot as f64).collect();
        rows.push(PlaqueRow {
            plaque_id: p,
            n_samples: tot,
            max_bin_mass: probs.iter().cloned().fold(0.0, f64::max),
            tv_distance: 0.5 * probs.iter().map(|q| (q - 1.0 / cells as f64).abs()).sum::<f64>(),
        });
    }
    let k = rows.len().max(1) as f64;
    Ok(PlaqueReport {
        mean_max_bin_mass: rows.iter().map(|r| r.max_bin_mass).sum::<f64>() / k,
        mean_tv_distance: rows.iter().map(|r| r.tv_distance).sum::<f64>() / k,
        rows,
        excluded,
        cells,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::BumpProfile;
    use crate::foliation::{integrate_leaf_patch, PatchSpec};
    use crate::linear::{build_an, build_theorem_c_matrix};
    use crate::model::compose_da;
    use crate::perturb::{make_booster_with, BoosterDesign};
    use crate::torus::TorusPoint;

    fn thmc_model() -> DiffeoModel {
        let a = build_theorem_c_matrix();
        let (h, _) = make_booster_with(&a, &BoosterDesign::theorem_c_default(), 1.0, BumpProfile::new(1.0 / 3.0, 2).unwrap(), &TorusPoint::new([0.0; 4]).unwrap()).unwrap();
        compose_da(&a, vec![h]).unwrap()
    }

    #[test]
    fn linear_model_has_zero_field() {
        let m = compose_da(&build_theorem_c_matrix(), vec![]).unwrap();
        let f = solve_semiconjugacy(&m, 4, 1e-8, &SolveOptions::default()).unwrap();
        assert_eq!(f.iterations, 1);
        assert!(f.residual < 1e-12);
        assert!(f.component_major(&m).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn coarse_solve_converges_at_predicted_rate() {
        let m = thmc_model();
        let f = solve_semiconjugacy(&m, 8, 1e-6, &SolveOptions { verify_samples: 512, ..Default::default() }).unwrap();
        assert!(f.residual < 1e-6, "{}", f.residual);
        assert!((f.observed_rate / f.predicted_rate - 1.0).abs() < 0.2, "{} vs {}", f.observed_rate, f.predicted_rate);
        assert!(covers_coarse_grid(&f, &m, 4));
        // round trip through the stored layout
        let back = ConjugacyField::from_component_major(&m, &f.header(), &f.component_major(&m)).unwrap();
        let x = Vec4::new(0.3, 0.1, 0.7, 0.2);
        assert!((back.displacement(&m, &x) - f.displacement(&m, &x)).amax() < 1e-12);
    }

    #[test]
    fn stored_layout_rejects_wrong_length() {
        let m = thmc_model();
        let f = solve_semiconjugacy(&m, 4, 1e-4, &SolveOptions { verify_samples: 16, ..Default::default() }).unwrap();
        assert!(ConjugacyField::from_component_major(&m, &f.header(), &[0.0; 7]).is_err());
    }

    #[test]
    fn leaf_maps_into_linear_leaf() {
        let m = thmc_model();
        let f = solve_semiconjugacy(&m, 8, 1e-5, &SolveOptions { verify_samples: 256, ..Default::default() }).unwrap();
        let b = AxisBlock::center_of(&m.frame, SplittingKind::E);
        let p = integrate_leaf_patch(&m, b, &PatchSpec { edge: 1.0, res: 2, max_step: 0.002, ..Default::default() }).unwrap();
        let r = leaf_correspondence_check(&f, &m, &p, 10.0 * f.residual);
        assert!(r.pass, "{r:?}");
        assert!(r.id_deviation > 10.0 * r.deviation);
    }

    #[test]
    fn linear_plaques_are_uniform() {
        let m = compose_da(&build_an(10).unwrap(), vec![]).unwrap();
        let f = solve_semiconjugacy(&m, 2, 1e-8, &SolveOptions::default()).unwrap();
        let r = plaque_mass_probe(&f, &m, &PlaqueBox { plaque_bins: 2, ..Default::default() }, 40_000, 16, 5).unwrap();
        assert_eq!(r.cells, 16);
        assert_eq!(r.rows.len(), 4);
        assert!(r.mean_tv_distance < 0.05, "{}", r.mean_tv_distance);
        assert!((r.mean_max_bin_mass - 1.0 / 16.0).abs() < 0.02);
        let small = plaque_mass_probe(&f, &m, &PlaqueBox { plaque_bins: 2, ..Default::default() }, 4_000, 16, 5).unwrap();
        assert!(small.mean_tv_distance > r.mean_tv_distance);
    }
}
