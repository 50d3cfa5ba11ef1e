//! Center-leaf patches in the universal cover, written as graphs over a square in the linear
//! center plane (adapted coordinates), and the geometric measurements taken on them.

use crate::bundles::{depth, graph_at, orbit_bundles, AxisBlock};
use crate::error::{LabError, Result};
use crate::matfun::{op_norm, Mat4, Vec4};
use crate::model::{wrap4, DiffeoModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    /// base point z in cover coordinates
    pub base: [f64; 4],
    pub edge: f64,
    /// grid intervals per edge (even)
    pub res: usize,
    /// largest integration step in parameter units
    pub max_step: f64,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            base: [0.1, 0.2, 0.3, 0.4],
            edge: 20.0,
            res: 20,
            max_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LeafPatch {
    pub block: AxisBlock,
    pub base: Vec4,
    pub edge: f64,
    pub res: usize,
    /// parameter of each node (block coordinates)
    pub params: Vec<Vec<f64>>,
    /// adapted offsets ξ of the leaf points from the base point
    pub points: Vec<Vec4>,
    /// graph bases of the leaf tangent at each node
    pub tangents: Vec<DMatrix<f64>>,
    /// max ‖π(point) − parameter‖
    pub projection_residual: f64,
    /// sup ‖dπ⁻¹‖ over the nodes
    pub bilipschitz: f64,
}

impl LeafPatch {
    pub fn dim(&self) -> usize {
        self.block.dim()
    }

    pub fn side(&self) -> usize {
        self.res + 1
    }

    pub fn spacing(&self) -> f64 {
        self.edge / self.res as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.dim() == 1 {
            i
        } else {
            i * self.side() + j
        }
    }

    /// Cover point of a node: z + V ξ.
    pub fn cover_point(&self, model: &DiffeoModel, node: usize) -> Vec4 {
        self.base + model.basis() * self.points[node]
    }

    /// Nodes whose parameters lie in the centered square of half-width `half`.
    pub fn sub_patch(&self, half: f64) -> LeafPatch {
        let h = self.spacing();
        let keep = ((half / h).floor() as usize).min(self.res / 2);
        let mid = self.res / 2;
        let range: Vec<usize> = (mid - keep..=mid + keep).collect();
        let mut idx = vec![];
        if self.dim() == 1 {
            idx = range.clone();
        } else {
            for &i in &range {
                for &j in &range {
                    idx.push(self.index(i, j));
                }
            }
        }
        let tangents: Vec<DMatrix<f64>> = idx.iter().map(|&k| self.tangents[k].clone()).collect();
        LeafPatch {
            block: self.block,
            base: self.base,
            edge: 2.0 * keep as f64 * h,
            res: 2 * keep,
            params: idx.iter().map(|&k| self.params[k].clone()).collect(),
            points: idx.iter().map(|&k| self.points[k]).collect(),
            bilipschitz: tangents.iter().map(graph_stretch).fold(1.0, f64::max),
            tangents,
            projection_residual: self.projection_residual,
        }
    }

    fn transverse_norm(&self, xi: &Vec4) -> f64 {
        self.block.complement().iter().map(|&i| xi[i] * xi[i]).sum::<f64>().sqrt()
    }

    fn along_norm(&self, xi: &Vec4) -> f64 {
        self.block.axes().iter().map(|&i| xi[i] * xi[i]).sum::<f64>().sqrt()
    }
}

/// Largest singular value of a graph basis, i.e. the stretch of π⁻¹.
fn graph_stretch(c: &DMatrix<f64>) -> f64 {
    (c.transpose() * c).symmetric_eigen().eigenvalues.max().sqrt()
}

struct Integrator<'a> {
    model: &'a DiffeoModel,
    base: Vec4,
    block: AxisBlock,
    k: usize,
}

impl Integrator<'_> {
    fn assemble(&self, s: &[f64], phi: &[f64]) -> Vec4 {
        let mut xi = Vec4::zeros();
        for (a, &i) in self.block.axes().iter().enumerate() {
            xi[i] = s[a];
        }
        for (a, &i) in self.block.complement().iter().enumerate() {
            xi[i] = phi[a];
        }
        xi
    }

    fn graph(&self, s: &[f64], phi: &[f64]) -> Option<DMatrix<f64>> {
        let y = self.base + self.model.basis() * self.assemble(s, phi);
        graph_at(self.model, &wrap4(&y), self.block, self.k)
    }

    fn slope(&self, s: &[f64], phi: &[f64], axis: usize) -> Option<Vec<f64>> {
        let c = self.graph(s, phi)?;
        Some(self.block.complement().iter().map(|&i| c[(i, axis)]).collect())
    }

    /// RK4 along one parameter axis from s over a signed length.
    fn advance(&self, s: &[f64], phi: &[f64], axis: usize, length: f64, steps: usize) -> Option<Vec<f64>> {
        let h = length / steps as f64;
        let mut s = s.to_vec();
        let mut p = phi.to_vec();
        let add = |p: &[f64], d: &[f64], f: f64| -> Vec<f64> { p.iter().zip(d).map(|(a, b)| a + f * b).collect() };
        for _ in 0..steps {
            let k1 = self.slope(&s, &p, axis)?;
            let mut sm = s.clone();
            sm[axis] += 0.5 * h;
            let k2 = self.slope(&sm, &add(&p, &k1, 0.5 * h), axis)?;
            let k3 = self.slope(&sm, &add(&p, &k2, 0.5 * h), axis)?;
            let mut se = s.clone();
            se[axis] += h;
            let k4 = self.slope(&se, &add(&p, &k3, h), axis)?;
            for a in 0..p.len() {
                p[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
            s = se;
        }
        Some(p)
    }

    /// Transverse values at node offsets mid±1, mid±2, … along an axis.
    fn line(&self, start: &[f64], phi0: &[f64], axis: usize, spacing: f64, half_nodes: usize, steps: usize) -> std::result::Result<Vec<Vec<f64>>, usize> {
        let side = 2 * half_nodes + 1;
        let mut out = vec![vec![]; side];
        out[half_nodes] = phi0.to_vec();
        for dir in [1.0f64, -1.0] {
            let mut s = start.to_vec();
            let mut p = phi0.to_vec();
            for step in 1..=half_nodes {
                p = self.advance(&s, &p, axis, dir * spacing, steps).ok_or(step)?;
                s[axis] += dir * spacing;
                let slot = if dir > 0.0 { half_nodes + step } else { half_nodes - step };
                out[slot] = p.clone();
            }
        }
        Ok(out)
    }
}

/// Leaf through the base point as a graph over the parameter square, by continuation along
/// the spine and then along each row.
pub fn integrate_leaf_patch(model: &DiffeoModel, block: AxisBlock, spec: &PatchSpec) -> Result<LeafPatch> {
    if spec.res == 0 || spec.res % 2 != 0 || spec.edge <= 0.0 || spec.max_step <= 0.0 {
        return Err(LabError::InvalidInput(format!("patch needs even res > 0 and positive edge/step: {spec:?}")));
    }
    if block.dim() > 2 {
        return Err(LabError::InvalidInput("leaf patches support one or two dimensions".into()));
    }
    let integ = Integrator {
        model,
        base: Vec4::from(spec.base),
        block,
        k: depth(&model.frame, block),
    };
    let spacing = spec.edge / spec.res as f64;
    let steps = (spacing / spec.max_step).ceil().max(1.0) as usize;
    let half = spec.res / 2;
    let side = spec.res + 1;
    let nt = 4 - block.dim();
    let dc = block.dim();
    let zero_s = vec![0.0; dc];
    let spine = integ
        .line(&zero_s, &vec![0.0; nt], 0, spacing, half, steps)
        .map_err(|st| LabError::CorrectorDivergence {
            node: (half + st, half),
            reason: "bundle continuation failed along the spine".into(),
        })?;
    let param = |i: usize| -> f64 { (i as f64 - half as f64) * spacing };
    let mut params = vec![];
    let mut phis: Vec<Vec<f64>> = vec![];
    if dc == 1 {
        for (i, p) in spine.into_iter().enumerate() {
            params.push(vec![param(i)]);
            phis.push(p);
        }
    } else {
        let rows: Vec<std::result::Result<Vec<Vec<f64>>, LabError>> = (0..side)
            .into_par_iter()
            .map(|i| {
                integ
                    .line(&[param(i), 0.0], &spine[i], 1, spacing, half, steps)
                    .map_err(|st| LabError::CorrectorDivergence {
                        node: (i, half + st),
                        reason: "bundle continuation failed along a row".into(),
                    })
            })
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            for (j, p) in row?.into_iter().enumerate() {
                params.push(vec![param(i), param(j)]);
                phis.push(p);
            }
        }
    }
    let points: Vec<Vec4> = params.iter().zip(&phis).map(|(s, p)| integ.assemble(s, p)).collect();
    let tangents: Vec<DMatrix<f64>> = params
        .par_iter()
        .zip(&phis)
        .enumerate()
        .map(|(n, (s, p))| {
            integ.graph(s, p).ok_or(LabError::CorrectorDivergence {
                node: (n / side, n % side),
                reason: "no tangent at node".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut residual: f64 = 0.0;
    for (s, xi) in params.iter().zip(&points) {
        for (a, &i) in block.axes().iter().enumerate() {
            residual = residual.max((xi[i] - s[a]).abs());
        }
    }
    Ok(LeafPatch {
        block,
        base: Vec4::from(spec.base),
        edge: spec.edge,
        res: spec.res,
        params,
        points,
        bilipschitz: tangents.iter().map(graph_stretch).fold(1.0, f64::max),
        tangents,
        projection_residual: residual,
    })
}

/// Minimal principal angle (degrees) between span(C) and the complement of the block axes.
pub fn tangent_angle(c: &DMatrix<f64>, block: AxisBlock) -> f64 {
    let q = c.clone().qr().q();
    let rows: Vec<usize> = block.complement();
    let mut m = DMatrix::zeros(c.ncols(), rows.len());
    for (b, &i) in rows.iter().enumerate() {
        for a in 0..c.ncols() {
            m[(a, b)] = q[(i, a)];
        }
    }
    let smax = m.singular_values().max().min(1.0);
    smax.acos().to_degrees()
}

pub fn angle_scan(patch: &LeafPatch) -> f64 {
    patch.tangents.iter().map(|c| tangent_angle(c, patch.block)).fold(90.0, f64::min)
}

/// Least Q with d_W ≤ Q d + Q over the given (in-leaf, ambient) distance pairs.
pub fn fit_quasi_isometry(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|&(dw, d)| dw / (d + 1.0)).fold(1.0, f64::max)
}

/// Fitted Q for an Archimedean spiral of the given diameter (arc length vs chord from the center).
pub fn spiral_control(diameter: f64) -> f64 {
    let pitch = 1.0;
    let turns = diameter / 2.0 / pitch;
    let n = (turns * 400.0).ceil() as usize;
    let mut pairs = vec![];
    let mut arc = 0.0;
    let mut prev = (0.0, 0.0);
    for i in 1..=n {
        let th = 2.0 * std::f64::consts::PI * turns * i as f64 / n as f64;
        let r = pitch * th / (2.0 * std::f64::consts::PI);
        let p = (r * th.cos(), r * th.sin());
        arc += ((p.0 - prev.0).powi(2) + (p.1 - prev.1).powi(2)).sqrt();
        prev = p;
        pairs.push((arc, r));
    }
    fit_quasi_isometry(&pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiIsometryReport {
    pub q: f64,
    pub max_ratio: f64,
    pub pairs: usize,
}

/// Interpolated adapted offset at a parameter (multilinear on the node grid).
fn interpolate(patch: &LeafPatch, s: &[f64]) -> Vec4 {
    let h = patch.spacing();
    let half = patch.edge / 2.0;
    let pos: Vec<f64> = s.iter().map(|v| ((v + half) / h).clamp(0.0, patch.res as f64)).collect();
    let i0: Vec<usize> = pos.iter().map(|p| (p.floor() as usize).min(patch.res - 1)).collect();
    let t: Vec<f64> = pos.iter().zip(&i0).map(|(p, &i)| p - i as f64).collect();
    if patch.dim() == 1 {
        return patch.points[i0[0]] * (1.0 - t[0]) + patch.points[i0[0] + 1] * t[0];
    }
    let at = |a: usize, b: usize| patch.points[patch.index(i0[0] + a, i0[1] + b)];
    at(0, 0) * ((1.0 - t[0]) * (1.0 - t[1])) + at(1, 0) * (t[0] * (1.0 - t[1])) + at(0, 1) * ((1.0 - t[0]) * t[1]) + at(1, 1) * (t[0] * t[1])
}

/// Length of the leaf curve over the straight parameter segment between two nodes.
fn leaf_path_length(patch: &LeafPatch, a: usize, b: usize) -> f64 {
    let sa = &patch.params[a];
    let sb = &patch.params[b];
    let dist: f64 = sa.iter().zip(sb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n = ((dist / patch.spacing()) * 4.0).ceil().max(1.0) as usize;
    let mut len = 0.0;
    let mut prev = patch.points[a];
    for k in 1..=n {
        let t = k as f64 / n as f64;
        let s: Vec<f64> = sa.iter().zip(sb).map(|(x, y)| x + t * (y - x)).collect();
        let p = if k == n { patch.points[b] } else { interpolate(patch, &s) };
        len += (p - prev).norm();
        prev = p;
    }
    len
}

fn sample_pairs(n_nodes: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (rng.gen_range(0..n_nodes), rng.gen_range(0..n_nodes)))
        .filter(|(a, b)| a != b)
        .collect()
}

pub fn quasi_isometry_scan(patch: &LeafPatch, count: usize, seed: u64) -> QuasiIsometryReport {
    let pairs = sample_pairs(patch.points.len(), count, seed);
    let dd: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(a, b)| (leaf_path_length(patch, a, b), (patch.points[a] - patch.points[b]).norm()))
        .collect();
    let max_ratio = dd.iter().filter(|p| p.1 >= 1.0).map(|p| p.0 / p.1).fold(1.0, f64::max);
    QuasiIsometryReport {
        q: fit_quasi_isometry(&dd),
        max_ratio,
        pairs: dd.len(),
    }
}

/// Largest distance from a leaf point to the linear center plane through the base point.
pub fn shadowing_check(patch: &LeafPatch) -> f64 {
    patch.points.iter().map(|p| patch.transverse_norm(p)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub threshold: f64,
    pub ratio: f64,
    pub pairs: usize,
}

/// Max of ‖transverse part‖/‖center part‖ of x − y over sampled pairs with ‖x − y‖ > M.
pub fn projection_asymptotics(patch: &LeafPatch, thresholds: &[f64], count: usize, seed: u64) -> Vec<RatioRow> {
    let pairs = sample_pairs(patch.points.len(), count, seed);
    let rd: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(a, b)| {
            let d = patch.points[a] - patch.points[b];
            (d.norm(), patch.transverse_norm(&d) / patch.along_norm(&d))
        })
        .collect();
    thresholds
        .iter()
        .map(|&m| {
            let sel: Vec<f64> = rd.iter().filter(|p| p.0 > m).map(|p| p.1).collect();
            RatioRow {
                threshold: m,
                ratio: sel.iter().cloned().fold(0.0, f64::max),
                pairs: sel.len(),
            }
        })
        .collect()
}

pub fn strictly_decreasing(rows: &[RatioRow]) -> bool {
    rows.windows(2).all(|w| w[1].ratio < w[0].ratio) && rows.iter().all(|r| r.pairs > 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafGeometry {
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "R_c")]
    pub r_c: f64,
    pub alpha_min: f64,
    pub ratio_table: Vec<RatioRow>,
    pub bilipschitz: f64,
    pub projection_residual: f64,
    /// (diameter, Q, R_c) on nested sub-patches
    pub scales: Vec<(f64, f64, f64)>,
}

pub fn leaf_geometry(patch: &LeafPatch, thresholds: &[f64], pairs: usize, seed: u64) -> LeafGeometry {
    let mut scales = vec![];
    let mut d = patch.edge;
    let mut subs = vec![];
    while d >= patch.edge / 4.0 - 1e-9 {
        subs.push(d);
        d /= 2.0;
    }
    subs.reverse();
    for d in subs {
        let sp = patch.sub_patch(d / 2.0);
        scales.push((sp.edge, quasi_isometry_scan(&sp, pairs, seed).q, shadowing_check(&sp)));
    }
    LeafGeometry {
        q: quasi_isometry_scan(patch, pairs, seed).q,
        r_c: shadowing_check(patch),
        alpha_min: angle_scan(patch),
        ratio_table: projection_asymptotics(patch, thresholds, pairs * 10, seed),
        bilipschitz: patch.bilipschitz,
        projection_residual: patch.projection_residual,
        scales,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub c0: f64,
    pub eps: f64,
    /// None when the measured gap admits no q
    pub q: Option<u64>,
    pub alpha: f64,
    /// edge length requested by the caller as the large-scale threshold
    pub min_edge: f64,
    pub vol_r: f64,
    pub linear_center_sum: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: usize,
    pub measured_vol: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub containment_pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthProbe {
    pub rows: Vec<GrowthRow>,
    pub constants: GrowthConstants,
    /// n* from the bounds' closed forms
    pub predicted_crossing: Option<f64>,
    /// first n ≤ n_max with lower > upper
    pub observed_crossing: Option<usize>,
    /// measured ≥ lower at every n
    pub lower_holds: bool,
    /// measured ≤ upper at every n (fails once the node spacing no longer resolves the Jacobian)
    pub upper_holds: bool,
    /// |Jac fⁿ| on the leaf ≤ Kⁿ at every node
    pub jacobian_bound_holds: bool,
    /// edge needed by the one-step containment argument: 2K/(λ ε)
    pub containment_edge: f64,
}

/// q = least integer with gap > log(1 + 1/q).
pub fn q_for_gap(gap: f64) -> Option<u64> {
    if gap <= 0.0 || !gap.is_finite() {
        return None;
    }
    let q = (1.0 / gap.exp_m1()).floor() as u64 + 1;
    Some(q)
}

fn triangulated_cells(patch: &LeafPatch) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![];
    if patch.dim() == 1 {
        for i in 0..patch.res {
            out.push((vec![i, i + 1], (patch.points[i + 1] - patch.points[i]).norm()));
        }
        return out;
    }
    let tri = |a: Vec4, b: Vec4, c: Vec4| -> f64 {
        let u = b - a;
        let v = c - a;
        (u.norm_squared() * v.norm_squared() - u.dot(&v).powi(2)).max(0.0).sqrt() * 0.5
    };
    for i in 0..patch.res {
        for j in 0..patch.res {
            let a = patch.index(i, j);
            let b = patch.index(i + 1, j);
            let c = patch.index(i, j + 1);
            let d = patch.index(i + 1, j + 1);
            let p = &patch.points;
            out.push((vec![a, b, d], tri(p[a], p[b], p[d])));
            out.push((vec![a, d, c], tri(p[a], p[d], p[c])));
        }
    }
    out
}

/// Pushes the patch n = 1..n_max times; leaf volume of the image is the triangulated
/// integral of the leaf Jacobian. Bounds use the constants described on `GrowthConstants`.
pub fn volume_growth_probe(model: &DiffeoModel, patch: &LeafPatch, n_max: usize, gap: f64, min_edge: f64) -> Result<GrowthProbe> {
    if patch.edge < min_edge {
        return Err(LabError::Precondition(format!(
            "patch edge {} below the large-scale threshold {min_edge} needed for the length sandwich",
            patch.edge
        )));
    }
    if n_max == 0 {
        return Err(LabError::InvalidInput("n_max must be positive".into()));
    }
    let block = patch.block;
    let dc = block.dim();
    let k = depth(&model.frame, block);
    let lm = model.frame.log_moduli();
    let lin: f64 = block.axes().iter().map(|&i| lm[i]).sum();
    let eig: Vec<f64> = block.axes().iter().map(|&i| model.frame.eigenvalues[i]).collect();
    let q = q_for_gap(gap);
    let eps = q.map(|q| (1.0 + 1.0 / q as f64).powf(0.5 / dc as f64) - 1.0).unwrap_or(0.0);
    let log_q = q.map(|q| (1.0 / q as f64).ln_1p()).unwrap_or(0.0);
    let c0 = patch.bilipschitz.powi(dc as i32);
    let vol_r = patch.edge.powi(dc as i32);
    let b = *model.basis();
    let bi = *model.basis_inv();
    let a = *model.a();
    let lip_adapted = op_norm(&(bi * a * b)) + op_norm(&bi) * op_norm(&b) * model.certificates.sup_dg_minus_a;
    // per node: log Jacobians for n = 0..n_max and block coordinates of the pushed lift
    let per_node: Vec<Option<(Vec<f64>, Vec<Vec<f64>>)>> = (0..patch.points.len())
        .into_par_iter()
        .map(|nd| {
            let y = patch.cover_point(model, nd);
            let ob = orbit_bundles(model, &wrap4(&y), block, n_max, k)?;
            let logs: Vec<f64> = (0..=n_max).map(|m| ob.log_jac(m)).collect();
            let mut cen: Vec<f64> = block.axes().iter().map(|&i| patch.points[nd][i]).collect();
            let mut cens = vec![cen.clone()];
            for t in 0..n_max {
                let x = ob.points[t];
                let disp: Vec4 = bi * (a * (model.perturbation(&x) - x));
                for (c, (&i, l)) in cen.iter_mut().zip(block.axes().iter().zip(&eig)) {
                    *c = l * *c + disp[i];
                }
                cens.push(cen.clone());
            }
            Some((logs, cens))
        })
        .collect();
    let per_node: Vec<(Vec<f64>, Vec<Vec<f64>>)> = per_node
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or(LabError::CorrectorDivergence {
                node: (i, 0),
                reason: "bundle continuation failed along the pushed orbit".into(),
            })
        })
        .collect::<Result<_>>()?;
    let cells = triangulated_cells(patch);
    let leaf_area: f64 = cells.iter().map(|c| c.1).sum();
    // α: area fraction of nodes whose Jacobian beats (1+1/q)ᵏ e^{kΣλ} for every k ≤ n_max
    let mut good_area = 0.0;
    let mut jac_ok = true;
    let tol = 1e-12;
    let good: Vec<bool> = per_node
        .iter()
        .map(|(logs, _)| (1..=n_max).all(|m| logs[m] - m as f64 * (lin + log_q) > if q.is_some() { 0.0 } else { -tol * m as f64 }))
        .collect();
    for (logs, _) in &per_node {
        for (m, l) in logs.iter().enumerate() {
            if *l > m as f64 * dc as f64 * lip_adapted.ln() + tol {
                jac_ok = false;
            }
        }
    }
    for (verts, area) in &cells {
        let frac = verts.iter().filter(|&&v| good[v]).count() as f64 / verts.len() as f64;
        good_area += area * frac;
    }
    let alpha = good_area / leaf_area;
    let mid = patch.index(patch.res / 2, patch.res / 2);
    let mut rows = vec![];
    for n in 1..=n_max {
        let measured: f64 = cells
            .iter()
            .map(|(verts, area)| area * verts.iter().map(|&v| per_node[v].0[n].exp()).sum::<f64>() / verts.len() as f64)
            .sum();
        let base = (n as f64 * lin).exp() * vol_r;
        let upper = c0 * (1.0 + eps).powi((n * dc) as i32) * base;
        let lower = (n as f64 * log_q).exp() * base * alpha;
        let center = &per_node[mid].1[n];
        let containment = per_node.iter().all(|(_, cens)| {
            cens[n].iter().zip(center).zip(&eig).all(|((c, z), l)| {
                let lim = (1.0 + eps).powi(n as i32) * l.abs().powi(n as i32) * patch.edge / 2.0;
                (c - z).abs() <= lim * (1.0 + 1e-12)
            })
        });
        rows.push(GrowthRow {
            n,
            measured_vol: measured,
            upper_bound: upper,
            lower_bound: lower,
            containment_pass: containment,
        });
    }
    let denom = log_q - dc as f64 * eps.ln_1p();
    let predicted = if q.is_some() && alpha > 0.0 && denom > 0.0 {
        Some((c0 / alpha).ln().max(0.0) / denom)
    } else {
        None
    };
    let kdisp = op_norm(&(bi * a)) * model.certificates.c0_distance;
    let lam_min = eig.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    Ok(GrowthProbe {
        observed_crossing: rows.iter().find(|r| r.lower_bound > r.upper_bound).map(|r| r.n),
        lower_holds: rows.iter().all(|r| r.measured_vol >= r.lower_bound * (1.0 - 1e-12)),
        upper_holds: rows.iter().all(|r| r.measured_vol <= r.upper_bound * (1.0 + 1e-12)),
        rows,
        constants: GrowthConstants {
            c0,
            eps,
            q,
            alpha,
            min_edge,
            vol_r,
            linear_center_sum: lin,
        },
        predicted_crossing: predicted,
        jacobian_bound_holds: jac_ok,
        containment_edge: if eps > 0.0 { 2.0 * kdisp / (lam_min * eps) } else { 0.0 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleReport {
    pub n: usize,
    pub c: f64,
    pub m_estimate: f64,
    pub analytic_bound: f64,
    pub sup_deviation: f64,
}

fn lift_iterate(model: &DiffeoModel, x: &Vec4, n: usize) -> Vec4 {
    let mut y = *x;
    for _ in 0..n {
        y = model.forward_lift(&y);
    }
    y
}

/// Least doubling scale M beyond which ‖f̃ⁿx − f̃ⁿy‖/‖Ãⁿx − Ãⁿy‖ stays in (1/C, C) on samples.
pub fn large_scale_ratio(model: &DiffeoModel, n: usize, c: f64, samples: usize, seed: u64) -> Result<LargeScaleReport> {
    if c <= 1.0 {
        return Err(LabError::InvalidInput("ratio bound C must exceed 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(Vec4, Vec4)> = (0..samples)
        .map(|_| {
            let x = Vec4::from_fn(|_, _| rng.gen::<f64>());
            let mut d = Vec4::from_fn(|_, _| rng.gen::<f64>() - 0.5);
            while d.norm() < 1e-3 {
                d = Vec4::from_fn(|_, _| rng.gen::<f64>() - 0.5);
            }
            (x, d / d.norm())
        })
        .collect();
    let an: Mat4 = (0..n).fold(Mat4::identity(), |acc, _| model.a() * acc);
    let an_inv: Mat4 = (0..n).fold(Mat4::identity(), |acc, _| model.a_inv() * acc);
    let fx: Vec<Vec4> = pts.iter().map(|(x, _)| lift_iterate(model, x, n)).collect();
    let sup_dev = pts.iter().zip(&fx).map(|((x, _), f)| (f - an * x).norm()).fold(0.0, f64::max);
    let passes = |m: f64| -> bool {
        pts.iter().zip(&fx).all(|((x, d), f)| {
            let y = x + d * m;
            let r = (lift_iterate(model, &y, n) - f).norm() / (an * (d * m)).norm();
            r > 1.0 / c && r < c
        })
    };
    let scales: Vec<f64> = (-4..48).map(|j| 2f64.powi(j)).collect();
    let ok: Vec<bool> = scales.iter().map(|&m| passes(m)).collect();
    let m_est = if ok.iter().all(|&v| v) {
        0.0
    } else {
        let last_fail = ok.iter().rposition(|&v| !v).unwrap();
        if last_fail + 1 >= scales.len() {
            f64::INFINITY
        } else {
            scales[last_fail + 1]
        }
    };
    Ok(LargeScaleReport {
        n,
        c,
        m_estimate: m_est,
        analytic_bound: 2.0 * sup_dev * op_norm(&an_inv) * c / (c - 1.0),
        sup_deviation: sup_dev,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManeVerdict {
    pub k0: f64,
    pub alpha: f64,
    pub lengths: Vec<f64>,
    pub hypothesis_holds: bool,
    pub bound_holds: bool,
    pub verdict: String,
}

/// Tracks the length of a one-dimensional leaf segment under iteration against α e^{n/k0}.
pub fn mane_growth_tracker(model: &DiffeoModel, block: AxisBlock, base: [f64; 4], half_length: f64, res: usize, k0: f64, n_max: usize) -> Result<ManeVerdict> {
    if block.dim() != 1 {
        return Err(LabError::InvalidInput("segment tracking needs a one-dimensional bundle".into()));
    }
    let patch = integrate_leaf_patch(
        model,
        block,
        &PatchSpec {
            base,
            edge: 2.0 * half_length,
            res,
            max_step: 0.1,
        },
    )?;
    let k = depth(&model.frame, block);
    let logs: Vec<Vec<f64>> = (0..patch.points.len())
        .into_par_iter()
        .map(|nd| {
            let y = patch.cover_point(model, nd);
            orbit_bundles(model, &wrap4(&y), block, n_max, k).map(|ob| (0..=n_max).map(|m| ob.log_jac(m)).collect())
        })
        .collect::<Option<Vec<_>>>()
        .ok_or(LabError::CorrectorDivergence {
            node: (0, 0),
            reason: "bundle continuation failed on the segment".into(),
        })?;
    let cells = triangulated_cells(&patch);
    let lengths: Vec<f64> = (0..=n_max)
        .map(|n| cells.iter().map(|(v, l)| l * 0.5 * (logs[v[0]][n].exp() + logs[v[1]][n].exp())).sum())
        .collect();
    let alpha = lengths[0];
    let mid = patch.res / 2;
    let hypothesis = (1..=n_max).all(|j| logs[mid][j] >= j as f64 / k0);
    let bound = (1..=n_max).all(|n| lengths[n] >= alpha * (n as f64 / k0).exp() * (1.0 - 1e-12));
    let verdict = if !hypothesis {
        "expansion hypothesis fails along the orbit: verdict withheld".to_string()
    } else if bound {
        format!("segment length grows at least like alpha e^(n/k0) for n <= {n_max}")
    } else {
        "length bound violated".to_string()
    };
    Ok(ManeVerdict {
        k0,
        alpha,
        lengths,
        hypothesis_holds: hypothesis,
        bound_holds: bound,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::BumpProfile;
    use crate::linear::{build_an, SplittingKind};
    use crate::model::compose_da;
    use crate::perturb::{make_booster_with, BoosterDesign};
    use crate::torus::TorusPoint;

    fn linear() -> DiffeoModel {
        compose_da(&build_an(100).unwrap(), vec![]).unwrap()
    }

    fn boosted() -> DiffeoModel {
        let a = build_an(100).unwrap();
        let (h, _) = make_booster_with(&a, &BoosterDesign::an_default(), 1.0, BumpProfile::new(1.0 / 3.0, 2).unwrap(), &TorusPoint::new([0.0; 4]).unwrap()).unwrap();
        compose_da(&a, vec![h]).unwrap()
    }

    fn e_block(m: &DiffeoModel) -> AxisBlock {
        AxisBlock::center_of(&m.frame, SplittingKind::E)
    }

    fn spec(edge: f64, res: usize) -> PatchSpec {
        PatchSpec {
            edge,
            res,
            ..Default::default()
        }
    }

    #[test]
    fn linear_patch_is_flat() {
        let m = linear();
        let p = integrate_leaf_patch(&m, e_block(&m), &spec(10.0, 10)).unwrap();
        assert!(p.projection_residual < 1e-12);
        assert!(shadowing_check(&p) < 1e-12);
        assert!((angle_scan(&p) - 90.0).abs() < 1e-9);
        let q = quasi_isometry_scan(&p, 300, 1);
        assert!((q.q - 1.0).abs() < 1e-9);
        assert!(projection_asymptotics(&p, &[1.0, 2.0], 500, 1).iter().all(|r| r.ratio < 1e-12));
    }

    #[test]
    fn tilted_tangent_has_small_angle() {
        let b = AxisBlock { lo: 1, hi: 2 };
        let mut c = DMatrix::zeros(4, 2);
        c[(1, 0)] = 1.0;
        c[(2, 1)] = 1.0;
        c[(0, 0)] = 1e4;
        c[(3, 1)] = 1e4;
        assert!(tangent_angle(&c, b) < 0.01);
    }

    #[test]
    fn spiral_control_grows_with_diameter() {
        let a = spiral_control(20.0);
        let b = spiral_control(40.0);
        assert!(b > 1.8 * a && a > 3.0, "{a} {b}");
    }

    #[test]
    fn perturbed_patch_geometry() {
        let m = boosted();
        let p = integrate_leaf_patch(&m, e_block(&m), &spec(8.0, 16)).unwrap();
        assert!(p.projection_residual < 1e-8);
        let a = angle_scan(&p);
        assert!(a > 80.0 && a < 90.0, "{a}");
        let r = shadowing_check(&p);
        assert!(r > 0.0 && r < 1.0, "{r}");
        let q = quasi_isometry_scan(&p, 200, 2);
        assert!(q.q >= 1.0 && q.q < 1.5);
        assert!(p.bilipschitz >= 1.0 && p.bilipschitz < 1.2);
        // refinement of the integration step moves nodes very little
        let fine = integrate_leaf_patch(&m, e_block(&m), &PatchSpec { max_step: 0.05, ..spec(8.0, 16) }).unwrap();
        let moved = p.points.iter().zip(&fine.points).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(moved < 1e-4, "{moved}");
    }

    #[test]
    fn linear_growth_is_exact() {
        let m = linear();
        let p = integrate_leaf_patch(&m, e_block(&m), &spec(10.0, 10)).unwrap();
        let g = volume_growth_probe(&m, &p, 6, 0.0, 0.0).unwrap();
        let lin = m.frame.center_log_sum();
        for r in &g.rows {
            let expect = (r.n as f64 * lin).exp() * 100.0;
            assert!((r.measured_vol / expect - 1.0).abs() < 1e-9);
            assert!(r.containment_pass);
            assert!(r.lower_bound <= r.upper_bound * (1.0 + 1e-12));
        }
        assert_eq!(g.observed_crossing, None);
        assert_eq!(g.predicted_crossing, None);
        assert!(g.lower_holds && g.upper_holds && g.jacobian_bound_holds);
        assert!((g.constants.alpha - 1.0).abs() < 1e-12 && g.constants.c0 == 1.0);
    }

    #[test]
    fn growth_rejects_small_patch() {
        let m = linear();
        let p = integrate_leaf_patch(&m, e_block(&m), &spec(4.0, 4)).unwrap();
        assert!(matches!(volume_growth_probe(&m, &p, 3, 0.0, 10.0), Err(LabError::Precondition(_))));
    }

    #[test]
    fn q_choice() {
        assert_eq!(q_for_gap(0.0), None);
        let q = q_for_gap(5e-4).unwrap();
        assert!(5e-4 > (1.0 / q as f64).ln_1p());
        assert!(5e-4 <= (1.0 / (q - 1) as f64).ln_1p());
    }

    #[test]
    fn large_scale_ratio_scales() {
        let lin = large_scale_ratio(&linear(), 2, 1.1, 64, 3).unwrap();
        assert_eq!(lin.m_estimate, 0.0);
        let m = boosted();
        let loose = large_scale_ratio(&m, 2, 1.1, 64, 3).unwrap();
        let tight = large_scale_ratio(&m, 2, 1.01, 64, 3).unwrap();
        assert!(loose.m_estimate.is_finite() && loose.m_estimate > 0.0);
        assert!(tight.m_estimate > loose.m_estimate);
        assert!(loose.m_estimate <= loose.analytic_bound);
    }

    #[test]
    fn mane_tracker_linear_and_control() {
        let m = linear();
        let b = AxisBlock { lo: 1, hi: 1 };
        let k0 = 1.0 / m.frame.log_moduli()[1];
        let v = mane_growth_tracker(&m, b, [0.1, 0.2, 0.3, 0.4], 2.0, 8, k0 * (1.0 + 1e-9), 10).unwrap();
        assert!(v.hypothesis_holds && v.bound_holds);
        for n in 1..=10 {
            let r = v.lengths[n] / v.lengths[n - 1];
            assert!((r.ln() * k0 - 1.0).abs() < 1e-9);
        }
        let s = mane_growth_tracker(&m, AxisBlock { lo: 0, hi: 0 }, [0.1, 0.2, 0.3, 0.4], 2.0, 8, k0, 5).unwrap();
        assert!(!s.hypothesis_holds);
    }
}
