//! Invariant sub-bundles of a model in the adapted frame, as graphs over a block of eigen-axes.
//!
//! A bundle for the contiguous axis block `lo..=hi` (axes ordered by modulus) is the
//! intersection of the forward-continued frame of axes `lo..=3` with the kernel of the
//! backward-continued annihilator of axes `hi+1..=3`.

use crate::linear::{SplittingKind, SpectrumFrame};
use crate::matfun::{Mat4, Vec4};
use crate::model::DiffeoModel;
use nalgebra::DMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AxisBlock {
    pub lo: usize,
    pub hi: usize,
}

impl AxisBlock {
    pub fn center_of(frame: &SpectrumFrame, kind: SplittingKind) -> Self {
        let c = &frame.splitting(kind).center;
        Self {
            lo: *c.iter().min().unwrap(),
            hi: *c.iter().max().unwrap(),
        }
    }

    pub fn dim(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn axes(&self) -> Vec<usize> {
        (self.lo..=self.hi).collect()
    }

    /// Axes outside the block.
    pub fn complement(&self) -> Vec<usize> {
        (0..4).filter(|i| *i < self.lo || *i > self.hi).collect()
    }
}

/// Continuation depth: enough steps for a 36-nat contraction at the slower of the two edges.
pub fn depth(frame: &SpectrumFrame, block: AxisBlock) -> usize {
    let m = frame.moduli();
    let mut rate = f64::INFINITY;
    if block.lo > 0 {
        rate = rate.min((m[block.lo] / m[block.lo - 1]).ln());
    }
    if block.hi < 3 {
        rate = rate.min((m[block.hi + 1] / m[block.hi]).ln());
    }
    if !rate.is_finite() {
        return 1;
    }
    ((36.0 / rate).ceil() as usize).clamp(4, 400)
}

/// Q·R with positive diagonal of R.
pub fn qr_positive(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = vec![0.0; r.ncols().min(r.nrows())];
    for (i, d) in diag.iter_mut().enumerate() {
        let v = r[(i, i)];
        if v < 0.0 {
            let mut c = q.column_mut(i);
            c *= -1.0;
        }
        *d = v.abs();
    }
    (q, diag)
}

pub fn to_dm(m: &Mat4) -> DMatrix<f64> {
    DMatrix::from_column_slice(4, 4, m.as_slice())
}

pub fn unit_columns(idx: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        m[(i, c)] = 1.0;
    }
    m
}

/// Frame pushed forward along the orbit (axes lo..=3).
pub fn push_axes(block: AxisBlock) -> DMatrix<f64> {
    unit_columns(&(block.lo..4).collect::<Vec<_>>())
}

/// Annihilator pulled back along the orbit (axes hi+1..=3); may have zero columns.
pub fn pull_axes(block: AxisBlock) -> DMatrix<f64> {
    unit_columns(&(block.hi + 1..4).collect::<Vec<_>>())
}

/// Bundle as a graph basis: columns whose block rows form the identity.
pub fn graph_basis(push: &DMatrix<f64>, ann: &DMatrix<f64>, block: AxisBlock) -> Option<DMatrix<f64>> {
    let dim = block.dim();
    let basis = if ann.ncols() == 0 {
        push.clone()
    } else {
        let k = ann.transpose() * push;
        let eig = (k.transpose() * &k).symmetric_eigen();
        let mut order: Vec<usize> = (0..push.ncols()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let mut b = DMatrix::zeros(4, dim);
        for (c, &o) in order.iter().take(dim).enumerate() {
            b.set_column(c, &(push * eig.eigenvectors.column(o)));
        }
        b
    };
    if basis.ncols() != dim {
        return None;
    }
    let pc = basis.rows(block.lo, dim).into_owned();
    let inv = pc.try_inverse()?;
    Some(basis * inv)
}

/// log |det(P_block M C)| for a graph basis C.
pub fn projected_log_jac(m: &DMatrix<f64>, c: &DMatrix<f64>, block: AxisBlock) -> f64 {
    let img = m * c;
    img.rows(block.lo, block.dim()).into_owned().determinant().abs().ln()
}

/// log of the dᶜ-volume spanned by the graph basis columns.
pub fn log_area(c: &DMatrix<f64>) -> f64 {
    0.5 * (c.transpose() * c).determinant().ln()
}

fn adapted(model: &DiffeoModel, d: &Mat4) -> DMatrix<f64> {
    to_dm(&(model.basis_inv() * d * model.basis()))
}

/// Bundle at a torus point, continued k steps each way.
pub fn graph_at(model: &DiffeoModel, x: &Vec4, block: AxisBlock, k: usize) -> Option<DMatrix<f64>> {
    let mut push = push_axes(block);
    if block.lo > 0 {
        let mut pre = Vec::with_capacity(k);
        let mut y = *x;
        for _ in 0..k {
            y = model.step_back(&y);
            pre.push(y);
        }
        for p in pre.iter().rev() {
            push = qr_positive(&(adapted(model, &model.differential(p)) * &push)).0;
        }
    }
    let mut ann = pull_axes(block);
    if ann.ncols() > 0 {
        let mut mats = Vec::with_capacity(k);
        let mut y = *x;
        for _ in 0..k {
            let (yn, d) = model.step_with_differential(&y);
            mats.push(adapted(model, &d));
            y = yn;
        }
        for m in mats.iter().rev() {
            ann = qr_positive(&(m.transpose() * &ann)).0;
        }
    }
    graph_basis(&push, &ann, block)
}

/// Bundles and one-step projected Jacobians along a forward orbit of length n.
#[derive(Clone, Debug)]
pub struct OrbitBundles {
    /// x_0..x_n (torus coordinates)
    pub points: Vec<Vec4>,
    /// adapted differentials at x_0..x_{n-1}
    pub differentials: Vec<DMatrix<f64>>,
    pub graphs: Vec<DMatrix<f64>>,
    pub log_proj: Vec<f64>,
}

impl OrbitBundles {
    /// log of the metric Jacobian of Dfᵐ on the bundle at x_0, m ≤ n.
    pub fn log_jac(&self, m: usize) -> f64 {
        self.log_proj[..m].iter().sum::<f64>() + log_area(&self.graphs[m]) - log_area(&self.graphs[0])
    }
}

pub fn orbit_bundles(model: &DiffeoModel, x: &Vec4, block: AxisBlock, n: usize, k: usize) -> Option<OrbitBundles> {
    let mut push = push_axes(block);
    if block.lo > 0 {
        let mut pre = Vec::with_capacity(k);
        let mut y = *x;
        for _ in 0..k {
            y = model.step_back(&y);
            pre.push(y);
        }
        for p in pre.iter().rev() {
            push = qr_positive(&(adapted(model, &model.differential(p)) * &push)).0;
        }
    }
    let mut points = vec![*x];
    let mut mats = Vec::with_capacity(n + k);
    let mut y = *x;
    for _ in 0..n + k {
        let (yn, d) = model.step_with_differential(&y);
        mats.push(adapted(model, &d));
        y = yn;
        if points.len() <= n {
            points.push(y);
        }
    }
    let mut anns = vec![DMatrix::zeros(4, 0); n + 1];
    let mut ann = pull_axes(block);
    if ann.ncols() > 0 {
        for t in (0..n + k).rev() {
            ann = qr_positive(&(mats[t].transpose() * &ann)).0;
            if t <= n {
                anns[t] = ann.clone();
            }
        }
    }
    let mut graphs = Vec::with_capacity(n + 1);
    let mut log_proj = Vec::with_capacity(n);
    for t in 0..=n {
        let c = graph_basis(&push, &anns[t], block)?;
        if t < n {
            log_proj.push(projected_log_jac(&mats[t], &c, block));
            push = qr_positive(&(&mats[t] * &push)).0;
        }
        graphs.push(c);
    }
    mats.truncate(n);
    Some(OrbitBundles {
        points,
        differentials: mats,
        graphs,
        log_proj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{build_an, build_theorem_c_matrix};
    use crate::model::compose_da;

    #[test]
    fn linear_bundles_are_axes() {
        for a in [build_an(100).unwrap(), build_theorem_c_matrix()] {
            let m = compose_da(&a, vec![]).unwrap();
            for kind in [SplittingKind::E, SplittingKind::F] {
                let b = AxisBlock::center_of(&m.frame, kind);
                let k = depth(&m.frame, b);
                let c = graph_at(&m, &Vec4::new(0.1, 0.2, 0.3, 0.4), b, k).unwrap();
                for i in b.complement() {
                    for j in 0..b.dim() {
                        assert!(c[(i, j)].abs() < 1e-12);
                    }
                }
                let o = orbit_bundles(&m, &Vec4::new(0.1, 0.2, 0.3, 0.4), b, 5, k).unwrap();
                let lm = m.frame.log_moduli();
                let expect: f64 = b.axes().iter().map(|&i| lm[i]).sum::<f64>() * 5.0;
                assert!((o.log_jac(5) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn depth_uses_slower_edge() {
        let f = crate::linear::solve_spectrum(&build_an(100).unwrap()).unwrap();
        let e = depth(&f, AxisBlock { lo: 1, hi: 2 });
        let fsplit = depth(&f, AxisBlock { lo: 1, hi: 1 });
        assert!(e < fsplit);
        assert_eq!(depth(&f, AxisBlock { lo: 0, hi: 3 }), 1);
    }
}
