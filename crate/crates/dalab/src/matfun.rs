//! Small dense matrix helpers: exponential, logarithm near the identity, norms.

use crate::error::{LabError, Result};
use nalgebra::{Matrix4, Vector4};

pub type Mat4 = Matrix4<f64>;
pub type Vec4 = Vector4<f64>;

/// Largest singular value.
pub fn op_norm(m: &Mat4) -> f64 {
    let s = (m.transpose() * m).symmetric_eigenvalues();
    s.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

pub fn min_singular(m: &Mat4) -> f64 {
    let s = (m.transpose() * m).symmetric_eigenvalues();
    s.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0).sqrt()
}

/// Scaling and squaring with a degree-18 Taylor polynomial.
pub fn expm(a: &Mat4) -> Mat4 {
    let norm = a.abs().row_sum().max();
    let mut s = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        s += 1;
    }
    let x = a * scale;
    let mut term = Mat4::identity();
    let mut sum = Mat4::identity();
    for k in 1..=18 {
        term = term * x / k as f64;
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

fn sqrtm_db(a: &Mat4) -> Option<Mat4> {
    // Denman-Beavers iteration
    let mut y = *a;
    let mut z = Mat4::identity();
    for _ in 0..60 {
        let yi = y.try_inverse()?;
        let zi = z.try_inverse()?;
        let yn = (y + zi) * 0.5;
        let zn = (z + yi) * 0.5;
        let done = (yn - y).abs().max() < 1e-15;
        y = yn;
        z = zn;
        if done {
            break;
        }
    }
    Some(y)
}

/// Principal logarithm of a matrix within distance 0.5 (max-row-sum norm) of the identity.
pub fn logm(a: &Mat4) -> Result<Mat4> {
    let id = Mat4::identity();
    let dist = (a - id).abs().row_sum().max();
    if dist >= 0.5 {
        return Err(LabError::OutOfNeighborhood {
            distance: dist,
            limit: 0.5,
        });
    }
    let mut m = *a;
    let mut k = 0;
    while (m - id).abs().row_sum().max() > 1e-3 {
        m = sqrtm_db(&m).ok_or_else(|| LabError::InvalidInput("singular matrix in logm".into()))?;
        k += 1;
    }
    let x = m - id;
    let mut term = id;
    let mut sum = Mat4::zeros();
    for j in 1..=16 {
        term *= x;
        let c = if j % 2 == 1 { 1.0 } else { -1.0 } / j as f64;
        sum += term * c;
    }
    Ok(sum * 2f64.powi(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exp_of_diagonal() {
        let d = Mat4::from_diagonal(&Vec4::new(0.1, -0.2, 0.3, -0.2));
        let e = expm(&d);
        for i in 0..4 {
            assert!((e[(i, i)] - d[(i, i)].exp()).abs() < 1e-14);
        }
        assert!((e.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exp_of_nilpotent_is_polynomial() {
        let mut n = Mat4::zeros();
        n[(0, 1)] = 2.0;
        n[(1, 2)] = 3.0;
        let e = expm(&n);
        let expect = Mat4::identity() + n + n * n * 0.5;
        assert!((e - expect).abs().max() < 1e-13);
    }

    #[test]
    fn log_far_from_identity_errors() {
        let a = Mat4::identity() * 2.0;
        assert!(matches!(logm(&a), Err(LabError::OutOfNeighborhood { .. })));
    }

    #[test]
    fn op_norm_matches_svd() {
        let m = Mat4::new(1.0, 2.0, 0.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 4.0);
        let s = m.svd(false, false).singular_values;
        assert!((op_norm(&m) - s.max()).abs() < 1e-12);
        assert!((min_singular(&m) - s.min()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn log_inverts_exp_near_identity(v in prop::collection::vec(-0.04f64..0.04, 16)) {
            let b = Mat4::from_iterator(v.into_iter());
            let a = expm(&b);
            let l = logm(&a).unwrap();
            prop_assert!((l - b).abs().max() < 1e-12);
        }

        #[test]
        fn exp_det_is_exp_trace(v in prop::collection::vec(-0.3f64..0.3, 16)) {
            let b = Mat4::from_iterator(v.into_iter());
            let a = expm(&b);
            prop_assert!((a.determinant() - b.trace().exp()).abs() < 1e-12);
        }
    }
}
