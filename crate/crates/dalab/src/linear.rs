//! Integer toral automorphisms: the two explicit families, exact characteristic
//! polynomials, real spectra and the two dominated splittings.

use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerMatrix {
    d: usize,
    entries: Vec<i64>,
}

impl IntegerMatrix {
    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(LabError::InvalidInput("matrix must be square and non-empty".into()));
        }
        let m = Self {
            d,
            entries: rows.iter().flatten().copied().collect(),
        };
        let det = m.determinant();
        if det.abs() != 1 {
            return Err(LabError::InvalidInput(format!("determinant {det} is not +-1")));
        }
        Ok(m)
    }

    pub fn identity(d: usize) -> Self {
        let mut entries = vec![0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1;
        }
        Self { d, entries }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.d + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries.chunks(self.d).map(|r| r.to_vec()).collect()
    }

    /// Exact determinant by fraction-free Bareiss elimination.
    pub fn determinant(&self) -> i128 {
        let d = self.d;
        let mut a: Vec<i128> = self.entries.iter().map(|&x| x as i128).collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..d {
            if a[k * d + k] == 0 {
                let Some(p) = (k + 1..d).find(|&r| a[r * d + k] != 0) else {
                    return 0;
                };
                for j in 0..d {
                    a.swap(k * d + j, p * d + j);
                }
                sign = -sign;
            }
            for i in k + 1..d {
                for j in k + 1..d {
                    a[i * d + j] = (a[i * d + j] * a[k * d + k] - a[i * d + k] * a[k * d + j]) / prev;
                }
            }
            prev = a[k * d + k];
        }
        sign * a[(d - 1) * d + d - 1]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.get(i, j) as f64)
    }

    pub fn to_matrix4(&self) -> Result<Matrix4<f64>> {
        if self.d != 4 {
            return Err(LabError::InvalidInput(format!("expected dimension 4, got {}", self.d)));
        }
        Ok(Matrix4::from_fn(|i, j| self.get(i, j) as f64))
    }

    /// Exact integer inverse (adjugate times det, since det = +-1).
    pub fn inverse(&self) -> IntegerMatrix {
        let d = self.d;
        let det = self.determinant();
        let mut inv = vec![0i64; d * d];
        for i in 0..d {
            for j in 0..d {
                let minor = self.minor(j, i);
                let s = if (i + j) % 2 == 0 { 1 } else { -1 };
                inv[i * d + j] = (s * minor.determinant() * det) as i64;
            }
        }
        IntegerMatrix { d, entries: inv }
    }

    fn minor(&self, r: usize, c: usize) -> IntegerMatrix {
        let d = self.d;
        if d == 1 {
            return IntegerMatrix { d: 1, entries: vec![1] };
        }
        let mut e = Vec::with_capacity((d - 1) * (d - 1));
        for i in (0..d).filter(|&i| i != r) {
            for j in (0..d).filter(|&j| j != c) {
                e.push(self.get(i, j));
            }
        }
        IntegerMatrix { d: d - 1, entries: e }
    }

    /// True when rows 0..d-1 are the shifted unit vectors, so eigenvectors are Vandermonde.
    pub fn is_shift_companion(&self) -> bool {
        let d = self.d;
        (0..d - 1).all(|i| (0..d).all(|j| self.get(i, j) == i64::from(j == i + 1)))
    }
}

pub fn build_theorem_c_matrix() -> IntegerMatrix {
    IntegerMatrix {
        d: 4,
        entries: vec![0, 0, 0, -1, 1, 0, 0, 14, 0, 1, 0, -19, 0, 0, 1, 8],
    }
}

pub fn build_an(n: u64) -> Result<IntegerMatrix> {
    if n == 0 {
        return Err(LabError::InvalidInput("n must be at least 1".into()));
    }
    let n = i64::try_from(n).map_err(|_| LabError::InvalidInput("n overflows".into()))?;
    let c = n
        .checked_mul(4)
        .and_then(|x| x.checked_add(3))
        .ok_or_else(|| LabError::InvalidInput(format!("entries overflow for n = {n}")))?;
    Ok(IntegerMatrix {
        d: 4,
        entries: vec![0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, -1, 3 * n + 2, -c, n + 4],
    })
}

/// Monic characteristic polynomial, highest degree first, by Faddeev-LeVerrier.
pub fn char_poly(a: &IntegerMatrix) -> Vec<i128> {
    let d = a.d;
    let am: Vec<i128> = a.entries.iter().map(|&x| x as i128).collect();
    let mul = |x: &[i128], y: &[i128]| {
        let mut r = vec![0i128; d * d];
        for i in 0..d {
            for k in 0..d {
                let xik = x[i * d + k];
                if xik == 0 {
                    continue;
                }
                for j in 0..d {
                    r[i * d + j] += xik * y[k * d + j];
                }
            }
        }
        r
    };
    let mut coeffs = vec![1i128];
    let mut m = vec![0i128; d * d];
    let mut c_prev = 1i128;
    for k in 1..=d {
        // M_k = A M_{k-1} + c_{k-1} I
        let mut mk = mul(&am, &m);
        for i in 0..d {
            mk[i * d + i] += c_prev;
        }
        let amk = mul(&am, &mk);
        let tr: i128 = (0..d).map(|i| amk[i * d + i]).sum();
        let c = -tr / k as i128;
        coeffs.push(c);
        c_prev = c;
        m = mk;
    }
    coeffs
}

/// Exact evaluation of an integer polynomial at an integer.
pub fn eval_int(coeffs: &[i128], t: i128) -> i128 {
    coeffs.iter().fold(0i128, |acc, &c| acc * t + c)
}

pub fn eval_f64(coeffs: &[i128], t: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * t + c as f64)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    let deg = coeffs.len() - 1;
    coeffs[..deg]
        .iter()
        .enumerate()
        .map(|(i, c)| c * (deg - i) as f64)
        .collect()
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * t + c)
}

fn bisect_newton(coeffs: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let dc = derivative(coeffs);
    let mut flo = horner(coeffs, lo);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let fx = horner(coeffs, x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == (flo < 0.0) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
        let dfx = horner(&dc, x);
        let xn = x - fx / dfx;
        x = if dfx != 0.0 && xn > lo && xn < hi {
            xn
        } else {
            0.5 * (lo + hi)
        };
    }
    0.5 * (lo + hi)
}

/// All real roots in increasing order, isolated between critical points found recursively.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return vec![];
    }
    if deg == 1 {
        return vec![-coeffs[1] / coeffs[0]];
    }
    let lead = coeffs[0];
    let bound = 1.0 + coeffs[1..].iter().map(|c| (c / lead).abs()).fold(0.0, f64::max);
    let mut pts = vec![-bound];
    pts.extend(real_roots(&derivative(coeffs)).into_iter().filter(|x| x.abs() < bound));
    pts.push(bound);
    let mut roots = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (horner(coeffs, a), horner(coeffs, b));
        if fa == 0.0 {
            if roots.last().is_none_or(|&r: &f64| r != a) {
                roots.push(a);
            }
            continue;
        }
        if (fa < 0.0) != (fb < 0.0) && fb != 0.0 {
            roots.push(bisect_newton(coeffs, a, b));
        }
    }
    if horner(coeffs, bound) == 0.0 {
        roots.push(bound);
    }
    roots
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplittingKind {
    E,
    F,
}

/// Index sets (into the modulus-sorted spectrum) of the stable, center and unstable bundles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splitting {
    pub kind: SplittingKind,
    pub stable: Vec<usize>,
    pub center: Vec<usize>,
    pub unstable: Vec<usize>,
}

impl Splitting {
    pub fn e_splitting() -> Self {
        Self {
            kind: SplittingKind::E,
            stable: vec![0],
            center: vec![1, 2],
            unstable: vec![3],
        }
    }

    pub fn f_splitting() -> Self {
        Self {
            kind: SplittingKind::F,
            stable: vec![0],
            center: vec![1],
            unstable: vec![2, 3],
        }
    }

    pub fn of(kind: SplittingKind) -> Self {
        match kind {
            SplittingKind::E => Self::e_splitting(),
            SplittingKind::F => Self::f_splitting(),
        }
    }

    pub fn center_dim(&self) -> usize {
        self.center.len()
    }

    /// min(|weakest center| / |strongest stable|, |weakest unstable| / |strongest center|)
    pub fn theta(&self, moduli: &[f64]) -> f64 {
        let s = self.stable.iter().map(|&i| moduli[i]).fold(0.0, f64::max);
        let c_min = self.center.iter().map(|&i| moduli[i]).fold(f64::INFINITY, f64::min);
        let c_max = self.center.iter().map(|&i| moduli[i]).fold(0.0, f64::max);
        let u = self.unstable.iter().map(|&i| moduli[i]).fold(f64::INFINITY, f64::min);
        (c_min / s).min(u / c_max)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumFrame {
    pub eigenvalues: Vec<f64>,
    /// unit eigenvectors, same order as `eigenvalues`
    pub eigenvectors: Vec<Vec<f64>>,
    pub alpha_n: f64,
    pub splitting_e: Splitting,
    pub splitting_f: Splitting,
    pub theta: f64,
    pub theta_f: f64,
    pub det_residual: f64,
}

impl SpectrumFrame {
    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|x| x.abs()).collect()
    }

    pub fn splitting(&self, kind: SplittingKind) -> &Splitting {
        match kind {
            SplittingKind::E => &self.splitting_e,
            SplittingKind::F => &self.splitting_f,
        }
    }

    pub fn theta_of(&self, kind: SplittingKind) -> f64 {
        match kind {
            SplittingKind::E => self.theta,
            SplittingKind::F => self.theta_f,
        }
    }

    /// Matrix whose columns are the unit eigenvectors; orthonormal in the adapted metric.
    pub fn basis(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.eigenvectors[j][i])
    }

    pub fn basis_inv(&self) -> Matrix4<f64> {
        self.basis().try_inverse().expect("eigenbasis is invertible")
    }

    /// Linear center sum log|b_c1| + log|b_c2| of the E-splitting.
    pub fn center_log_sum(&self) -> f64 {
        self.splitting_e
            .center
            .iter()
            .map(|&i| self.eigenvalues[i].abs().ln())
            .sum()
    }

    pub fn log_moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|x| x.abs().ln()).collect()
    }
}

fn unit_positive(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let big = v
        .iter()
        .copied()
        .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let s = if big < 0.0 { -1.0 / n } else { 1.0 / n };
    v.iter_mut().for_each(|x| *x *= s);
    v
}

fn null_vector(a: &IntegerMatrix, lambda: f64) -> Vec<f64> {
    let d = a.dim();
    let mut m = a.to_dmatrix();
    for i in 0..d {
        m[(i, i)] -= lambda;
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &s)| if s < bv { (i, s) } else { (bi, bv) });
    (0..d).map(|j| vt[(k, j)]).collect()
}

pub fn solve_spectrum(a: &IntegerMatrix) -> Result<SpectrumFrame> {
    let d = a.dim();
    let cp: Vec<f64> = char_poly(a).iter().map(|&c| c as f64).collect();
    let mut roots = real_roots(&cp);
    if roots.len() != d {
        return Err(LabError::UnsupportedSpectrum(format!(
            "{} real roots found for degree {d}",
            roots.len()
        )));
    }
    roots.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    for w in roots.windows(2) {
        if (w[1].abs() - w[0].abs()) <= 1e-9 * w[1].abs() {
            return Err(LabError::UnsupportedSpectrum("repeated root moduli".into()));
        }
    }
    if roots.iter().any(|r| (r.abs() - 1.0).abs() < 1e-12) {
        return Err(LabError::UnsupportedSpectrum("eigenvalue on the unit circle".into()));
    }
    let vandermonde = a.is_shift_companion();
    let eigenvectors: Vec<Vec<f64>> = roots
        .iter()
        .map(|&b| {
            if vandermonde {
                unit_positive((0..d).map(|k| b.powi(k as i32)).collect())
            } else {
                unit_positive(null_vector(a, b))
            }
        })
        .collect();
    let det = a.determinant() as f64;
    let det_residual = (roots.iter().product::<f64>() - det).abs();
    let moduli: Vec<f64> = roots.iter().map(|r| r.abs()).collect();
    let (splitting_e, splitting_f, theta, theta_f) = if d == 4 {
        let e = Splitting::e_splitting();
        let f = Splitting::f_splitting();
        let te = e.theta(&moduli);
        let tf = f.theta(&moduli);
        (e, f, te, tf)
    } else {
        return Err(LabError::UnsupportedSpectrum(format!(
            "splittings are defined for d = 4 only (d = {d})"
        )));
    };
    Ok(SpectrumFrame {
        alpha_n: moduli[1] - 1.0,
        eigenvalues: roots,
        eigenvectors,
        splitting_e,
        splitting_f,
        theta,
        theta_f,
        det_residual,
    })
}

/// Real roots of a general-dimension matrix sorted by modulus (no splitting data).
pub fn spectrum_values(a: &IntegerMatrix) -> Result<Vec<f64>> {
    let cp: Vec<f64> = char_poly(a).iter().map(|&c| c as f64).collect();
    let mut roots = real_roots(&cp);
    if roots.len() != a.dim() {
        return Err(LabError::UnsupportedSpectrum("complex roots".into()));
    }
    roots.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    Ok(roots)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticsRow {
    pub n: u64,
    pub bu_over_n: f64,
    pub bc1_minus_1: f64,
    pub three_minus_bc2: f64,
    pub three_n_bs: f64,
}

pub fn asymptotics_report(n_list: &[u64]) -> Result<Vec<AsymptoticsRow>> {
    n_list
        .iter()
        .map(|&n| {
            let f = solve_spectrum(&build_an(n)?)?;
            let b = &f.eigenvalues;
            Ok(AsymptoticsRow {
                n,
                bu_over_n: b[3] / n as f64,
                bc1_minus_1: b[1] - 1.0,
                three_minus_bc2: 3.0 - b[2],
                three_n_bs: 3.0 * n as f64 * b[0],
            })
        })
        .collect()
}

/// Distances of the normalized eigenvectors (s, c1, c2, u) from their limit directions.
pub fn eigenvector_limits(n: u64) -> Result<[f64; 4]> {
    let f = solve_spectrum(&build_an(n)?)?;
    let limits = [
        vec![1.0, 0.0, 0.0, 0.0],
        vec![1.0, 1.0, 1.0, 1.0],
        vec![1.0, 3.0, 9.0, 27.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ];
    let mut out = [0.0; 4];
    for i in 0..4 {
        let l = unit_positive(limits[i].clone());
        out[i] = f.eigenvectors[i]
            .iter()
            .zip(l.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    }
    Ok(out)
}

/// First n at which the spectrum of A_n is real, simple and ordered
/// 0 < b_s < 1 < b_c1 < b_c2 < b_u.
pub fn prop51_threshold(n_max: u64) -> Option<u64> {
    (1..=n_max).find(|&n| {
        build_an(n)
            .ok()
            .and_then(|a| spectrum_values(&a).ok())
            .is_some_and(|b| b[0] > 0.0 && b[0] < 1.0 && b.iter().all(|&x| x > 0.0) && b[1] > 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn a4_shares_the_theorem_c_polynomial() {
        assert_eq!(char_poly(&build_an(4).unwrap()), char_poly(&build_theorem_c_matrix()));
    }

    #[test]
    fn theorem_c_matrix_poly_and_det() {
        let a = build_theorem_c_matrix();
        assert_eq!(char_poly(&a), vec![1, -8, 19, -14, 1]);
        assert_eq!(a.determinant(), 1);
    }

    // cofactor expansion oracle for the determinant
    fn cofactor_det(m: &[Vec<i64>]) -> i128 {
        let d = m.len();
        if d == 1 {
            return m[0][0] as i128;
        }
        (0..d)
            .map(|j| {
                let sub: Vec<Vec<i64>> = m[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, &x)| x).collect())
                    .collect();
                let s = if j % 2 == 0 { 1 } else { -1 };
                s * m[0][j] as i128 * cofactor_det(&sub)
            })
            .sum()
    }

    #[test]
    fn determinants_match_cofactor_oracle() {
        for n in [1u64, 7, 100, 12345] {
            let a = build_an(n).unwrap();
            assert_eq!(a.determinant(), cofactor_det(&a.rows()));
        }
        let c = build_theorem_c_matrix();
        assert_eq!(c.determinant(), cofactor_det(&c.rows()));
    }

    #[test]
    fn an_last_row_and_poly() {
        let a = build_an(1).unwrap();
        assert_eq!(a.rows()[3], vec![-1, 5, -7, 5]);
        assert_eq!(char_poly(&build_an(10).unwrap()), vec![1, -14, 43, -32, 1]);
        assert!(build_an(0).is_err());
        assert!(build_an(u64::MAX / 2).is_err());
    }

    #[test]
    fn identity_poly_is_binomial() {
        assert_eq!(char_poly(&IntegerMatrix::identity(4)), vec![1, -4, 6, -4, 1]);
        assert_eq!(char_poly(&IntegerMatrix::identity(3)), vec![1, -3, 3, -1]);
    }

    #[test]
    fn inverse_is_exact() {
        let a = build_an(100).unwrap();
        let ai = a.inverse();
        for i in 0..4 {
            for j in 0..4 {
                let s: i64 = (0..4).map(|k| a.get(i, k) * ai.get(k, j)).sum();
                assert_eq!(s, i64::from(i == j));
            }
        }
    }

    #[test]
    fn spectrum_of_an100() {
        let f = solve_spectrum(&build_an(100).unwrap()).unwrap();
        let b = &f.eigenvalues;
        assert!(b[3] > 100.0 && b[3] < 101.0);
        assert!(f.det_residual < 1e-10);
        // values from an independent numpy eigensolver run
        let oracle = [3.32600759e-3, 1.00508929, 2.99137748, 100.000207];
        for i in 0..4 {
            assert!((b[i] - oracle[i]).abs() < 1e-6 * oracle[i].max(1.0), "{i}: {}", b[i]);
        }
        assert!((f.center_log_sum() - 1.10081036).abs() < 1e-7);
    }

    #[test]
    fn eigenpairs_satisfy_definition() {
        for a in [build_an(100).unwrap(), build_an(5000).unwrap(), build_theorem_c_matrix()] {
            let f = solve_spectrum(&a).unwrap();
            let m = a.to_dmatrix();
            for (b, v) in f.eigenvalues.iter().zip(&f.eigenvectors) {
                for i in 0..4 {
                    let av: f64 = (0..4).map(|j| m[(i, j)] * v[j]).sum();
                    assert!((av - b * v[i]).abs() < 1e-10 * b.abs().max(1.0), "{av} vs {}", b * v[i]);
                }
            }
        }
    }

    #[test]
    fn vandermonde_matches_svd_path() {
        let a = build_an(37).unwrap();
        let f = solve_spectrum(&a).unwrap();
        for (b, v) in f.eigenvalues.iter().zip(&f.eigenvectors) {
            let w = unit_positive(null_vector(&a, *b));
            for i in 0..4 {
                assert!((v[i] - w[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn splitting_dimensions() {
        let f = solve_spectrum(&build_an(100).unwrap()).unwrap();
        assert_eq!(f.splitting_e.center_dim(), 2);
        assert_eq!(f.splitting_e.stable.len(), 1);
        assert_eq!(f.splitting_e.unstable.len(), 1);
        assert_eq!(f.splitting_f.center_dim(), 1);
        assert_eq!(f.splitting_f.unstable.len(), 2);
        let m = f.moduli();
        assert!((f.theta - (m[1] / m[0]).min(m[3] / m[2])).abs() < 1e-12);
        assert!((f.theta_f - (m[1] / m[0]).min(m[2] / m[1])).abs() < 1e-12);
    }

    #[test]
    fn theta_f_tends_to_three() {
        let mut prev = 0.0;
        for n in [10u64, 100, 1000, 10000] {
            let f = solve_spectrum(&build_an(n).unwrap()).unwrap();
            assert!(f.theta_f > prev && f.theta_f < 3.0);
            prev = f.theta_f;
        }
        assert!((3.0 - prev).abs() < 1e-3);
    }

    #[test]
    fn eigenvector_limit_trends() {
        let r10 = eigenvector_limits(10).unwrap();
        let r100 = eigenvector_limits(100).unwrap();
        let r1000 = eigenvector_limits(1000).unwrap();
        for i in 0..4 {
            assert!(r1000[i] < r100[i] && r100[i] < r10[i]);
        }
        assert!(r1000[2] < 0.05 && r1000[3] < 0.05);
    }

    #[test]
    fn threshold_is_found() {
        // pinned from the root-finder run; n = 1..3 have complex pairs
        assert_eq!(prop51_threshold(50), Some(4));
        assert!(solve_spectrum(&build_an(3).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn closed_form_poly(n in 1u64..1_000_000) {
            let p = char_poly(&build_an(n).unwrap());
            let n = n as i128;
            prop_assert_eq!(p, vec![1, -(n + 4), 4 * n + 3, -(3 * n + 2), 1]);
        }

        #[test]
        fn integer_evaluations(n in 1u64..1_000_000) {
            let p = char_poly(&build_an(n).unwrap());
            let n = n as i128;
            prop_assert_eq!(eval_int(&p, 1), -1);
            prop_assert_eq!(eval_int(&p, 3), -5);
            prop_assert_eq!(eval_int(&p, n), 1 - 2 * n);
        }

        #[test]
        fn eigenvalue_product_is_det(n in 1u64..100_000) {
            let f = solve_spectrum(&build_an(n).unwrap()).unwrap();
            prop_assert!(f.det_residual < 1e-10);
        }
    }
}
