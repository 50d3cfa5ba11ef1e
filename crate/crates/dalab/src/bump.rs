//! Radial bump profiles and the volume-preserving perturbation factors built on them.

use crate::error::{LabError, Result};
use crate::matfun::{Mat4, Vec4};
use crate::sampling::{cube_to_sphere, halton};
use crate::torus::{frac, min_image};
use serde::{Deserialize, Serialize};

/// ρ(t) = 1 on [0, r/2], 0 on [r, ∞), polynomial smoothstep in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    pub radius: f64,
    /// 2 = quintic (C²), 3 = septic (C³)
    pub order: u32,
}

impl BumpProfile {
    pub fn new(radius: f64, order: u32) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LabError::InvalidInput(format!("bump radius {radius}")));
        }
        if !(2..=3).contains(&order) {
            return Err(LabError::InvalidInput(format!("smoothness order {order} (supported: 2, 3)")));
        }
        Ok(Self { radius, order })
    }

    // smoothstep S(τ), S'(τ), S''(τ) on [0,1] and its antiderivative I(τ)
    fn step(&self, tau: f64) -> (f64, f64, f64, f64) {
        let t = tau;
        match self.order {
            2 => (
                t * t * t * (10.0 - 15.0 * t + 6.0 * t * t),
                30.0 * t * t * (1.0 - t) * (1.0 - t),
                60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
                t.powi(4) * (2.5 - 3.0 * t + t * t),
            ),
            _ => (
                t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3)),
                140.0 * (t * (1.0 - t)).powi(3),
                420.0 * (t * (1.0 - t)).powi(2) * (1.0 - 2.0 * t),
                t.powi(5) * (7.0 - 14.0 * t + 10.0 * t * t - 2.5 * t.powi(3)),
            ),
        }
    }

    /// (ρ, ρ', ρ'') at distance t ≥ 0.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let u = t / self.radius;
        if u <= 0.5 {
            (1.0, 0.0, 0.0)
        } else if u >= 1.0 {
            (0.0, 0.0, 0.0)
        } else {
            let (s, ds, dds, _) = self.step(2.0 * (1.0 - u));
            let r = self.radius;
            (s, -2.0 * ds / r, 4.0 * dds / (r * r))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    pub fn sup_derivative(&self) -> f64 {
        let m = if self.order == 2 { 1.875 } else { 2.1875 };
        2.0 * m / self.radius
    }

    /// ∫₀ᵗ ρ.
    pub fn integral(&self, t: f64) -> f64 {
        let r = self.radius;
        let u = t / r;
        if u <= 0.5 {
            t
        } else {
            let v = u.min(1.0);
            let (_, _, _, i_end) = self.step(2.0 * (1.0 - v));
            0.5 * r + 0.5 * r * (0.5 - i_end)
        }
    }

    pub fn rescaled(&self, eps: f64) -> Self {
        Self {
            radius: self.radius * eps,
            order: self.order,
        }
    }
}

fn dot(k: &[i64; 4], x: &[f64; 4]) -> f64 {
    (0..4).map(|i| k[i] as f64 * x[i]).sum()
}

fn wrapped(x: &Vec4) -> [f64; 4] {
    [frac(x[0]), frac(x[1]), frac(x[2]), frac(x[3])]
}

/// H(x) = x + w Ψ(k·(x − site)) with integer k ⟂ w; Ψ′ = (ρ − ρ̄)/(1 − ρ̄) is the mean-free bump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveTwist {
    pub k: [i64; 4],
    pub w: [f64; 4],
    pub site: [f64; 4],
    pub profile: BumpProfile,
}

impl WaveTwist {
    pub fn new(k: [i64; 4], w: [f64; 4], site: [f64; 4], profile: BumpProfile) -> Result<Self> {
        if profile.radius > 0.5 {
            return Err(LabError::InvalidInput("wave profile radius must be at most 1/2".into()));
        }
        if k.iter().all(|&c| c == 0) {
            return Err(LabError::InvalidInput("wave vector is zero".into()));
        }
        let kw = dot(&k, &w);
        let scale = w.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if kw.abs() > 1e-12 * scale.max(1.0) {
            return Err(LabError::InvalidInput(format!("shear direction not orthogonal to wave vector (k.w = {kw})")));
        }
        Ok(Self { k, w, site, profile })
    }

    fn mean(&self) -> f64 {
        2.0 * self.profile.integral(0.5)
    }

    /// (Ψ, Ψ′) at wave phase t.
    pub fn psi(&self, t: f64) -> (f64, f64) {
        let t = min_image(t);
        let m = self.mean();
        let a = t.abs();
        let v = (self.profile.integral(a) - m * a) / (1.0 - m);
        let d = (self.profile.value(a) - m) / (1.0 - m);
        (v.copysign(t), d)
    }

    pub fn psi_prime_bounds(&self) -> (f64, f64) {
        let m = self.mean();
        (-m / (1.0 - m), 1.0)
    }

    fn phase(&self, x: &Vec4) -> f64 {
        let xw = wrapped(x);
        let s = self.site;
        dot(&self.k, &[xw[0] - s[0], xw[1] - s[1], xw[2] - s[2], xw[3] - s[3]])
    }

    fn wvec(&self) -> Vec4 {
        Vec4::from(self.w)
    }

    fn kvec(&self) -> Vec4 {
        Vec4::new(self.k[0] as f64, self.k[1] as f64, self.k[2] as f64, self.k[3] as f64)
    }
}

/// x_i += ρ(|x̂ − p̂|)·ℓ(x − p) where x̂ drops the active coordinate i and ℓ ignores it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabTwist {
    pub active: usize,
    pub form: [f64; 4],
    pub center: [f64; 4],
    pub profile: BumpProfile,
}

impl SlabTwist {
    pub fn new(active: usize, mut form: [f64; 4], center: [f64; 4], profile: BumpProfile) -> Result<Self> {
        if active >= 4 {
            return Err(LabError::InvalidInput(format!("active coordinate {active}")));
        }
        if profile.radius > 0.5 {
            return Err(LabError::InvalidInput("slab radius must be at most 1/2".into()));
        }
        if form[active] != 0.0 {
            return Err(LabError::InvalidInput("driver form depends on its active coordinate".into()));
        }
        form[active] = 0.0;
        Ok(Self {
            active,
            form,
            center,
            profile,
        })
    }

    // (driver value, driver gradient)
    fn driver(&self, x: &Vec4) -> (f64, Vec4) {
        let mut z = Vec4::zeros();
        for i in 0..4 {
            if i != self.active {
                z[i] = min_image(x[i] - self.center[i]);
            }
        }
        let r = z.norm();
        let (rho, drho, _) = self.profile.eval(r);
        if rho == 0.0 {
            return (0.0, Vec4::zeros());
        }
        let f = Vec4::from(self.form);
        let lin = f.dot(&z);
        let mut g = f * rho;
        if drho != 0.0 {
            g += z * (lin * drho / r);
        }
        (rho * lin, g)
    }
}

/// Time-one map of a divergence-free field that equals B·y near the center (y in the adapted frame).
#[derive(Clone, Debug)]
pub struct LocalizedFlow {
    pub center: [f64; 4],
    /// generator in torus coordinates
    pub generator: Mat4,
    pub frame: Mat4,
    frame_inv: Mat4,
    adapted_generator: Mat4,
    pub profile: BumpProfile,
    pub steps: usize,
    pub defect_bound: f64,
    // (i, j, S): planar hamiltonian ½ yᵀSy rotating in the (i, j) plane
    terms: Vec<(usize, usize, Mat4)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub center: [f64; 4],
    pub generator: [[f64; 4]; 4],
    pub frame: [[f64; 4]; 4],
    pub profile: BumpProfile,
    pub steps: usize,
    pub defect_bound: f64,
}

pub fn mat_to_rows(m: &Mat4) -> [[f64; 4]; 4] {
    let mut r = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            r[i][j] = m[(i, j)];
        }
    }
    r
}

pub fn rows_to_mat(r: &[[f64; 4]; 4]) -> Mat4 {
    Mat4::from_fn(|i, j| r[i][j])
}

impl LocalizedFlow {
    /// `frame` columns span the coordinates in which the support is a round ball of the profile radius.
    pub fn new(center: [f64; 4], generator: Mat4, frame: Mat4, profile: BumpProfile, steps: usize) -> Result<Self> {
        let frame_inv = frame
            .try_inverse()
            .ok_or_else(|| LabError::InvalidInput("singular flow frame".into()))?;
        if generator.trace().abs() > 1e-12 * (1.0 + generator.abs().max()) {
            return Err(LabError::InvalidInput(format!("generator trace {} is not zero", generator.trace())));
        }
        if steps == 0 {
            return Err(LabError::InvalidInput("zero integrator steps".into()));
        }
        let reach = crate::matfun::op_norm(&frame) * profile.radius;
        if reach >= 0.5 {
            return Err(LabError::InvalidInput(format!("flow support reaches {reach}, wraps around the torus")));
        }
        let b = frame_inv * generator * frame;
        let mut terms = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if i != j && b[(i, j)] != 0.0 {
                    let mut s = Mat4::zeros();
                    s[(j, j)] = b[(i, j)];
                    terms.push((i, j, s));
                }
            }
        }
        for i in 0..3 {
            if b[(i, i)] != 0.0 {
                let mut s = Mat4::zeros();
                s[(i, 3)] = b[(i, i)];
                s[(3, i)] = b[(i, i)];
                terms.push((i, 3, s));
            }
        }
        let mut f = Self {
            center,
            generator,
            frame,
            frame_inv,
            adapted_generator: b,
            profile,
            steps,
            defect_bound: 0.0,
            terms,
        };
        f.defect_bound = f.calibrate_defect();
        Ok(f)
    }

    pub fn from_spec(s: &FlowSpec) -> Result<Self> {
        let mut f = Self::new(s.center, rows_to_mat(&s.generator), rows_to_mat(&s.frame), s.profile, s.steps)?;
        f.defect_bound = f.defect_bound.max(s.defect_bound);
        Ok(f)
    }

    pub fn spec(&self) -> FlowSpec {
        FlowSpec {
            center: self.center,
            generator: mat_to_rows(&self.generator),
            frame: mat_to_rows(&self.frame),
            profile: self.profile,
            steps: self.steps,
            defect_bound: self.defect_bound,
        }
    }

    pub fn support_radius(&self) -> f64 {
        crate::matfun::op_norm(&self.frame) * self.profile.radius
    }

    fn field(&self, y: &Vec4, want_jac: bool) -> (Vec4, Mat4) {
        let r = y.norm();
        let (chi, d1, d2) = self.profile.eval(r);
        let b = &self.adapted_generator;
        if chi == 0.0 {
            return (Vec4::zeros(), Mat4::zeros());
        }
        let by = b * y;
        if d1 == 0.0 && d2 == 0.0 {
            return (by * chi, if want_jac { b * chi } else { Mat4::zeros() });
        }
        let yh = y / r;
        let grad = yh * d1;
        let mut m = Mat4::zeros();
        for (i, j, s) in &self.terms {
            let q = 0.5 * y.dot(&(s * y));
            m[(*i, *j)] += q;
            m[(*j, *i)] -= q;
        }
        let x = by * chi + m * grad;
        if !want_jac {
            return (x, Mat4::zeros());
        }
        let p = yh * yh.transpose();
        let hess = p * d2 + (Mat4::identity() - p) * (d1 / r);
        let mut jac = b * chi + by * grad.transpose() + m * hess;
        for (i, j, s) in &self.terms {
            let gq = s * y;
            let mut wg = Vec4::zeros();
            wg[*i] = grad[*j];
            wg[*j] = -grad[*i];
            jac += wg * gq.transpose();
        }
        (x, jac)
    }

    fn integrate(&self, y0: Vec4, sign: f64, with_jac: bool) -> (Vec4, Mat4) {
        let h = sign / self.steps as f64;
        let mut y = y0;
        let mut z = Mat4::identity();
        for _ in 0..self.steps {
            let (k1, j1) = self.field(&y, with_jac);
            let y2 = y + k1 * (0.5 * h);
            let (k2, j2) = self.field(&y2, with_jac);
            let y3 = y + k2 * (0.5 * h);
            let (k3, j3) = self.field(&y3, with_jac);
            let y4 = y + k3 * h;
            let (k4, j4) = self.field(&y4, with_jac);
            if with_jac {
                let z1 = j1 * z;
                let z2 = j2 * (z + z1 * (0.5 * h));
                let z3 = j3 * (z + z2 * (0.5 * h));
                let z4 = j4 * (z + z3 * h);
                z += (z1 + z2 * 2.0 + z3 * 2.0 + z4) * (h / 6.0);
            }
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        (y, z)
    }

    fn local(&self, x: &Vec4) -> Vec4 {
        let z = Vec4::from_fn(|i, _| min_image(x[i] - self.center[i]));
        self.frame_inv * z
    }

    fn in_support(&self, y: &Vec4) -> bool {
        y.norm() < self.profile.radius
    }

    pub fn apply(&self, x: &Vec4) -> Vec4 {
        let y = self.local(x);
        if !self.in_support(&y) {
            return *x;
        }
        let (y1, _) = self.integrate(y, 1.0, false);
        x + self.frame * (y1 - y)
    }

    pub fn apply_with_differential(&self, x: &Vec4) -> (Vec4, Mat4) {
        let y = self.local(x);
        if !self.in_support(&y) {
            return (*x, Mat4::identity());
        }
        let (y1, z) = self.integrate(y, 1.0, true);
        (x + self.frame * (y1 - y), self.frame * z * self.frame_inv)
    }

    pub fn invert(&self, x: &Vec4) -> Vec4 {
        let y = self.local(x);
        if !self.in_support(&y) {
            return *x;
        }
        // backward flow, then Newton polish against the discrete forward map
        let (mut u, _) = self.integrate(y, -1.0, false);
        for _ in 0..3 {
            let (fy, j) = self.integrate(u, 1.0, true);
            let res = fy - y;
            if res.norm() < 1e-16 {
                break;
            }
            if let Some(ji) = j.try_inverse() {
                u -= ji * res;
            }
        }
        x + self.frame * (u - y)
    }

    fn calibrate_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2048u64 {
            let h = halton(i, 5, 0);
            let dir = cube_to_sphere(&h[..4]);
            let rad = self.profile.radius * h[4].powf(0.25);
            let y = Vec4::new(dir[0], dir[1], dir[2], dir[3]) * rad;
            let (_, z) = self.integrate(y, 1.0, true);
            worst = worst.max((z.determinant() - 1.0).abs());
        }
        4.0 * worst + 1e-14
    }

    pub fn rescaled(&self, eps: f64) -> Result<Self> {
        let mut f = Self::new(self.center, self.generator, self.frame, self.profile.rescaled(eps), self.steps)?;
        f.defect_bound = f.defect_bound.max(self.defect_bound);
        Ok(f)
    }

    pub fn adapted_generator(&self) -> &Mat4 {
        &self.adapted_generator
    }
}

/// One volume-preserving factor of a composite model.
#[derive(Clone, Debug)]
pub enum Factor {
    Wave(WaveTwist),
    Slab(SlabTwist),
    Flow(LocalizedFlow),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorSpec {
    Wave(WaveTwist),
    Slab(SlabTwist),
    Flow(FlowSpec),
}

impl Factor {
    pub fn from_spec(s: &FactorSpec) -> Result<Self> {
        Ok(match s {
            FactorSpec::Wave(w) => Factor::Wave(WaveTwist::new(w.k, w.w, w.site, w.profile)?),
            FactorSpec::Slab(t) => Factor::Slab(SlabTwist::new(t.active, t.form, t.center, t.profile)?),
            FactorSpec::Flow(f) => Factor::Flow(LocalizedFlow::from_spec(f)?),
        })
    }

    pub fn spec(&self) -> FactorSpec {
        match self {
            Factor::Wave(w) => FactorSpec::Wave(w.clone()),
            Factor::Slab(t) => FactorSpec::Slab(t.clone()),
            Factor::Flow(f) => FactorSpec::Flow(f.spec()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Factor::Wave(_) => "wave",
            Factor::Slab(_) => "slab",
            Factor::Flow(_) => "flow",
        }
    }

    pub fn apply(&self, x: &Vec4) -> Vec4 {
        match self {
            Factor::Wave(w) => x + w.wvec() * w.psi(w.phase(x)).0,
            Factor::Slab(t) => {
                let (v, _) = t.driver(x);
                let mut y = *x;
                y[t.active] += v;
                y
            }
            Factor::Flow(f) => f.apply(x),
        }
    }

    pub fn differential(&self, x: &Vec4) -> Mat4 {
        self.apply_with_differential(x).1
    }

    pub fn apply_with_differential(&self, x: &Vec4) -> (Vec4, Mat4) {
        match self {
            Factor::Wave(w) => {
                let (p, dp) = w.psi(w.phase(x));
                let wv = w.wvec();
                (x + wv * p, Mat4::identity() + wv * w.kvec().transpose() * dp)
            }
            Factor::Slab(t) => {
                let (v, g) = t.driver(x);
                let mut y = *x;
                y[t.active] += v;
                let mut d = Mat4::identity();
                for j in 0..4 {
                    d[(t.active, j)] += g[j];
                }
                (y, d)
            }
            Factor::Flow(f) => f.apply_with_differential(x),
        }
    }

    pub fn invert(&self, y: &Vec4) -> Vec4 {
        match self {
            // k·w = 0 makes the phase invariant, so the inverse is explicit
            Factor::Wave(w) => y - w.wvec() * w.psi(w.phase(y)).0,
            Factor::Slab(t) => {
                let (v, _) = t.driver(y);
                let mut x = *y;
                x[t.active] -= v;
                x
            }
            Factor::Flow(f) => f.invert(y),
        }
    }

    /// Declared bound on |det D − 1|; zero for the unipotent twists.
    pub fn volume_defect(&self) -> f64 {
        match self {
            Factor::Flow(f) => f.defect_bound,
            _ => 0.0,
        }
    }

    pub fn center(&self) -> Option<[f64; 4]> {
        match self {
            Factor::Wave(_) => None,
            Factor::Slab(t) => Some(t.center),
            Factor::Flow(f) => Some(f.center),
        }
    }

    /// Points concentrated on the support, for sup-norm sampling of small bumps.
    pub fn probe_points(&self, count: usize) -> Vec<Vec4> {
        // cube around the center mapped onto the support: the frame image of a ball for flows
        let (c, shape) = match self {
            Factor::Wave(_) => return vec![],
            Factor::Slab(t) => (t.center, Mat4::identity() * t.profile.radius),
            Factor::Flow(f) => (f.center, f.frame * f.profile.radius),
        };
        let c = Vec4::from(c);
        let mut out = vec![c];
        for i in 0..count as u64 {
            let h = halton(i, 4, 0);
            let v = Vec4::new(h[0], h[1], h[2], h[3]) * 2.0 - Vec4::repeat(1.0);
            out.push(c + shape * v);
        }
        out
    }

    pub fn rescaled(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(LabError::InvalidInput(format!("rescale factor {eps}")));
        }
        Ok(match self {
            Factor::Wave(w) => Factor::Wave(w.clone()),
            Factor::Slab(t) => Factor::Slab(SlabTwist::new(t.active, t.form, t.center, t.profile.rescaled(eps))?),
            Factor::Flow(f) => Factor::Flow(f.rescaled(eps)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn num_deriv(p: &BumpProfile, t: f64) -> f64 {
        let h = 1e-6;
        (p.value(t + h) - p.value(t - h)) / (2.0 * h)
    }

    #[test]
    fn profile_plateau_and_support() {
        for order in [2, 3] {
            let p = BumpProfile::new(0.2, order).unwrap();
            assert_eq!(p.value(0.0), 1.0);
            assert_eq!(p.value(0.1), 1.0);
            assert_eq!(p.value(0.2), 0.0);
            assert_eq!(p.value(0.7), 0.0);
            let mut prev = 1.0;
            let mut sup: f64 = 0.0;
            for i in 0..=2000 {
                let t = 0.1 + 0.1 * i as f64 / 2000.0;
                let v = p.value(t);
                assert!(v <= prev + 1e-15);
                prev = v;
                sup = sup.max(p.eval(t).1.abs());
                if i > 0 && i < 2000 {
                    assert!((p.eval(t).1 - num_deriv(&p, t)).abs() < 1e-5);
                }
            }
            assert!((sup - p.sup_derivative()).abs() < 1e-3 * p.sup_derivative());
        }
        assert!(BumpProfile::new(0.0, 2).is_err());
        assert!(BumpProfile::new(0.1, 1).is_err());
    }

    #[test]
    fn profile_integral_matches_quadrature() {
        for order in [2, 3] {
            let p = BumpProfile::new(0.3, order).unwrap();
            for &t in &[0.05, 0.15, 0.2, 0.25, 0.3, 0.5] {
                let n = 20000;
                let q: f64 = (0..n).map(|i| p.value((i as f64 + 0.5) * t / n as f64)).sum::<f64>() * t / n as f64;
                assert!((p.integral(t) - q).abs() < 1e-8, "t={t}");
            }
            assert!((p.integral(1.0) - 0.75 * 0.3).abs() < 1e-14);
        }
    }

    fn wave() -> WaveTwist {
        WaveTwist::new([1, 0, -2, 1], [0.02, 0.03, 0.01, 0.0], [0.0; 4], BumpProfile::new(1.0 / 3.0, 2).unwrap()).unwrap()
    }

    #[test]
    fn wave_psi_is_periodic_and_fixes_site() {
        let w = wave();
        assert_eq!(w.psi(0.0).0, 0.0);
        assert!((w.psi(0.0).1 - 1.0).abs() < 1e-15);
        assert!((w.psi(0.5 - 1e-12).0 - w.psi(-0.5 + 1e-12).0).abs() < 1e-10);
        let f = Factor::Wave(w);
        assert_eq!(f.apply(&Vec4::zeros()), Vec4::zeros());
    }

    #[test]
    fn wave_rejects_non_orthogonal_shear() {
        let p = BumpProfile::new(0.3, 2).unwrap();
        assert!(WaveTwist::new([1, 0, 0, 0], [0.1, 0.0, 0.0, 0.0], [0.0; 4], p).is_err());
    }

    fn flow() -> LocalizedFlow {
        let mut b = Mat4::zeros();
        b[(0, 0)] = 0.02;
        b[(1, 1)] = -0.015;
        b[(2, 2)] = -0.005;
        b[(0, 3)] = 0.01;
        b[(2, 1)] = -0.02;
        let frame = Mat4::new(1.0, 0.2, 0.0, 0.1, 0.0, 1.0, 0.3, 0.0, 0.1, 0.0, 1.0, 0.2, 0.0, 0.1, 0.0, 1.0);
        LocalizedFlow::new([0.3, 0.4, 0.5, 0.6], b, frame, BumpProfile::new(0.2, 2).unwrap(), 32).unwrap()
    }

    #[test]
    fn flow_differential_at_center_is_exponential() {
        let f = flow();
        let c = Vec4::from(f.center);
        let (y, d) = f.apply_with_differential(&c);
        assert!((y - c).norm() < 1e-15);
        let e = crate::matfun::expm(&f.generator);
        assert!((d - e).abs().max() < 1e-10);
    }

    #[test]
    fn flow_is_identity_outside_support() {
        let f = Factor::Flow(flow());
        for x in [Vec4::new(0.9, 0.9, 0.9, 0.9), Vec4::new(0.3, 0.4, 0.5, 0.95), Vec4::zeros()] {
            assert_eq!(f.apply(&x), x);
            assert_eq!(f.differential(&x), Mat4::identity());
        }
    }

    #[test]
    fn flow_field_is_divergence_free() {
        let f = flow();
        for i in 0..200u64 {
            let h = halton(i, 4, 0);
            let y = Vec4::new(h[0], h[1], h[2], h[3]) * 0.4 - Vec4::repeat(0.2);
            let (_, j) = f.field(&y, true);
            assert!(j.trace().abs() < 1e-14, "div = {}", j.trace());
            // jacobian against central differences
            let e = 1e-6;
            for k in 0..4 {
                let mut yp = y;
                let mut ym = y;
                yp[k] += e;
                ym[k] -= e;
                let col = (f.field(&yp, false).0 - f.field(&ym, false).0) / (2.0 * e);
                for r in 0..4 {
                    assert!((col[r] - j[(r, k)]).abs() < 1e-7);
                }
            }
        }
    }

    fn factors() -> Vec<Factor> {
        let p = BumpProfile::new(0.25, 3).unwrap();
        vec![
            Factor::Wave(wave()),
            Factor::Slab(SlabTwist::new(2, [0.1, -0.2, 0.0, 0.05], [0.3, 0.4, 0.5, 0.6], p).unwrap()),
            Factor::Flow(flow()),
        ]
    }

    proptest! {
        #[test]
        fn factor_inverse_and_differential(c in prop::array::uniform4(0.0f64..1.0)) {
            let x = Vec4::from(c);
            for f in factors() {
                let y = f.apply(&x);
                prop_assert!((f.invert(&y) - x).norm() < 1e-12);
                let d = f.differential(&x);
                let det = d.determinant();
                prop_assert!((det - 1.0).abs() <= f.volume_defect() + 1e-13, "{} det {}", f.kind(), det);
                let e = 1e-6;
                for k in 0..4 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[k] += e;
                    xm[k] -= e;
                    let col = (f.apply(&xp) - f.apply(&xm)) / (2.0 * e);
                    for r in 0..4 {
                        prop_assert!((col[r] - d[(r, k)]).abs() < 1e-6, "{} entry ({r},{k})", f.kind());
                    }
                }
            }
        }

        #[test]
        fn twists_have_unit_determinant(c in prop::array::uniform4(-3.0f64..3.0)) {
            let x = Vec4::from(c);
            for f in factors().into_iter().filter(|f| f.kind() != "flow") {
                prop_assert!((f.differential(&x).determinant() - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn displacement_is_periodic(c in prop::array::uniform4(0.0f64..1.0), k in prop::array::uniform4(-4i32..4)) {
            let x = Vec4::from(c);
            let s = Vec4::new(k[0] as f64, k[1] as f64, k[2] as f64, k[3] as f64);
            for f in factors() {
                let d1 = f.apply(&x) - x;
                let d2 = f.apply(&(x + s)) - (x + s);
                prop_assert!((d1 - d2).norm() < 1e-12);
            }
        }
    }
}
