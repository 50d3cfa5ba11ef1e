//! Composite maps g = A ∘ F₁ ∘ … ∘ Fₘ on the torus and their certificates.

use crate::bump::{Factor, FactorSpec};
use crate::error::{LabError, Result};
use crate::linear::{solve_spectrum, IntegerMatrix, SpectrumFrame};
use crate::matfun::{op_norm, Mat4, Vec4};
use crate::sampling::halton4;
use crate::torus::{frac, TorusPoint};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// C¹ radius below which a factor counts as a small local perturbation
    pub delta: f64,
    pub sigma: f64,
    pub global_samples: usize,
    pub probe_samples: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            delta: 0.05,
            sigma: 0.05,
            global_samples: 4096,
            probe_samples: 512,
        }
    }
}

/// Sampled bounds carried with a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    /// sup ‖Dg‖ (euclidean)
    pub lipschitz: f64,
    /// sup ‖Dg⁻¹‖ (euclidean)
    pub lipschitz_inv: f64,
    pub sup_dg_minus_a: f64,
    pub volume_defect: f64,
    /// sup |P(x) − x| of the perturbation P = F₁∘…∘Fₘ
    pub c0_distance: f64,
    /// sup ‖DP − I‖ in the adapted metric
    pub c1_distance: f64,
    pub c1_budget: f64,
    pub within_budget: bool,
    /// per factor sup ‖DF − I‖ in the adapted metric
    pub factor_c1: Vec<f64>,
    /// per factor sup ‖DF − I‖ (euclidean); below 1 the straight-line isotopy to Id stays a diffeomorphism
    pub factor_c1_euclid: Vec<f64>,
    pub homotopic_to_linear: bool,
    pub small_factors: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct DiffeoModel {
    pub linear: IntegerMatrix,
    a: Mat4,
    a_inv: Mat4,
    pub frame: SpectrumFrame,
    basis: Mat4,
    basis_inv: Mat4,
    /// outermost first: g = A ∘ factors[0] ∘ factors[1] ∘ …
    pub factors: Vec<Factor>,
    pub certificates: Certificates,
    pub options: ModelOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub linear: Vec<Vec<i64>>,
    pub factors: Vec<FactorSpec>,
    pub options: ModelOptions,
    pub certificates: Certificates,
    #[serde(default)]
    pub label: String,
}

pub fn compose_da(a: &IntegerMatrix, factors: Vec<Factor>) -> Result<DiffeoModel> {
    compose_with(a, factors, ModelOptions::default())
}

pub fn compose_with(a: &IntegerMatrix, factors: Vec<Factor>, options: ModelOptions) -> Result<DiffeoModel> {
    let frame = solve_spectrum(a)?;
    let am = a.to_matrix4()?;
    let a_inv = a.inverse().to_matrix4()?;
    let basis = frame.basis();
    let basis_inv = frame.basis_inv();
    let mut m = DiffeoModel {
        linear: a.clone(),
        a: am,
        a_inv,
        frame,
        basis,
        basis_inv,
        factors,
        certificates: Certificates {
            lipschitz: 0.0,
            lipschitz_inv: 0.0,
            sup_dg_minus_a: 0.0,
            volume_defect: 0.0,
            c0_distance: 0.0,
            c1_distance: 0.0,
            c1_budget: 0.0,
            within_budget: true,
            factor_c1: vec![],
            factor_c1_euclid: vec![],
            homotopic_to_linear: true,
            small_factors: vec![],
        },
        options,
    };
    m.certificates = m.certify()?;
    Ok(m)
}

impl DiffeoModel {
    pub fn a(&self) -> &Mat4 {
        &self.a
    }

    pub fn a_inv(&self) -> &Mat4 {
        &self.a_inv
    }

    /// Columns are the unit eigenvectors of A; the adapted metric makes them orthonormal.
    pub fn basis(&self) -> &Mat4 {
        &self.basis
    }

    pub fn basis_inv(&self) -> &Mat4 {
        &self.basis_inv
    }

    pub fn is_linear(&self) -> bool {
        self.factors.is_empty()
    }

    /// The perturbation P = F₁∘…∘Fₘ on lift coordinates.
    pub fn perturbation(&self, x: &Vec4) -> Vec4 {
        let mut y = *x;
        for f in self.factors.iter().rev() {
            y = f.apply(&y);
        }
        y
    }

    pub fn perturbation_with_differential(&self, x: &Vec4) -> (Vec4, Mat4) {
        let mut y = *x;
        let mut d = Mat4::identity();
        for f in self.factors.iter().rev() {
            let (yn, df) = f.apply_with_differential(&y);
            d = df * d;
            y = yn;
        }
        (y, d)
    }

    pub fn perturbation_inverse(&self, y: &Vec4) -> Vec4 {
        let mut x = *y;
        for f in self.factors.iter() {
            x = f.invert(&x);
        }
        x
    }

    /// Map on the universal cover.
    pub fn forward_lift(&self, x: &Vec4) -> Vec4 {
        if self.factors.is_empty() {
            return self.a * x;
        }
        self.a * self.perturbation(x)
    }

    pub fn forward_lift_with_differential(&self, x: &Vec4) -> (Vec4, Mat4) {
        if self.factors.is_empty() {
            return (self.a * x, self.a);
        }
        let (y, d) = self.perturbation_with_differential(x);
        (self.a * y, self.a * d)
    }

    pub fn inverse_lift(&self, y: &Vec4) -> Vec4 {
        self.perturbation_inverse(&(self.a_inv * y))
    }

    pub fn differential(&self, x: &Vec4) -> Mat4 {
        self.forward_lift_with_differential(x).1
    }

    /// Differential in the adapted frame: V⁻¹ Dg V.
    pub fn adapted_differential(&self, x: &Vec4) -> Mat4 {
        self.basis_inv * self.differential(x) * self.basis
    }

    /// One step on torus coordinates (reduced mod 1).
    pub fn step(&self, x: &Vec4) -> Vec4 {
        wrap4(&self.forward_lift(x))
    }

    pub fn step_with_differential(&self, x: &Vec4) -> (Vec4, Mat4) {
        let (y, d) = self.forward_lift_with_differential(x);
        (wrap4(&y), d)
    }

    pub fn step_back(&self, y: &Vec4) -> Vec4 {
        wrap4(&self.inverse_lift(y))
    }

    pub fn forward(&self, p: &TorusPoint<4>) -> Result<TorusPoint<4>> {
        TorusPoint::new(self.forward_lift(&Vec4::from(*p.coords())).into())
    }

    pub fn inverse(&self, p: &TorusPoint<4>) -> Result<TorusPoint<4>> {
        TorusPoint::new(self.inverse_lift(&Vec4::from(*p.coords())).into())
    }

    pub fn sample_points(&self) -> Vec<Vec4> {
        let mut pts: Vec<Vec4> = (0..self.options.global_samples as u64).map(|i| Vec4::from(halton4(i))).collect();
        for f in &self.factors {
            pts.extend(f.probe_points(self.options.probe_samples));
        }
        pts
    }

    fn adapted(&self, m: &Mat4) -> Mat4 {
        self.basis_inv * m * self.basis
    }

    fn certify(&self) -> Result<Certificates> {
        let pts = self.sample_points();
        let id = Mat4::identity();
        let mut lip: f64 = 0.0;
        let mut lip_inv: f64 = 0.0;
        let mut sup_da: f64 = 0.0;
        let mut c0: f64 = 0.0;
        let mut c1: f64 = 0.0;
        let mut factor_c1 = vec![0.0f64; self.factors.len()];
        let mut factor_e = vec![0.0f64; self.factors.len()];
        for x in &pts {
            let (y, dp) = self.perturbation_with_differential(x);
            let dg = self.a * dp;
            lip = lip.max(op_norm(&dg));
            let inv = dg
                .try_inverse()
                .ok_or_else(|| LabError::InvalidInput("singular differential".into()))?;
            lip_inv = lip_inv.max(op_norm(&inv));
            sup_da = sup_da.max(op_norm(&(dg - self.a)));
            c0 = c0.max((y - x).norm());
            c1 = c1.max(op_norm(&self.adapted(&(dp - id))));
            for (k, f) in self.factors.iter().enumerate() {
                let d = f.differential(x);
                factor_c1[k] = factor_c1[k].max(op_norm(&self.adapted(&(d - id))));
                factor_e[k] = factor_e[k].max(op_norm(&(d - id)));
            }
        }
        let volume_defect = {
            let mut p = 1.0;
            for f in &self.factors {
                p *= 1.0 + f.volume_defect();
            }
            p - 1.0
        };
        let budget = crate::cones::model_budget(&self.frame)?;
        Ok(Certificates {
            lipschitz: lip,
            lipschitz_inv: lip_inv,
            sup_dg_minus_a: sup_da,
            volume_defect,
            c0_distance: c0,
            c1_distance: c1,
            c1_budget: budget,
            within_budget: c1 < budget,
            homotopic_to_linear: factor_e.iter().all(|&e| e < 1.0),
            small_factors: factor_c1.iter().map(|&e| e < self.options.delta).collect(),
            factor_c1,
            factor_c1_euclid: factor_e,
        })
    }

    pub fn to_file(&self, label: &str) -> ModelFile {
        ModelFile {
            linear: self.linear.rows(),
            factors: self.factors.iter().map(|f| f.spec()).collect(),
            options: self.options,
            certificates: self.certificates.clone(),
            label: label.to_string(),
        }
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        let a = IntegerMatrix::from_rows(&f.linear)?;
        let factors = f.factors.iter().map(Factor::from_spec).collect::<Result<Vec<_>>>()?;
        compose_with(&a, factors, f.options)
    }
}

pub fn wrap4(x: &Vec4) -> Vec4 {
    Vec4::new(frac(x[0]), frac(x[1]), frac(x[2]), frac(x[3]))
}
