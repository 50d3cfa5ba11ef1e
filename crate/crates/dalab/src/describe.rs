//! Model description files: a linear family plus an ordered list of perturbation recipes.
//!
//! ```toml
//! label = "an100-boosted"
//! family = "an"
//! n = 100
//!
//! [[factor]]
//! kind = "booster"
//! strength = 1.0
//!
//! [[factor]]
//! kind = "franks"
//! realization = "twist"
//! level = 1
//! ```

use crate::bump::{BumpProfile, Factor};
use crate::error::{LabError, Result};
use crate::linear::{build_an, build_theorem_c_matrix, solve_spectrum, IntegerMatrix};
use crate::matfun::Vec4;
use crate::model::{compose_with, DiffeoModel, ModelOptions};
use crate::perturb::{
    domination_breaking_shear, make_booster_with, make_franks_bump, nested_balls, rescale_bump, target_differential, BoosterDesign,
    BumpOptions, Realization,
};
use crate::torus::TorusPoint;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "an")]
    An,
    #[serde(rename = "thmC")]
    TheoremC,
}

impl std::str::FromStr for Family {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "an" => Ok(Family::An),
            "thmC" => Ok(Family::TheoremC),
            other => Err(LabError::Parse(format!("unknown family {other:?} (expected an or thmC)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoosterOrientation {
    Forward,
    Reversed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorRecipe {
    /// center-Jacobian booster wave twist
    Booster {
        strength: f64,
        #[serde(default = "default_booster_radius")]
        radius: f64,
        #[serde(default)]
        site: [f64; 4],
        #[serde(default = "default_orientation")]
        orientation: BoosterOrientation,
        /// overrides the family's default wave design
        #[serde(default)]
        design: Option<BoosterDesign>,
    },
    /// localized bump at the fixed point bringing the differential there to the target Dₙ,
    /// shrunk to the radius of the given nested-ball level
    Franks {
        #[serde(default = "default_realization")]
        realization: Realization,
        #[serde(default = "default_franks_radius")]
        radius: f64,
        #[serde(default = "default_rho_cap")]
        rho_cap: f64,
        #[serde(default = "default_level")]
        level: usize,
        #[serde(default = "default_ball_eps")]
        ball_eps: f64,
        #[serde(default = "default_flow_steps")]
        steps: usize,
    },
    /// wave twist leaking the unstable direction into the weak center
    Shear { amplitude: f64 },
}

fn default_booster_radius() -> f64 {
    1.0 / 3.0
}
fn default_orientation() -> BoosterOrientation {
    BoosterOrientation::Forward
}
fn default_realization() -> Realization {
    Realization::Twist
}
fn default_franks_radius() -> f64 {
    0.2
}
fn default_rho_cap() -> f64 {
    0.1
}
fn default_level() -> usize {
    1
}
fn default_ball_eps() -> f64 {
    0.1
}
fn default_flow_steps() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescription {
    #[serde(default)]
    pub label: String,
    pub family: Family,
    /// index of the Aₙ family (ignored for thmC)
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default, rename = "factor")]
    pub factors: Vec<FactorRecipe>,
    #[serde(default)]
    pub options: ModelOptions,
}

fn default_n() -> u64 {
    100
}

impl ModelDescription {
    pub fn linear_only(family: Family, n: u64) -> Self {
        Self {
            label: String::new(),
            family,
            n,
            factors: vec![],
            options: ModelOptions::default(),
        }
    }

    /// A₁₀₀ ∘ H ∘ h₁: booster plus the localized flow bump at the first nested level.
    /// The slab-twist bump needs a C¹ size near 0.8 in the adapted metric of A₁₀₀.
    pub fn theorem_b_default() -> Self {
        Self {
            label: "an100-boosted-localized".into(),
            factors: vec![
                FactorRecipe::Booster {
                    strength: 1.0,
                    radius: default_booster_radius(),
                    site: [0.0; 4],
                    orientation: BoosterOrientation::Forward,
                    design: None,
                },
                FactorRecipe::Franks {
                    realization: Realization::Flow,
                    radius: default_franks_radius(),
                    rho_cap: default_rho_cap(),
                    level: 1,
                    ball_eps: default_ball_eps(),
                    steps: default_flow_steps(),
                },
            ],
            ..Self::linear_only(Family::An, 100)
        }
    }

    pub fn theorem_c_default() -> Self {
        Self {
            label: "thmC-boosted".into(),
            factors: vec![FactorRecipe::Booster {
                strength: 1.0,
                radius: default_booster_radius(),
                site: [0.0; 4],
                orientation: BoosterOrientation::Forward,
                design: None,
            }],
            ..Self::linear_only(Family::TheoremC, 0)
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let d: Self = toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == Family::An && !(1..=1_000_000).contains(&self.n) {
            return Err(LabError::InvalidInput(format!("family index n = {} outside 1..=1e6", self.n)));
        }
        let o = &self.options;
        if !(o.delta > 0.0 && o.sigma > 0.0 && o.global_samples > 0 && o.probe_samples > 0) {
            return Err(LabError::InvalidInput("model options must be positive".into()));
        }
        if o.global_samples > 1 << 20 || o.probe_samples > 1 << 20 {
            return Err(LabError::InvalidInput("model option sample counts above 2^20".into()));
        }
        for f in &self.factors {
            let ok = match f {
                FactorRecipe::Booster { strength, radius, site, .. } => {
                    strength.is_finite() && *radius > 0.0 && *radius <= 0.5 && site.iter().all(|v| v.is_finite())
                }
                FactorRecipe::Franks {
                    radius,
                    rho_cap,
                    ball_eps,
                    steps,
                    level,
                    ..
                } => *radius > 0.0 && *radius <= 0.5 && *rho_cap > 0.0 && *ball_eps > 0.0 && *ball_eps < 0.5 && (1..=4096).contains(steps) && *level <= 8,
                FactorRecipe::Shear { amplitude } => amplitude.is_finite() && amplitude.abs() < 100.0,
            };
            if !ok {
                return Err(LabError::InvalidInput(format!("factor out of range: {f:?}")));
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> Result<IntegerMatrix> {
        match self.family {
            Family::An => build_an(self.n),
            Family::TheoremC => Ok(build_theorem_c_matrix()),
        }
    }

    /// Composes the model; factors are built in order, each against the model built so far.
    pub fn build(&self) -> Result<DiffeoModel> {
        self.validate()?;
        let a = self.matrix()?;
        let frame = solve_spectrum(&a)?;
        let mut factors: Vec<Factor> = vec![];
        for recipe in &self.factors {
            match recipe {
                FactorRecipe::Booster {
                    strength,
                    radius,
                    site,
                    orientation,
                    design,
                } => {
                    let mut d = design.unwrap_or(match self.family {
                        Family::An => BoosterDesign::an_default(),
                        Family::TheoremC => BoosterDesign::theorem_c_default(),
                    });
                    if *orientation == BoosterOrientation::Reversed {
                        d = d.reversed();
                    }
                    let (h, _) = make_booster_with(&a, &d, *strength, BumpProfile::new(*radius, 2)?, &TorusPoint::new(*site)?)?;
                    factors.push(h);
                }
                FactorRecipe::Franks {
                    realization,
                    radius,
                    rho_cap,
                    level,
                    ball_eps,
                    steps,
                } => {
                    let sofar = compose_with(&a, factors.clone(), self.options)?;
                    let dg = sofar.differential(&Vec4::zeros());
                    let t = target_differential(&dg, &frame)?;
                    let opts = BumpOptions {
                        center: [0.0; 4],
                        radius: *radius,
                        order: 2,
                        realization: *realization,
                        steps: *steps,
                    };
                    let bump = make_franks_bump(&t.correction(), *rho_cap, &frame.basis(), &opts)?;
                    let balls = nested_balls(&TorusPoint::new([0.0; 4])?, *ball_eps, self.n.max(1), *level)?;
                    let reach = bump
                        .factors
                        .iter()
                        .map(|f| match f {
                            Factor::Flow(fl) => fl.support_radius(),
                            _ => *radius,
                        })
                        .fold(0.0, f64::max);
                    let scaled = if reach > 0.0 { rescale_bump(&bump, balls.radii[*level] / reach)? } else { bump };
                    factors.extend(scaled.factors);
                }
                FactorRecipe::Shear { amplitude } => factors.push(domination_breaking_shear(&a, *amplitude)?),
            }
        }
        compose_with(&a, factors, self.options)
    }
}
