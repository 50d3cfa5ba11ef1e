//! Experiment configuration, the end-to-end pipelines and plot-data emission.
//!
//! A pipeline writes every artifact into the configured output directory and returns a summary
//! whose verdicts name the artifact they came from. Output is byte-identical for a fixed config.

use crate::bundles::AxisBlock;
use crate::cones::{choose_constants, verify_invariance, ConeVerdict, SamplePlan, Witness};
use crate::describe::{FactorRecipe, ModelDescription};
use crate::error::{LabError, Result};
use crate::foliation::{integrate_leaf_patch, large_scale_ratio, leaf_geometry, strictly_decreasing, volume_growth_probe, PatchSpec};
use crate::io::{csv_table, encode_field, parse_numeric_csv, to_json};
use crate::linear::{SpectrumFrame, SplittingKind};
use crate::lyapunov::{jacobian_integral_quadrature, qr_spectrum, theorem_a_gap, LyapunovReport, OrbitPlan};
use crate::model::{Certificates, DiffeoModel};
use crate::semiconj::{leaf_correspondence_check, plaque_mass_probe, solve_semiconjugacy, PlaqueBox, PlaqueReport, SolveOptions};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeSection {
    pub samples: usize,
}

impl Default for ConeSection {
    fn default() -> Self {
        Self { samples: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSection {
    pub orbits: usize,
    pub t: usize,
    pub stride: usize,
    pub burn_in: usize,
    /// midpoint grid side for the quadrature cross-check (0 skips it)
    pub quadrature_resolution: usize,
}

impl Default for OrbitSection {
    fn default() -> Self {
        Self {
            orbits: 32,
            t: 10_000,
            stride: 10,
            burn_in: 1000,
            quadrature_resolution: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeafSection {
    pub base: [f64; 4],
    pub max_step: f64,
    pub geom_edge: f64,
    pub geom_res: usize,
    pub thresholds: Vec<f64>,
    pub pairs: usize,
    pub growth_edge: f64,
    pub growth_res: usize,
    pub n_max: usize,
    /// least tangent angle (degrees) to the transverse plane that enables the verdict
    pub angle_min_deg: f64,
}

impl Default for LeafSection {
    fn default() -> Self {
        Self {
            base: [0.1, 0.2, 0.3, 0.4],
            max_step: 0.1,
            geom_edge: 100.0,
            geom_res: 100,
            thresholds: vec![5.0, 10.0, 20.0, 40.0, 80.0],
            pairs: 2000,
            growth_edge: 40.0,
            growth_res: 40,
            n_max: 30,
            angle_min_deg: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemiconjSection {
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub verify_samples: usize,
    /// leaf patch for the correspondence check
    pub patch_edge: f64,
    pub patch_res: usize,
    pub patch_step: f64,
}

impl Default for SemiconjSection {
    fn default() -> Self {
        Self {
            grid: 32,
            tol: 1e-6,
            max_iter: 5000,
            verify_samples: 8192,
            patch_edge: 1.0,
            patch_res: 2,
            patch_step: 0.001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub samples: usize,
    pub bins: usize,
    pub plaque: PlaqueBox,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            samples: 200_000,
            bins: 8,
            plaque: PlaqueBox::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub strengths: Vec<f64>,
    pub orbits: usize,
    pub t: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            strengths: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            orbits: 16,
            t: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: String,
    pub model: ModelDescription,
    #[serde(default)]
    pub cones: ConeSection,
    #[serde(default)]
    pub orbits: OrbitSection,
    #[serde(default)]
    pub leaf: LeafSection,
    #[serde(default)]
    pub semiconj: SemiconjSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Clone, Copy, Debug)]
enum Stream {
    Cones,
    Orbits,
    Leaf,
    Semiconj,
    Probe,
    Sweep,
    Scale,
}

impl ExperimentConfig {
    pub fn theorem_b_default() -> Self {
        Self {
            seed: 20240101,
            out_dir: "runs/thmB".into(),
            model: ModelDescription::theorem_b_default(),
            cones: ConeSection::default(),
            orbits: OrbitSection::default(),
            leaf: LeafSection::default(),
            semiconj: SemiconjSection::default(),
            probe: ProbeSection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn theorem_c_default() -> Self {
        Self {
            out_dir: "runs/thmC".into(),
            model: ModelDescription::theorem_c_default(),
            ..Self::theorem_b_default()
        }
    }

    /// Reduced sizes for smoke runs and determinism checks.
    pub fn quick(mut self) -> Self {
        self.cones.samples = 2000;
        self.orbits = OrbitSection {
            orbits: 4,
            t: 1000,
            stride: 10,
            burn_in: 200,
            quadrature_resolution: 4,
        };
        self.leaf.geom_edge = 8.0;
        self.leaf.geom_res = 8;
        self.leaf.thresholds = vec![1.0, 2.0, 4.0];
        self.leaf.pairs = 200;
        self.leaf.growth_edge = 4.0;
        self.leaf.growth_res = 4;
        self.leaf.n_max = 4;
        self.semiconj.grid = 6;
        self.semiconj.tol = 1e-4;
        self.semiconj.verify_samples = 256;
        self.probe.samples = 20_000;
        self.probe.bins = 4;
        self.sweep = SweepSection {
            strengths: vec![0.0, 1.0],
            orbits: 2,
            t: 500,
        };
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.orbit_plan().validate()?;
        let bad = |what: &str| Err(LabError::InvalidInput(format!("config: {what}")));
        if self.seed > i64::MAX as u64 {
            return bad("seed must fit in a signed 64-bit integer");
        }
        if self.cones.samples == 0 || self.cones.samples > 10_000_000 {
            return bad("cones.samples must lie in 1..=1e7");
        }
        if self.orbits.orbits > 4096 || self.orbits.t > 10_000_000 || self.orbits.quadrature_resolution > 64 {
            return bad("orbit section too large");
        }
        let l = &self.leaf;
        if l.base.iter().any(|v| !v.is_finite()) || self.probe.plaque.center.iter().any(|v| !v.is_finite()) {
            return bad("base points must be finite");
        }
        if !(l.max_step > 0.0 && l.geom_edge > 0.0 && l.growth_edge > 0.0 && l.angle_min_deg >= 0.0) {
            return bad("leaf lengths must be positive");
        }
        if l.geom_res < 2 || l.geom_res % 2 != 0 || l.growth_res < 2 || l.growth_res % 2 != 0 || l.geom_res > 2000 || l.growth_res > 2000 {
            return bad("leaf resolutions must be even and in 2..=2000");
        }
        if l.n_max == 0 || l.n_max > 200 || l.pairs == 0 || l.thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("leaf n_max, pairs or thresholds out of range");
        }
        let s = &self.semiconj;
        if !(2..=64).contains(&s.grid) || !(s.tol > 0.0) || s.max_iter == 0 || s.verify_samples == 0 {
            return bad("semiconj grid must lie in 2..=64 with positive tol and iteration cap");
        }
        if !(s.patch_edge > 0.0 && s.patch_step > 0.0) || s.patch_res < 2 || s.patch_res % 2 != 0 || s.patch_res > 200 {
            return bad("semiconj patch out of range");
        }
        let p = &self.probe;
        if p.samples == 0 || p.samples > 100_000_000 || p.bins == 0 || p.bins > 1024 || p.plaque.plaque_bins == 0 || !(p.plaque.half > 0.0) {
            return bad("probe section out of range");
        }
        if self.sweep.strengths.iter().any(|v| !v.is_finite()) || self.sweep.strengths.len() > 256 {
            return bad("sweep strengths must be finite (at most 256)");
        }
        if !self.sweep.strengths.is_empty() {
            let plan = self.sweep_plan();
            plan.validate()?;
        }
        Ok(())
    }

    fn stream_seed(&self, s: Stream) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(s as u64 + 1);
        rng.next_u64()
    }

    pub fn orbit_plan(&self) -> OrbitPlan {
        OrbitPlan {
            orbits: self.orbits.orbits,
            seed: self.stream_seed(Stream::Orbits),
            t: self.orbits.t,
            stride: self.orbits.stride,
            burn_in: self.orbits.burn_in,
        }
    }

    pub fn sweep_plan(&self) -> OrbitPlan {
        OrbitPlan {
            orbits: self.sweep.orbits,
            t: self.sweep.t,
            seed: self.stream_seed(Stream::Sweep),
            burn_in: self.orbits.burn_in.min(self.sweep.t / 4),
            ..self.orbit_plan()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeSummary {
    pub splitting: SplittingKind,
    pub pass: bool,
    pub witness: Option<Witness>,
    pub artifact: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub gap: f64,
    pub stderr: f64,
    pub qr_gap: f64,
    pub quadrature_gap: Option<f64>,
    pub quadrature_refinement_change: Option<f64>,
    pub exponent_sum: f64,
    pub fires: bool,
    pub verdict: String,
    pub artifact: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "R_c")]
    pub r_c: f64,
    pub alpha_min: f64,
    pub angle_condition: bool,
    pub ratio_table_decreasing: bool,
    pub artifact: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    pub predicted_crossing: Option<f64>,
    pub observed_crossing: Option<usize>,
    pub lower_holds: bool,
    pub upper_holds: bool,
    pub large_scale_m: f64,
    pub artifact: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiconjSummary {
    pub residual: f64,
    pub iterations: usize,
    pub predicted_rate: f64,
    pub observed_rate: Option<f64>,
    pub correspondence_deviation: f64,
    pub id_deviation: f64,
    pub correspondence_pass: bool,
    pub artifact: String,
    pub correspondence_artifact: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub bins: usize,
    pub mean_max_bin_mass: f64,
    pub mean_tv_distance: f64,
    pub populated: usize,
    pub excluded: usize,
    pub artifact: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub pipeline: String,
    pub label: String,
    pub seed: u64,
    pub completed: bool,
    pub failure_stage: Option<String>,
    pub failure: Option<String>,
    pub certificates: Option<Certificates>,
    pub cones: Vec<ConeSummary>,
    pub gap: Option<GapSummary>,
    pub geometry: Option<GeometrySummary>,
    pub growth: Option<GrowthSummary>,
    pub semiconj: Option<SemiconjSummary>,
    /// probe at the configured bins and at twice as many
    pub probe: Vec<ProbeSummary>,
    pub sweep_artifact: Option<String>,
    pub artifacts: Vec<String>,
}

impl ExperimentSummary {
    fn new(pipeline: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            pipeline: pipeline.into(),
            label: cfg.model.label.clone(),
            seed: cfg.seed,
            completed: false,
            failure_stage: None,
            failure: None,
            certificates: None,
            cones: vec![],
            gap: None,
            geometry: None,
            growth: None,
            semiconj: None,
            probe: vec![],
            sweep_artifact: None,
            artifacts: vec![],
        }
    }

    /// Artifacts named by the summary that are missing from `dir`.
    pub fn missing_artifacts(&self, dir: &Path) -> Vec<String> {
        self.artifacts.iter().filter(|a| !dir.join(a).is_file()).cloned().collect()
    }
}

struct Run {
    dir: PathBuf,
    summary: ExperimentSummary,
}

impl Run {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<String> {
        std::fs::write(self.dir.join(name), bytes)?;
        if !self.summary.artifacts.iter().any(|a| a == name) {
            self.summary.artifacts.push(name.to_string());
        }
        Ok(name.to_string())
    }

    fn fail(&mut self, stage: &str, e: impl std::fmt::Display) {
        self.summary.failure_stage = Some(stage.into());
        self.summary.failure = Some(e.to_string());
    }

    fn finish(mut self) -> Result<ExperimentSummary> {
        self.summary.completed = self.summary.failure_stage.is_none();
        let name = "summary.json";
        self.summary.artifacts.push(name.into());
        std::fs::write(self.dir.join(name), to_json(&self.summary)?)?;
        Ok(self.summary)
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v}")
}

pub const SPECTRUM_HEADER: [&str; 9] = ["n", "beta_s", "beta_c1", "beta_c2", "beta_u", "alpha_n", "theta_E", "theta_F", "det_residual"];

pub fn spectrum_row(n: u64, f: &SpectrumFrame) -> Vec<String> {
    let e = &f.eigenvalues;
    vec![
        n.to_string(),
        fmt(e[0]),
        fmt(e[1]),
        fmt(e[2]),
        fmt(e[3]),
        fmt(f.alpha_n),
        fmt(f.theta),
        fmt(f.theta_f),
        fmt(f.det_residual),
    ]
}

pub fn lyapunov_csv(r: &LyapunovReport) -> String {
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|o| {
            let mut v = vec![o.orbit_id.to_string()];
            v.extend(o.lambdas.iter().map(|x| fmt(*x)));
            v.push(fmt(o.center_sum));
            v
        })
        .collect();
    csv_table(&["orbit_id", "lambda1", "lambda2", "lambda3", "lambda4", "center_sum"], &rows)
}

pub fn growth_csv(rows: &[crate::foliation::GrowthRow]) -> String {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.n.to_string(), fmt(r.measured_vol), fmt(r.upper_bound), fmt(r.lower_bound), r.containment_pass.to_string()])
        .collect();
    csv_table(&["n", "measured_vol", "upper_bound", "lower_bound", "containment_pass"], &rows)
}

pub fn plaque_csv(r: &PlaqueReport) -> String {
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|p| vec![p.plaque_id.to_string(), p.n_samples.to_string(), fmt(p.max_bin_mass), fmt(p.tv_distance)])
        .collect();
    csv_table(&["plaque_id", "n_samples", "max_bin_mass", "tv_distance"], &rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub strength: f64,
    pub gap: f64,
    pub stderr: f64,
}

/// Center-sum gap of the description with every booster set to each strength.
pub fn gap_sweep(desc: &ModelDescription, strengths: &[f64], plan: &OrbitPlan) -> Result<Vec<SweepPoint>> {
    if !desc.factors.iter().any(|f| matches!(f, FactorRecipe::Booster { .. })) {
        return Ok(vec![]);
    }
    strengths
        .iter()
        .map(|&s| {
            let mut d = desc.clone();
            for f in d.factors.iter_mut() {
                if let FactorRecipe::Booster { strength, .. } = f {
                    *strength = s;
                }
            }
            let m = d.build()?;
            let r = qr_spectrum(&m, plan, SplittingKind::E)?;
            Ok(SweepPoint {
                strength: s,
                gap: r.gap,
                stderr: r.gap_stderr,
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let rows: Vec<Vec<String>> = points.iter().map(|p| vec![fmt(p.strength), fmt(p.gap), fmt(p.stderr)]).collect();
    csv_table(&["strength", "gap", "stderr"], &rows)
}

fn cone_stage(run: &mut Run, cfg: &ExperimentConfig, model: &DiffeoModel) -> Result<Option<ConeVerdict>> {
    let mut failed = None;
    for kind in [SplittingKind::E, SplittingKind::F] {
        let c = choose_constants(&model.frame, kind)?;
        let v = verify_invariance(
            model,
            &c,
            kind,
            SamplePlan {
                samples: cfg.cones.samples,
                seed: cfg.stream_seed(Stream::Cones),
            },
        );
        let name = format!("cones_{kind:?}.json");
        let artifact = run.write(&name, to_json(&v)?.as_bytes())?;
        run.summary.cones.push(ConeSummary {
            splitting: kind,
            pass: v.pass,
            witness: v.witness.clone(),
            artifact,
        });
        if !v.pass && failed.is_none() {
            failed = Some(v);
        }
    }
    Ok(failed)
}

fn gap_stage(run: &mut Run, cfg: &ExperimentConfig, model: &DiffeoModel, angle: Option<bool>) -> Result<()> {
    let rep = qr_spectrum(model, &cfg.orbit_plan(), SplittingKind::E)?;
    let verdict = theorem_a_gap(&rep, &model.frame, AxisBlock::center_of(&model.frame, SplittingKind::E).dim(), angle);
    let quad = if cfg.orbits.quadrature_resolution > 0 {
        Some(jacobian_integral_quadrature(model, SplittingKind::E, cfg.orbits.quadrature_resolution)?)
    } else {
        None
    };
    run.write("lyapunov.csv", lyapunov_csv(&rep).as_bytes())?;
    #[derive(Serialize)]
    struct Out<'a> {
        report: &'a LyapunovReport,
        verdict: &'a crate::lyapunov::GapVerdict,
        quadrature: &'a Option<crate::lyapunov::QuadratureReport>,
    }
    let artifact = run.write(
        "lyapunov.json",
        to_json(&Out {
            report: &rep,
            verdict: &verdict,
            quadrature: &quad,
        })?
        .as_bytes(),
    )?;
    run.summary.gap = Some(GapSummary {
        gap: rep.gap,
        stderr: rep.gap_stderr,
        qr_gap: rep.qr_center_sum - rep.linear_center_sum,
        quadrature_gap: quad.as_ref().map(|q| q.value_fine - q.linear_value),
        quadrature_refinement_change: quad.as_ref().map(|q| q.refinement_change),
        exponent_sum: rep.exponent_sum,
        fires: verdict.fires,
        verdict: verdict.verdict,
        artifact,
    });
    Ok(())
}

fn run_dir(cfg: &ExperimentConfig, pipeline: &str) -> Result<Run> {
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir)?;
    let mut run = Run {
        dir,
        summary: ExperimentSummary::new(pipeline, cfg),
    };
    run.write("config.toml", cfg.to_toml()?.as_bytes())?;
    Ok(run)
}

fn model_stage(run: &mut Run, cfg: &ExperimentConfig) -> Result<Option<DiffeoModel>> {
    let model = match cfg.model.build() {
        Ok(m) => m,
        Err(e) => {
            run.fail("model", e);
            return Ok(None);
        }
    };
    run.summary.certificates = Some(model.certificates.clone());
    run.write("model.json", to_json(&model.to_file(&cfg.model.label))?.as_bytes())?;
    run.write(
        "spectrum.csv",
        csv_table(&SPECTRUM_HEADER, &[spectrum_row(cfg.model.n, &model.frame)]).as_bytes(),
    )?;
    Ok(Some(model))
}

macro_rules! stage {
    ($run:expr, $name:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => {
                $run.fail($name, err);
                return $run.finish();
            }
        }
    };
}

/// Aₙ → booster → localized bump → cones → angle condition → gap → growth → sweep.
pub fn run_theorem_b_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let mut run = run_dir(cfg, "thmB")?;
    let Some(model) = model_stage(&mut run, cfg)? else {
        return run.finish();
    };
    if let Some(v) = stage!(run, "cones", cone_stage(&mut run, cfg, &model)) {
        let w = v.witness.as_ref().map(|w| format!("{w:?}")).unwrap_or_default();
        run.fail("cones", format!("{:?}-splitting cone verification failed; witness {w}", v.splitting));
        return run.finish();
    }
    let block = AxisBlock::center_of(&model.frame, SplittingKind::E);
    let l = &cfg.leaf;
    let patch = stage!(
        run,
        "leaf geometry",
        integrate_leaf_patch(
            &model,
            block,
            &PatchSpec {
                base: l.base,
                edge: l.geom_edge,
                res: l.geom_res,
                max_step: l.max_step,
            }
        )
    );
    let geom = leaf_geometry(&patch, &l.thresholds, l.pairs, cfg.stream_seed(Stream::Leaf));
    let angle_ok = geom.alpha_min > l.angle_min_deg;
    let artifact = run.write("leaf_geom.json", to_json(&geom)?.as_bytes())?;
    run.summary.geometry = Some(GeometrySummary {
        q: geom.q,
        r_c: geom.r_c,
        alpha_min: geom.alpha_min,
        angle_condition: angle_ok,
        ratio_table_decreasing: strictly_decreasing(&geom.ratio_table),
        artifact,
    });
    stage!(run, "gap", gap_stage(&mut run, cfg, &model, Some(angle_ok)));
    let gap = run.summary.gap.as_ref().map(|g| g.gap).unwrap_or(0.0);
    let scale = stage!(run, "large scale", large_scale_ratio(&model, 2, 1.1, 64, cfg.stream_seed(Stream::Scale)));
    let gpatch = stage!(
        run,
        "growth",
        integrate_leaf_patch(
            &model,
            block,
            &PatchSpec {
                base: l.base,
                edge: l.growth_edge,
                res: l.growth_res,
                max_step: l.max_step,
            }
        )
    );
    let probe = stage!(run, "growth", volume_growth_probe(&model, &gpatch, l.n_max, gap, scale.m_estimate));
    run.write("growth.csv", growth_csv(&probe.rows).as_bytes())?;
    let artifact = run.write("growth.json", to_json(&probe)?.as_bytes())?;
    run.summary.growth = Some(GrowthSummary {
        predicted_crossing: probe.predicted_crossing,
        observed_crossing: probe.observed_crossing,
        lower_holds: probe.lower_holds,
        upper_holds: probe.upper_holds,
        large_scale_m: scale.m_estimate,
        artifact,
    });
    let pts = stage!(run, "sweep", gap_sweep(&cfg.model, &cfg.sweep.strengths, &cfg.sweep_plan()));
    run.summary.sweep_artifact = Some(run.write("sweep.csv", sweep_csv(&pts).as_bytes())?);
    run.finish()
}

/// Theorem C model → cones → gap → semiconjugacy → leaf correspondence → plaque probe.
pub fn run_theorem_c_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let mut run = run_dir(cfg, "thmC")?;
    let Some(model) = model_stage(&mut run, cfg)? else {
        return run.finish();
    };
    if let Some(v) = stage!(run, "cones", cone_stage(&mut run, cfg, &model)) {
        if v.splitting == SplittingKind::E {
            let w = v.witness.as_ref().map(|w| format!("{w:?}")).unwrap_or_default();
            run.fail("cones", format!("E-splitting cone verification failed; witness {w}"));
            return run.finish();
        }
    }
    stage!(run, "gap", gap_stage(&mut run, cfg, &model, Some(true)));
    let s = &cfg.semiconj;
    let field = stage!(
        run,
        "semiconjugacy",
        solve_semiconjugacy(
            &model,
            s.grid,
            s.tol,
            &SolveOptions {
                max_iter: s.max_iter,
                verify_samples: s.verify_samples,
                seed: cfg.stream_seed(Stream::Semiconj),
            }
        )
    );
    let (header, bytes) = encode_field(&field, &model)?;
    run.write("field.bin", &bytes)?;
    let artifact = run.write("field.json", format!("{header}\n").as_bytes())?;
    let block = AxisBlock::center_of(&model.frame, SplittingKind::E);
    let patch = stage!(
        run,
        "correspondence",
        integrate_leaf_patch(
            &model,
            block,
            &PatchSpec {
                base: cfg.leaf.base,
                edge: s.patch_edge,
                res: s.patch_res,
                max_step: s.patch_step,
            }
        )
    );
    let corr = leaf_correspondence_check(&field, &model, &patch, 10.0 * field.residual);
    let corr_artifact = run.write("correspondence.json", to_json(&corr)?.as_bytes())?;
    run.summary.semiconj = Some(SemiconjSummary {
        residual: field.residual,
        iterations: field.iterations,
        predicted_rate: field.predicted_rate,
        observed_rate: field.observed_rate.is_finite().then_some(field.observed_rate),
        correspondence_deviation: corr.deviation,
        id_deviation: corr.id_deviation,
        correspondence_pass: corr.pass,
        artifact,
        correspondence_artifact: corr_artifact,
    });
    let p = &cfg.probe;
    for (bins, name) in [(p.bins, "plaques.csv"), (2 * p.bins, "plaques_2x.csv")] {
        let rep = stage!(
            run,
            "probe",
            plaque_mass_probe(&field, &model, &p.plaque, p.samples, bins, cfg.stream_seed(Stream::Probe))
        );
        let artifact = run.write(name, plaque_csv(&rep).as_bytes())?;
        run.summary.probe.push(ProbeSummary {
            bins,
            mean_max_bin_mass: rep.mean_max_bin_mass,
            mean_tv_distance: rep.mean_tv_distance,
            populated: rep.rows.len(),
            excluded: rep.excluded,
            artifact,
        });
    }
    run.finish()
}

pub const PLOT_GROWTH: &str = "plot_growth.csv";
pub const PLOT_GAP_SWEEP: &str = "plot_gap_sweep.csv";
pub const PLOT_PROJECTION_RATIO: &str = "plot_projection_ratio.csv";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotReport {
    pub written: Vec<String>,
    /// inputs that were looked for and not found
    pub missing: Vec<String>,
}

fn columns(text: &str, want: &[&str]) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = parse_numeric_csv(text)?;
    let idx: Vec<usize> = want
        .iter()
        .map(|w| header.iter().position(|h| h == w).ok_or_else(|| LabError::Parse(format!("column {w} missing"))))
        .collect::<Result<_>>()?;
    Ok(rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect())
}

fn write_plot(out: &Path, name: &str, header: &[&str], rows: &[Vec<f64>], rep: &mut PlotReport) -> Result<()> {
    let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|v| fmt(*v)).collect()).collect();
    std::fs::write(out.join(name), csv_table(header, &rows))?;
    rep.written.push(name.into());
    Ok(())
}

/// Plot-data tables from a run directory: growth bounds, gap sweep and projection ratios.
pub fn emit_plots(run: &Path, out: &Path) -> Result<PlotReport> {
    std::fs::create_dir_all(out)?;
    let mut rep = PlotReport::default();
    match std::fs::read_to_string(run.join("growth.csv")) {
        Ok(t) => {
            let rows = columns(&t, &["n", "measured_vol", "upper_bound", "lower_bound"])?;
            write_plot(out, PLOT_GROWTH, &["n", "measured", "upper", "lower"], &rows, &mut rep)?;
        }
        Err(_) => rep.missing.push("growth.csv".into()),
    }
    match std::fs::read_to_string(run.join("sweep.csv")) {
        Ok(t) => {
            let rows = columns(&t, &["strength", "gap"])?;
            write_plot(out, PLOT_GAP_SWEEP, &["strength", "gap"], &rows, &mut rep)?;
        }
        Err(_) => rep.missing.push("sweep.csv".into()),
    }
    match std::fs::read_to_string(run.join("leaf_geom.json")) {
        Ok(t) => {
            let g: crate::foliation::LeafGeometry = serde_json::from_str(&t).map_err(|e| LabError::Parse(e.to_string()))?;
            let rows: Vec<Vec<f64>> = g.ratio_table.iter().map(|r| vec![r.threshold, r.ratio]).collect();
            write_plot(out, PLOT_PROJECTION_RATIO, &["M", "ratio"], &rows, &mut rep)?;
        }
        Err(_) => rep.missing.push("leaf_geom.json".into()),
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::describe::Family;
    use proptest::prelude::*;

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("dalab-exp-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn config_round_trip_and_defaults_materialize() {
        let c = ExperimentConfig::theorem_b_default();
        let t = c.to_toml().unwrap();
        assert!(t.contains("[leaf]") && t.contains("quadrature_resolution"));
        assert_eq!(ExperimentConfig::parse(&t).unwrap(), c);
        let minimal = "seed = 3\nout_dir = \"x\"\n[model]\nfamily = \"an\"\nn = 10\n";
        let m = ExperimentConfig::parse(minimal).unwrap();
        assert_eq!(m.cones, ConeSection::default());
        assert!(ExperimentConfig::parse("seed = 3\nout_dir = \"x\"\n[model]\nfamily = \"an\"\n[leaf]\ngeom_res = 3\n").is_err());
        assert!(ExperimentConfig::parse("seed = 3\n").is_err());
    }

    #[test]
    fn linear_pipeline_withholds_conclusion() {
        let mut c = ExperimentConfig::theorem_b_default().quick();
        c.model = ModelDescription::linear_only(Family::An, 100);
        c.out_dir = tmp("lin").to_string_lossy().into();
        let s = run_theorem_b_pipeline(&c).unwrap();
        assert!(s.completed, "{s:?}");
        let g = s.gap.as_ref().unwrap();
        assert!(g.gap.abs() < 1e-12);
        assert!(!g.fires);
        assert_eq!(g.verdict, "consistent with absolute continuity (no conclusion)");
        assert!(s.missing_artifacts(Path::new(&c.out_dir)).is_empty());
        let sweep = std::fs::read_to_string(Path::new(&c.out_dir).join("sweep.csv")).unwrap();
        assert_eq!(sweep, "strength,gap,stderr\n");
        let out = tmp("lin-plots");
        let rep = emit_plots(Path::new(&c.out_dir), &out).unwrap();
        assert!(rep.missing.is_empty());
        assert_eq!(std::fs::read_to_string(out.join(PLOT_GAP_SWEEP)).unwrap(), "strength,gap\n");
        let growth = std::fs::read_to_string(out.join(PLOT_GROWTH)).unwrap();
        assert_eq!(growth.lines().count(), c.leaf.n_max + 1);
        assert!(growth.lines().all(|l| l.split(',').count() == 4));
    }

    #[test]
    fn over_strong_model_stops_at_cones() {
        let mut c = ExperimentConfig::theorem_b_default().quick();
        c.model.factors = vec![FactorRecipe::Shear { amplitude: 5.0 }];
        c.out_dir = tmp("shear").to_string_lossy().into();
        let s = run_theorem_b_pipeline(&c).unwrap();
        assert!(!s.completed);
        assert_eq!(s.failure_stage.as_deref(), Some("cones"));
        assert!(s.cones.iter().any(|c| c.witness.is_some()));
        assert!(s.gap.is_none());
    }

    #[test]
    fn pipelines_are_deterministic() {
        for (name, base) in [("b", ExperimentConfig::theorem_b_default()), ("c", ExperimentConfig::theorem_c_default())] {
            let mut sums = vec![];
            let mut dirs = vec![];
            for k in 0..2 {
                let mut c = base.clone().quick();
                c.out_dir = tmp(&format!("det-{name}{k}")).to_string_lossy().into();
                let s = if name == "b" { run_theorem_b_pipeline(&c) } else { run_theorem_c_pipeline(&c) }.unwrap();
                assert!(s.completed, "{s:?}");
                assert!(s.missing_artifacts(Path::new(&c.out_dir)).is_empty());
                dirs.push(PathBuf::from(&c.out_dir));
                sums.push(s);
            }
            for a in sums[0].artifacts.iter().filter(|a| *a != "config.toml") {
                let x = std::fs::read(dirs[0].join(a)).unwrap();
                let y = std::fs::read(dirs[1].join(a)).unwrap();
                assert!(x == y, "{a} differs between identical runs");
            }
        }
    }

    #[test]
    fn plots_list_missing_inputs() {
        let empty = tmp("empty");
        std::fs::create_dir_all(&empty).unwrap();
        let rep = emit_plots(&empty, &tmp("empty-out")).unwrap();
        assert_eq!(rep.missing.len(), 3);
        assert!(rep.written.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn config_parse_serialize_is_idempotent(seed in 0u64..=i64::MAX as u64, samples in 1usize..100_000, grid in 2usize..64, n in 1u64..1000, bins in 1usize..64) {
            let mut c = ExperimentConfig::theorem_c_default();
            c.seed = seed;
            c.cones.samples = samples;
            c.semiconj.grid = grid;
            c.probe.bins = bins;
            c.model = ModelDescription::linear_only(Family::An, n);
            let t1 = c.to_toml().unwrap();
            let c1 = ExperimentConfig::parse(&t1).unwrap();
            prop_assert_eq!(&c1, &c);
            prop_assert_eq!(c1.to_toml().unwrap(), t1);
        }
    }
}
