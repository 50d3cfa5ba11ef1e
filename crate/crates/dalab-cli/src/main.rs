use clap::{Args, Parser, Subcommand, ValueEnum};
use dalab::bundles::AxisBlock;
use dalab::cones::{choose_constants, verify_invariance, SamplePlan};
use dalab::describe::{Family, ModelDescription};
use dalab::experiment::{self, ExperimentConfig};
use dalab::foliation::{integrate_leaf_patch, large_scale_ratio, leaf_geometry, volume_growth_probe, PatchSpec};
use dalab::io::{csv_table, encode_field, load_model, read_field, to_json};
use dalab::linear::{build_an, build_theorem_c_matrix, solve_spectrum, SplittingKind};
use dalab::lyapunov::{jacobian_integral_quadrature, qr_spectrum, theorem_a_gap, OrbitPlan};
use dalab::semiconj::{plaque_mass_probe, solve_semiconjugacy, PlaqueBox, SolveOptions};
use dalab::{LabError, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dalab", version, about = "Numerical lab for DA diffeomorphisms of the 4-torus")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Model descriptions
    #[command(subcommand)]
    Model(ModelCmd),
    /// Spectrum and splitting angles of a linear family member
    Spectrum {
        #[arg(long, value_parser = parse_family)]
        family: Family,
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Cones(ConesCmd),
    /// Lyapunov spectra along random orbits
    Lyapunov(LyapunovArgs),
    #[command(subcommand)]
    Leaf(LeafCmd),
    #[command(subcommand)]
    Semiconj(SemiconjCmd),
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Plot-data tables from a pipeline output directory
    Plots {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Compose a description into a model file
    Build {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Splitting {
    E,
    F,
}

impl From<Splitting> for SplittingKind {
    fn from(s: Splitting) -> Self {
        match s {
            Splitting::E => SplittingKind::E,
            Splitting::F => SplittingKind::F,
        }
    }
}

#[derive(Subcommand)]
enum ConesCmd {
    /// Sampled cone-invariance check
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, ignore_case = true)]
        splitting: Splitting,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LyapunovArgs {
    /// model file, or a description file in sweep mode
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "T", default_value_t = 10_000)]
    t: usize,
    #[arg(long, default_value_t = 32)]
    orbits: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    stride: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    /// booster strengths for a gap sweep (comma separated)
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PatchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    edge: f64,
    #[arg(long)]
    res: usize,
    #[arg(long, default_value_t = 0.1)]
    max_step: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4])]
    base: Vec<f64>,
}

impl PatchArgs {
    fn spec(&self) -> Result<PatchSpec> {
        let base: [f64; 4] = self
            .base
            .as_slice()
            .try_into()
            .map_err(|_| LabError::InvalidInput("--base needs four coordinates".into()))?;
        Ok(PatchSpec {
            base,
            edge: self.edge,
            res: self.res,
            max_step: self.max_step,
        })
    }
}

#[derive(Subcommand)]
enum LeafCmd {
    /// Volume growth of an iterated center patch against its bounds
    Probe {
        #[command(flatten)]
        patch: PatchArgs,
        #[arg(long, default_value_t = 30)]
        iters: usize,
        /// center-sum gap (default: Jacobian quadrature)
        #[arg(long)]
        gap: Option<f64>,
        /// containment edge floor (default: measured large-scale constant)
        #[arg(long)]
        min_edge: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leaf geometry: Q, R_c, least angle and projection ratios
    Geom {
        #[command(flatten)]
        patch: PatchArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 20.0, 40.0, 80.0])]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 2000)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SemiconjCmd {
    /// Solve for the displacement field
    Solve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Plaque mass indicators of the pushed-forward volume
    Probe {
        #[arg(long)]
        model: PathBuf,
        /// directory holding field.json and field.bin
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        bins: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// experiment config (defaults are used when absent)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// reduced sample sizes
    #[arg(long)]
    quick: bool,
}

#[derive(Subcommand)]
enum PipelineCmd {
    #[command(name = "thmB")]
    ThmB(PipelineArgs),
    #[command(name = "thmC")]
    ThmC(PipelineArgs),
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pipeline_config(a: &PipelineArgs, default: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(p) => ExperimentConfig::parse(&std::fs::read_to_string(p)?)?,
        None => default,
    };
    if a.quick {
        c = c.quick();
    }
    if let Some(d) = &a.out_dir {
        c.out_dir = d.to_string_lossy().into();
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Model(ModelCmd::Build { spec, out }) => {
            let d = ModelDescription::parse(&std::fs::read_to_string(&spec)?)?;
            let m = d.build()?;
            std::fs::write(&out, to_json(&m.to_file(&d.label))?)?;
            eprintln!("certificates: {}", serde_json::to_string(&m.certificates).unwrap_or_default());
        }
        Cmd::Spectrum { family, n, out } => {
            let a = match family {
                Family::An => build_an(n)?,
                Family::TheoremC => build_theorem_c_matrix(),
            };
            let f = solve_spectrum(&a)?;
            emit(&out, &csv_table(&experiment::SPECTRUM_HEADER, &[experiment::spectrum_row(n, &f)]))?;
        }
        Cmd::Cones(ConesCmd::Verify {
            model,
            splitting,
            samples,
            seed,
            out,
        }) => {
            let m = load_model(&model)?;
            let kind = splitting.into();
            let c = choose_constants(&m.frame, kind)?;
            let v = verify_invariance(&m, &c, kind, SamplePlan { samples, seed });
            emit(&out, &to_json(&v)?)?;
            return Ok(v.pass);
        }
        Cmd::Lyapunov(a) => {
            std::fs::create_dir_all(&a.out_dir)?;
            let plan = OrbitPlan {
                orbits: a.orbits,
                seed: a.seed,
                t: a.t,
                stride: a.stride,
                burn_in: a.burn_in,
            };
            plan.validate()?;
            if let Some(strengths) = &a.sweep {
                let d = ModelDescription::parse(&std::fs::read_to_string(&a.model)?)?;
                let pts = experiment::gap_sweep(&d, strengths, &plan)?;
                std::fs::write(a.out_dir.join("sweep.csv"), experiment::sweep_csv(&pts))?;
                print!("{}", experiment::sweep_csv(&pts));
                return Ok(true);
            }
            let m = load_model(&a.model)?;
            let rep = qr_spectrum(&m, &plan, SplittingKind::E)?;
            let verdict = theorem_a_gap(&rep, &m.frame, AxisBlock::center_of(&m.frame, SplittingKind::E).dim(), None);
            std::fs::write(a.out_dir.join("lyapunov.csv"), experiment::lyapunov_csv(&rep))?;
            let summary = serde_json::json!({
                "gap": rep.gap,
                "gap_stderr": rep.gap_stderr,
                "exponents": rep.exponents,
                "exponent_sum": rep.exponent_sum,
                "exponent_sum_floor": rep.exponent_sum_floor,
                "verdict": verdict,
            });
            let text = to_json(&summary)?;
            std::fs::write(a.out_dir.join("lyapunov.json"), &text)?;
            print!("{text}");
        }
        Cmd::Leaf(LeafCmd::Probe {
            patch,
            iters,
            gap,
            min_edge,
            out,
        }) => {
            let m = load_model(&patch.model)?;
            let spec = patch.spec()?;
            let p = integrate_leaf_patch(&m, AxisBlock::center_of(&m.frame, SplittingKind::E), &spec)?;
            let gap = match gap {
                Some(g) => g,
                None => {
                    let q = jacobian_integral_quadrature(&m, SplittingKind::E, 8)?;
                    q.value_fine - q.linear_value
                }
            };
            let min_edge = match min_edge {
                Some(e) => e,
                None => large_scale_ratio(&m, 2, 1.1, 64, 1)?.m_estimate,
            };
            let g = volume_growth_probe(&m, &p, iters, gap, min_edge)?;
            emit(&out, &experiment::growth_csv(&g.rows))?;
        }
        Cmd::Leaf(LeafCmd::Geom {
            patch,
            thresholds,
            pairs,
            seed,
            out,
        }) => {
            let m = load_model(&patch.model)?;
            let p = integrate_leaf_patch(&m, AxisBlock::center_of(&m.frame, SplittingKind::E), &patch.spec()?)?;
            emit(&out, &to_json(&leaf_geometry(&p, &thresholds, pairs, seed))?)?;
        }
        Cmd::Semiconj(SemiconjCmd::Solve {
            model,
            grid,
            tol,
            max_iter,
            seed,
            out_dir,
        }) => {
            let m = load_model(&model)?;
            let f = solve_semiconjugacy(
                &m,
                grid,
                tol,
                &SolveOptions {
                    max_iter,
                    seed,
                    ..Default::default()
                },
            )?;
            let (header, bytes) = encode_field(&f, &m)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("field.bin"), bytes)?;
            std::fs::write(out_dir.join("field.json"), format!("{header}\n"))?;
            println!("{header}");
        }
        Cmd::Semiconj(SemiconjCmd::Probe {
            model,
            field,
            samples,
            bins,
            seed,
            out,
        }) => {
            let m = load_model(&model)?;
            let f = read_field(&m, &field.join("field.json"), &field.join("field.bin"))?;
            let rep = plaque_mass_probe(&f, &m, &PlaqueBox::default(), samples, bins, seed)?;
            emit(&out, &experiment::plaque_csv(&rep))?;
            eprintln!(
                "mean max bin mass {} mean tv distance {} excluded {}",
                rep.mean_max_bin_mass, rep.mean_tv_distance, rep.excluded
            );
        }
        Cmd::Pipeline(p) => {
            let s = match p {
                PipelineCmd::ThmB(a) => experiment::run_theorem_b_pipeline(&pipeline_config(&a, ExperimentConfig::theorem_b_default())?)?,
                PipelineCmd::ThmC(a) => experiment::run_theorem_c_pipeline(&pipeline_config(&a, ExperimentConfig::theorem_c_default())?)?,
            };
            print!("{}", to_json(&s)?);
            return Ok(s.completed);
        }
        Cmd::Plots { run, out } => {
            let rep = experiment::emit_plots(Path::new(&run), Path::new(&out))?;
            for m in &rep.missing {
                eprintln!("missing input: {m}");
            }
            print!("{}", to_json(&rep)?);
            return Ok(rep.missing.is_empty());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
