use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ngain_core::io::{
    analyze_dataset, export_cohort, export_estimate_report, export_sweep, load_scores,
    write_cohort, write_json, Format, ScenarioConfig,
};
use ngain_core::{
    asymptotic_report, chebyshev_bound, reliability_grid, run_sweep, scenario_presets,
    theoretical_moments, ClampPolicy, NoiseDraws, NoiseSpec, ScenarioSpec,
};

const CHEBYSHEV_EPSILONS: [f64; 3] = [0.01, 0.02, 0.05];

#[derive(Parser)]
#[command(
    name = "ngain",
    version,
    about = "Normalized-gain estimator simulations and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one cohort and write per-learner x,f,x_star,f_star.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Test reliability of the observed scores.
        #[arg(long, default_value_t = 0.7)]
        reliability: f64,
        /// Output CSV file (stdout when absent).
        #[arg(long, conflicts_with = "out_dir")]
        out: Option<PathBuf>,
        /// Directory for `cohort.csv`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the replication sweep over the reliability grid and export all panels.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Compute both estimators for a real pretest/posttest score file.
    Analyze {
        /// CSV with header `learner_id,pretest,posttest`.
        #[arg(long)]
        input: PathBuf,
        /// Maximum attainable score; overrides a `# max_score = M` line.
        #[arg(long)]
        max_score: Option<f64>,
        /// Drop learners whose pretest equals the maximum score.
        #[arg(long)]
        exclude_ceiling: bool,
        #[arg(long, default_value = "json")]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Closed-form asymptotics for a scenario at one reliability.
    Theory {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1.0)]
        reliability: f64,
        #[arg(long, default_value = "json")]
        format: Format,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    Presets {
        #[arg(long, default_value = "json")]
        format: Format,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in scenario (see `presets`).
    #[arg(long)]
    preset: Option<String>,
    /// TOML scenario file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// clamp[:eps], reject-resample[:eps] or none.
    #[arg(long)]
    clamp_policy: Option<ClampPolicy>,
    /// Step of the reliability grid from 0.7 to 1.0.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Cohort size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    /// shared: one error draw per replication scaled to each reliability; fresh: new draws per reliability.
    #[arg(long)]
    noise_draws: Option<NoiseDraws>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioSpec> {
        let mut config = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(p) = &self.preset {
            config.preset = Some(p.clone());
        }
        let mut spec = config.resolve()?;
        if let Some(seed) = self.seed {
            spec.base_seed = seed;
        }
        if let Some(policy) = self.clamp_policy {
            spec.clamp_policy = policy;
        }
        if let Some(step) = self.grid_step {
            let lo = spec.reliability_grid.first().copied().unwrap_or(0.7);
            let hi = spec.reliability_grid.last().copied().unwrap_or(1.0);
            spec.reliability_grid = reliability_grid(lo, hi, step)?;
        }
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(r) = self.replications {
            spec.replications = r;
        }
        if let Some(d) = self.noise_draws {
            spec.noise_draws = d;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn emit_json(value: &impl serde::Serialize, out_dir: Option<&Path>, file: &str) -> Result<()> {
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_json(&dir.join(file), value)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

fn theory(spec: &ScenarioSpec, reliability: f64) -> Result<serde_json::Value> {
    let noise = NoiseSpec::from_reliability(spec.var_x(), reliability, spec.clamp_policy)?;
    let report = asymptotic_report(spec, &noise)?;
    let moments = theoretical_moments(spec)?;
    let mut bounds = serde_json::Map::new();
    for eps in CHEBYSHEV_EPSILONS {
        bounds.insert(
            eps.to_string(),
            chebyshev_bound(spec.n, eps, report.var_fhat_star)?.into(),
        );
    }
    Ok(serde_json::json!({
        "scenario": spec.name,
        "digest": spec.digest(),
        "reliability": reliability,
        "sigma_x": noise.sigma_x,
        "sigma_y": noise.sigma_y,
        "n": spec.n,
        "moments": moments,
        "var_fhat": report.var_fhat,
        "var_fhat_star": report.var_fhat_star,
        "efficiency_fbar_better": report.efficiency_fbar_better,
        "expected_f_star": report.expected_f_star,
        "bias_fbar_star": report.bias_fbar_star,
        "chebyshev_bound": bounds,
    }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            reliability,
            out,
            out_dir,
        } => {
            let spec = scenario.resolve()?;
            let (latent, observed) =
                ngain_core::harness::simulate_cohort(&spec, reliability, spec.base_seed)?;
            let path = match (out, out_dir) {
                (Some(p), _) => p,
                (None, Some(dir)) => dir.join("cohort.csv"),
                (None, None) => {
                    write_cohort(&latent, &observed, std::io::stdout().lock())?;
                    return Ok(());
                }
            };
            export_cohort(&latent, &observed, &path)?;
            eprintln!("wrote {} ({} learners)", path.display(), latent.len());
        }
        Command::Sweep {
            scenario,
            out_dir,
            format,
        } => {
            let spec = scenario.resolve()?;
            let sweep = run_sweep(&spec)?;
            for path in export_sweep(&sweep, &out_dir, format)? {
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Analyze {
            input,
            max_score,
            exclude_ceiling,
            format,
            out_dir,
        } => {
            let data = load_scores(&input, max_score)?;
            let analysis = analyze_dataset(&data, exclude_ceiling)?;
            match format {
                Format::Json => emit_json(&analysis, out_dir.as_deref(), "analysis.json")?,
                Format::Csv => {
                    let Some(dir) = out_dir else {
                        bail!("--format csv needs --out-dir");
                    };
                    fs::create_dir_all(&dir)?;
                    export_estimate_report(
                        &analysis.report,
                        &dir.join("analysis.csv"),
                        Format::Csv,
                    )?;
                }
            }
            eprintln!("{}", analysis.caveat);
        }
        Command::Theory {
            scenario,
            reliability,
            format,
            out_dir,
        } => {
            let spec = scenario.resolve()?;
            let value = theory(&spec, reliability)?;
            match format {
                Format::Json => emit_json(&value, out_dir.as_deref(), "theory.json")?,
                Format::Csv => {
                    let Some(dir) = out_dir else {
                        bail!("--format csv needs --out-dir");
                    };
                    fs::create_dir_all(&dir)?;
                    let noise =
                        NoiseSpec::from_reliability(spec.var_x(), reliability, spec.clamp_policy)?;
                    ngain_core::io::export_asymptotic_report(
                        &asymptotic_report(&spec, &noise)?,
                        &dir.join("theory.csv"),
                        Format::Csv,
                    )?;
                }
            }
        }
        Command::Presets { format } => {
            let presets = scenario_presets();
            match format {
                Format::Json => emit_json(&presets, None, "")?,
                Format::Csv => {
                    println!("name,alpha_x,beta_x,alpha_f,beta_f,n,replications");
                    for p in presets {
                        println!(
                            "{},{},{},{},{},{},{}",
                            p.name, p.alpha_x, p.beta_x, p.alpha_f, p.beta_f, p.n, p.replications
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
