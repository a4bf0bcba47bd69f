//! `mixlab`: sampling, fitting, distances, theory checks and simulation
//! studies for finite and nonparametric mixtures.
//!
//! Exit codes: 0 on success or a passed check, 1 on a failed check, 2 on
//! usage, configuration or runtime errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mixlab_core::checks::{run_check, CheckSpec};
use mixlab_core::experiments::{run_consistency, run_degeneracy_comparison, summarize, ExperimentConfig};
use mixlab_core::io::{read_sample, write_json, write_sample};
use mixlab_core::{
    em_fit, kw_distance, npmle_fit, sample_mixture, ComponentFamily, FitConfig, GridSpec, KwDim, MixingDistribution,
};

const SCHEMAS: &str = "\
JSON building blocks:
  family   {\"kind\": \"poisson\"}
           {\"kind\": \"normal_equal_variance\", \"variance\": 1.0}
           {\"kind\": \"normal_free_variance\"}
  mixing   {\"atoms\": [{\"mean\": 0.0, \"scale\": 1.0}, ...], \"weights\": [0.5, ...]}
           (omit \"scale\" unless the family is normal_free_variance; an optional
           \"mass\" must equal the weight sum)
  fit mode {\"kind\": \"plain\"} | {\"kind\": \"equal_variance\"}
           {\"kind\": \"penalized\", \"anchor\": \"sample_variance\" | {\"fixed\": v},
            \"form\": \"standard\" | \"log_only\"}
           {\"kind\": \"constrained\", \"sigma_floor\": 0.01}
Non-finite floats are written as the strings \"inf\", \"-inf\" and \"nan\".";

#[derive(Parser)]
#[command(name = "mixlab", version, about = "Mixture estimation lab", after_help = SCHEMAS)]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Progress on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded sample from a mixture.
    #[command(
        after_help = "Config: {\"family\": family, \"mixing\": mixing, \"n\": 500, \"seed\": 1}\n\
        Writes a CSV with a `value` column and a `<stem>.meta.json` sidecar."
    )]
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fit a finite mixture by EM.
    #[command(
        after_help = "Config (FitConfig): {\"family\": family, \"m\": 2, \"mode\": fit mode,\n\
        \"max_iter\": 2000, \"tol\": 1e-8, \"restarts\": 4, \"seed\": 0}\n\
        Output: FitReport JSON with the estimate, objective trace and diagnostics."
    )]
    Fit(FitArgs),
    /// Grid nonparametric MLE with gradient certificate.
    #[command(
        after_help = "Config: {\"family\": family, \"grid\": {\"atoms\": 200, \"points\": [..],\n\
        \"max_rounds\": 200, \"iterations_per_round\": 500}, \"tol_grad\": 1e-3}\n\
        Only the poisson and normal_equal_variance families are accepted."
    )]
    Npmle(FitArgs),
    /// Kiefer-Wolfowitz distance between two mixing distributions.
    Distance {
        g1: PathBuf,
        g2: PathBuf,
        /// 1 integrates over means, 2 over (mean, scale).
        #[arg(long, default_value_t = 1)]
        dim: u8,
    },
    /// Run a named numerical check; exit 1 when it fails.
    #[command(after_help = "Checks and their parameters:\n\
        jensen_kl        family, g_star, g_alt, mc_n (>= 10000, default 100000), seed\n\
        pfanzagl         family, g_star, g_alt, u in (0,1), mc_n, seed\n\
        finite_grid_mle  family, theta_star, candidates, n_grid, reps, seed\n\
        degenerate_sequence  sample, k_list\n\
        concentration    density_sup, sample, eps_list\n\
        poisson_heavy_tail   x_list (integers in [1, 30])\n\
        g_dominance      eps0, sigma1_list, x_offsets\n\
        kl_finiteness_bounded_poisson  m_bound, g_star, mc_n, seed\n\
        A sample is {\"values\": [..]}, {\"csv\": \"path\"},\n\
        {\"mixture\": {\"family\": .., \"mixing\": .., \"n\": .., \"seed\": ..}} or\n\
        {\"uniform\": {\"low\": 0, \"high\": 1, \"n\": .., \"seed\": ..}}.")]
    Check {
        #[arg(long)]
        name: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulation studies.
    #[command(
        after_help = "Config: {\"family\": family, \"g_star\": mixing, \"n_grid\": [100, 300],\n\
        \"reps\": 50, \"fit\": FitConfig, \"master_seed\": 0, \"output_path\": \"runs.csv\"}\n\
        degeneracy additionally takes \"k_list\": [1, 1e2, 1e4, 1e6].\n\
        CSV columns: n, rep, kw_dist, objective, converged, wall_time_ms;\n\
        the per-n summary {median, q25, q75, failures} goes to <stem>.summary.json."
    )]
    Experiment {
        kind: ExperimentKind,
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_path` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Sample CSV (header `value`).
    #[arg(long)]
    sample: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Consistency,
    Degeneracy,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleConfig {
    family: ComponentFamily,
    mixing: MixingDistribution,
    n: usize,
    #[serde(default)]
    seed: u64,
}

fn default_tol_grad() -> f64 {
    1e-3
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NpmleConfig {
    family: ComponentFamily,
    #[serde(default)]
    grid: GridSpec,
    #[serde(default = "default_tol_grad")]
    tol_grad: f64,
}

#[derive(Deserialize)]
struct DegeneracyConfig {
    #[serde(flatten)]
    experiment: ExperimentConfig,
    k_list: Vec<f64>,
}

/// Reads and parses a JSON file; parse errors carry line and column.
fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>, json: bool, summary: &str) -> Result<()> {
    match output {
        Some(path) => {
            write_json(value, path)?;
            if json {
                println!("{}", serde_json::to_string_pretty(value)?);
            } else {
                println!("{summary}");
            }
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let verbose = cli.verbose > 0;
    match cli.command {
        Command::Sample { config, output } => {
            let c: SampleConfig = load(&config)?;
            let s = sample_mixture(c.family, &c.mixing, c.n, c.seed)?;
            write_sample(&s, &output)?;
            if cli.json {
                println!(
                    "{}",
                    serde_json::json!({"path": output, "n": s.len(), "seed": s.seed, "mean": s.mean()})
                );
            } else {
                println!("wrote {} observations to {}", s.len(), output.display());
            }
        }
        Command::Fit(args) => {
            let cfg: FitConfig = load(&args.config)?;
            let sample = read_sample(&args.sample)?;
            if verbose {
                eprintln!("fitting m = {} ({}) to n = {}", cfg.m, cfg.mode.name(), sample.len());
            }
            let report = em_fit(&cfg, &sample)?;
            let summary = format!(
                "objective {:e} after {} iterations (converged: {}, degenerate: {})",
                report.objective, report.iterations, report.converged, report.degenerate
            );
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(&report, args.output.as_deref(), cli.json, &summary)?;
        }
        Command::Npmle(args) => {
            let cfg: NpmleConfig = load(&args.config)?;
            let sample = read_sample(&args.sample)?;
            let result = npmle_fit(cfg.family, &sample, &cfg.grid, cfg.tol_grad)?;
            let summary = format!(
                "support {} of {} grid atoms; sup D = {:e}; certified: {}",
                result.support_size, result.grid_size, result.gradient_sup, result.certified
            );
            emit(&result, args.output.as_deref(), cli.json, &summary)?;
        }
        Command::Distance { g1, g2, dim } => {
            let dim = KwDim::try_from(dim)?;
            let a: MixingDistribution = load(&g1)?;
            let b: MixingDistribution = load(&g2)?;
            let d = kw_distance(&a, &b, dim)?;
            if cli.json {
                println!("{}", serde_json::to_string(&d)?);
            } else {
                println!("{:.12}", d.value);
            }
        }
        Command::Check { name, config } => {
            let params: serde_json::Value = load(&config)?;
            let spec = CheckSpec::from_parts(&name, params)
                .with_context(|| format!("invalid parameters for check `{name}` in {}", config.display()))?;
            let report = run_check(&spec)?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{}", report.summary_line());
                if verbose {
                    println!("{}", report.details);
                }
            }
            return Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            });
        }
        Command::Experiment { kind, config, output } => match kind {
            ExperimentKind::Consistency => {
                let mut cfg: ExperimentConfig = load(&config)?;
                if output.is_some() {
                    cfg.output_path = output;
                }
                let results = run_consistency(&cfg)?;
                let summary = summarize(&results);
                if cli.json {
                    println!("{}", serde_json::to_string_pretty(&summary)?);
                } else {
                    println!("n\tmedian\tq25\tq75\tfailures");
                    for s in &summary {
                        println!("{}\t{:.6}\t{:.6}\t{:.6}\t{}", s.n, s.median, s.q25, s.q75, s.failures);
                    }
                }
            }
            ExperimentKind::Degeneracy => {
                let mut cfg: DegeneracyConfig = load(&config)?;
                if output.is_some() {
                    cfg.experiment.output_path = output;
                }
                let report = run_degeneracy_comparison(&cfg.experiment, &cfg.k_list)?;
                if cli.json {
                    println!("{}", serde_json::to_string_pretty(&report)?);
                } else {
                    println!(
                        "plain objective exceeded the penalized optimum in {}/{} replications; \
                         smallest penalized scale ratio {:.4e}",
                        report.plain_exceeds_count, report.total, report.min_scale_ratio
                    );
                }
            }
        },
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
