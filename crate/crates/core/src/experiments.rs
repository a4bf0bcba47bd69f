//! Reproducible simulation studies.
//!
//! Replications run in parallel on the rayon pool. Each `(n, rep)` pair draws
//! its sample from `derive_seed(master_seed, [n, rep])`, so results do not
//! depend on scheduling and are assembled in `(n, rep)` order.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::{degenerate_mixing, degenerate_sequence_demo, CheckReport};
use crate::error::{contract, Result};
use crate::estimators::{em_fit, em_fit_from, FitConfig, FitMode, FitReport};
use crate::metrics::{kw_distance, KwDim};
use crate::model::{sample_mixture, ComponentFamily, MixingDistribution, Sample};
use crate::numeric::{derive_seed, quantile_sorted, serde_float};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Generating family. For the equal-variance family its variance is the
    /// true shared variance.
    pub family: ComponentFamily,
    pub g_star: MixingDistribution,
    /// Strictly increasing sample sizes.
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub fit: FitConfig,
    #[serde(default)]
    pub master_seed: u64,
    /// Per-replication CSV; the summary goes next to it as
    /// `<stem>.summary.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        self.g_star.check_family(self.family)?;
        if !self.g_star.is_proper() {
            return Err(contract("g_star must be a probability distribution"));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(contract("n_grid must be nonempty and strictly increasing"));
        }
        if self.reps == 0 {
            return Err(contract("reps must be at least 1"));
        }
        if std::mem::discriminant(&self.fit.family) != std::mem::discriminant(&self.family) {
            return Err(contract("fit family must match the generating family"));
        }
        self.fit.validate()
    }

    fn kw_dim(&self) -> KwDim {
        match self.family {
            ComponentFamily::NormalFreeVariance => KwDim::Two,
            _ => KwDim::One,
        }
    }

    fn sample_seed(&self, n: usize, rep: usize) -> u64 {
        derive_seed(self.master_seed, &[n as u64, rep as u64])
    }

    fn fit_seed(&self, n: usize, rep: usize) -> u64 {
        derive_seed(self.master_seed, &[n as u64, rep as u64, 1])
    }

    fn tasks(&self) -> Vec<(usize, usize)> {
        self.n_grid
            .iter()
            .flat_map(|&n| (0..self.reps).map(move |r| (n, r)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub n: usize,
    pub rep: usize,
    /// KW distance from the estimate to `G*`; `+inf` when the fit failed.
    #[serde(with = "serde_float")]
    pub kw_dist: f64,
    #[serde(with = "serde_float")]
    pub objective: f64,
    pub converged: bool,
    pub wall_time_ms: u64,
    #[serde(default, with = "serde_float::option", skip_serializing_if = "Option::is_none")]
    pub structural_variance: Option<f64>,
    #[serde(default, with = "serde_float::option", skip_serializing_if = "Option::is_none")]
    pub min_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReplicationResult {
    fn failed(n: usize, rep: usize, ms: u64, err: String) -> Self {
        Self {
            n,
            rep,
            kw_dist: f64::INFINITY,
            objective: f64::NAN,
            converged: false,
            wall_time_ms: ms,
            structural_variance: None,
            min_scale: None,
            error: Some(err),
        }
    }

    pub fn is_failure(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    /// Quantiles of `kw_dist` over all replications, failures included at
    /// their `+inf` sentinel.
    #[serde(with = "serde_float")]
    pub median: f64,
    #[serde(with = "serde_float")]
    pub q25: f64,
    #[serde(with = "serde_float")]
    pub q75: f64,
    pub failures: usize,
    pub reps: usize,
}

/// Per-`n` median and quartiles of `kw_dist`.
pub fn summarize(results: &[ReplicationResult]) -> Vec<SizeSummary> {
    let mut ns: Vec<usize> = results.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let rows: Vec<&ReplicationResult> = results.iter().filter(|r| r.n == n).collect();
            let mut d: Vec<f64> = rows.iter().map(|r| r.kw_dist).collect();
            d.sort_by(f64::total_cmp);
            SizeSummary {
                n,
                median: quantile_sorted(&d, 0.5),
                q25: quantile_sorted(&d, 0.25),
                q75: quantile_sorted(&d, 0.75),
                failures: rows.iter().filter(|r| r.is_failure()).count(),
                reps: rows.len(),
            }
        })
        .collect()
}

/// Least-squares slope of `log median` against `log n`.
pub fn log_log_slope(summary: &[SizeSummary]) -> f64 {
    let pts: Vec<(f64, f64)> = summary.iter().map(|s| ((s.n as f64).ln(), s.median.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Writes the tidy CSV (`n, rep, kw_dist, objective, converged,
/// wall_time_ms`).
pub fn write_results_csv(results: &[ReplicationResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "rep", "kw_dist", "objective", "converged", "wall_time_ms"])?;
    for r in results {
        w.write_record([
            r.n.to_string(),
            r.rep.to_string(),
            r.kw_dist.to_string(),
            r.objective.to_string(),
            r.converged.to_string(),
            r.wall_time_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `runs.csv` → `runs.summary.json`.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.summary.json"))
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

fn replicate(cfg: &ExperimentConfig, n: usize, rep: usize) -> ReplicationResult {
    let start = Instant::now();
    let outcome = (|| -> Result<(FitReport, f64)> {
        let sample = sample_mixture(cfg.family, &cfg.g_star, n, cfg.sample_seed(n, rep))?;
        let fit_cfg = cfg.fit.clone().with_seed(cfg.fit_seed(n, rep));
        let report = em_fit(&fit_cfg, &sample)?;
        if report.degenerate {
            return Err(crate::MixError::FitFailure("degenerate fit".into()));
        }
        let d = kw_distance(&report.estimate, &cfg.g_star, cfg.kw_dim())?.value;
        Ok((report, d))
    })();
    let ms = elapsed_ms(start);
    match outcome {
        Ok((report, kw_dist)) => ReplicationResult {
            n,
            rep,
            kw_dist,
            objective: report.objective,
            converged: report.converged,
            wall_time_ms: ms,
            structural_variance: report.structural_variance,
            min_scale: report.min_scale(),
            error: None,
        },
        Err(e) => ReplicationResult::failed(n, rep, ms, e.to_string()),
    }
}

/// Sample, fit and score every `(n, rep)`. Individual failures are recorded,
/// never propagated. Writes the CSV and JSON summary when `output_path` is
/// set.
pub fn run_consistency(cfg: &ExperimentConfig) -> Result<Vec<ReplicationResult>> {
    cfg.validate()?;
    let results: Vec<ReplicationResult> = cfg
        .tasks()
        .into_par_iter()
        .map(|(n, rep)| replicate(cfg, n, rep))
        .collect();
    if let Some(path) = &cfg.output_path {
        write_results_csv(&results, path)?;
        crate::io::write_json(&summarize(&results), &summary_path(path))?;
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReplication {
    pub n: usize,
    pub rep: usize,
    /// Unboundedness witness on this replication's sample.
    pub demo: CheckReport,
    /// `ℓₙ(G_k)` at the largest `k`.
    #[serde(with = "serde_float")]
    pub sequence_log_likelihood: f64,
    /// Plain EM started at `G_k` for the largest `k`; `+inf` once a component
    /// collapses.
    #[serde(with = "serde_float")]
    pub plain_objective: f64,
    pub plain_degenerate: bool,
    /// Plain EM from the default initializers, for reference only.
    #[serde(with = "serde_float::option")]
    pub plain_default_objective: Option<f64>,
    #[serde(with = "serde_float")]
    pub penalized_objective: f64,
    #[serde(with = "serde_float")]
    pub penalized_kw_dist: f64,
    /// `min_j σ̃ⱼ / sₙ` of the penalized fit.
    #[serde(with = "serde_float")]
    pub penalized_min_scale_ratio: f64,
    pub plain_exceeds_penalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub k_list: Vec<f64>,
    pub replications: Vec<DegeneracyReplication>,
    /// Replications whose plain objective beat the penalized optimum.
    pub plain_exceeds_count: usize,
    pub total: usize,
    #[serde(with = "serde_float")]
    pub min_scale_ratio: f64,
    pub penalized: Vec<SizeSummary>,
}

fn degeneracy_replicate(cfg: &ExperimentConfig, k_list: &[f64], n: usize, rep: usize) -> Result<DegeneracyReplication> {
    let sample: Sample = sample_mixture(cfg.family, &cfg.g_star, n, cfg.sample_seed(n, rep))?;
    let seed = cfg.fit_seed(n, rep);
    let demo = degenerate_sequence_demo(&sample, k_list)?;
    let k_max = *k_list.last().expect("validated");
    let g_k = degenerate_mixing(sample.values()[0], k_max)?;
    let sequence_log_likelihood = crate::model::log_likelihood(cfg.family, &g_k, &sample)?;

    let plain_cfg = FitConfig {
        m: 2,
        mode: FitMode::Plain,
        ..cfg.fit.clone().with_seed(seed)
    };
    let seeded = em_fit_from(&plain_cfg, &sample, cfg.family, &g_k)?;
    let plain_objective = seeded.objective.max(sequence_log_likelihood);
    let plain_default_objective = em_fit(&plain_cfg, &sample).ok().map(|r| r.objective);

    let pen = em_fit(&cfg.fit.clone().with_seed(seed), &sample)?;
    let penalized_kw_dist = kw_distance(&pen.estimate, &cfg.g_star, KwDim::Two)?.value;
    let s_n = sample.variance().sqrt();
    let penalized_min_scale_ratio = pen.min_scale().unwrap_or(f64::NAN) / s_n;
    Ok(DegeneracyReplication {
        n,
        rep,
        demo,
        sequence_log_likelihood,
        plain_objective,
        plain_degenerate: seeded.degenerate,
        plain_default_objective,
        penalized_objective: pen.objective,
        penalized_kw_dist,
        penalized_min_scale_ratio,
        plain_exceeds_penalized: plain_objective > pen.objective,
        error: None,
    })
}

/// Juxtaposes the unbounded plain likelihood with the penalized estimate on
/// every replication. Requires the free-variance family and a penalized fit
/// config.
pub fn run_degeneracy_comparison(cfg: &ExperimentConfig, k_list: &[f64]) -> Result<DegeneracyReport> {
    cfg.validate()?;
    if cfg.family != ComponentFamily::NormalFreeVariance {
        return Err(contract("degeneracy comparison needs the free-variance normal family"));
    }
    if !matches!(cfg.fit.mode, FitMode::Penalized { .. }) {
        return Err(contract("degeneracy comparison needs a penalized fit mode"));
    }
    if k_list.is_empty() || k_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(contract("k_list must be nonempty and strictly increasing"));
    }
    let replications: Vec<DegeneracyReplication> = cfg
        .tasks()
        .into_par_iter()
        .map(|(n, rep)| {
            degeneracy_replicate(cfg, k_list, n, rep).unwrap_or_else(|e| DegeneracyReplication {
                n,
                rep,
                demo: CheckReport::new(
                    "degenerate_sequence",
                    f64::NAN,
                    crate::checks::Comparison::AtLeast,
                    100.0,
                    None,
                    e.to_string(),
                ),
                sequence_log_likelihood: f64::NAN,
                plain_objective: f64::NAN,
                plain_degenerate: false,
                plain_default_objective: None,
                penalized_objective: f64::NAN,
                penalized_kw_dist: f64::INFINITY,
                penalized_min_scale_ratio: f64::NAN,
                plain_exceeds_penalized: false,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let as_results: Vec<ReplicationResult> = replications
        .iter()
        .map(|r| ReplicationResult {
            n: r.n,
            rep: r.rep,
            kw_dist: r.penalized_kw_dist,
            objective: r.penalized_objective,
            converged: r.error.is_none(),
            wall_time_ms: 0,
            structural_variance: None,
            min_scale: None,
            error: r.error.clone(),
        })
        .collect();
    let report = DegeneracyReport {
        k_list: k_list.to_vec(),
        plain_exceeds_count: replications.iter().filter(|r| r.plain_exceeds_penalized).count(),
        total: replications.len(),
        min_scale_ratio: replications
            .iter()
            .map(|r| r.penalized_min_scale_ratio)
            .fold(f64::INFINITY, |a, b| if b.is_nan() { f64::NAN } else { a.min(b) }),
        penalized: summarize(&as_results),
        replications,
    };
    if let Some(path) = &cfg.output_path {
        write_results_csv(&as_results, path)?;
        crate::io::write_json(&report, &summary_path(path))?;
    }
    Ok(report)
}
