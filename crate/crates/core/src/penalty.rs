//! Additive per-component variance penalty
//!
//! ```text
//! p̃ₙ(σ) = −n⁻¹ { s²/σ² + log(σ²/s²) }
//! ```
//!
//! where `s²` is the scale anchor (the sample variance for the
//! scale-invariant form, `1` for the raw form). The total penalty of a
//! mixing distribution is the sum over its components.

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Result};
use crate::model::{MixingDistribution, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyForm {
    /// `−n⁻¹ { s²/σ² + log(σ²/s²) }`
    #[default]
    Standard,
    /// `−n⁻¹ log(σ²/s²)`: too weak near `σ = 0`, kept as a negative control.
    LogOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub scale_anchor: f64,
    #[serde(default)]
    pub form: PenaltyForm,
}

impl PenaltyConfig {
    pub fn new(scale_anchor: f64, form: PenaltyForm) -> Result<Self> {
        if !(scale_anchor > 0.0 && scale_anchor.is_finite()) {
            return Err(contract(format!(
                "penalty scale anchor must be positive and finite, got {scale_anchor}"
            )));
        }
        Ok(Self { scale_anchor, form })
    }

    /// Raw form, anchored at `σ² = 1`.
    pub fn raw() -> Self {
        Self {
            scale_anchor: 1.0,
            form: PenaltyForm::Standard,
        }
    }

    /// Scale-invariant form anchored at the sample variance `sₙ²`.
    pub fn for_sample(sample: &Sample) -> Result<Self> {
        Self::new(sample.variance(), PenaltyForm::Standard)
    }

    pub fn negative_control() -> Self {
        Self {
            scale_anchor: 1.0,
            form: PenaltyForm::LogOnly,
        }
    }

    /// Penalty as a function of the variance `v = σ²` (no validation).
    pub(crate) fn of_variance(&self, n: usize, v: f64) -> f64 {
        let ratio = v / self.scale_anchor;
        let inner = match self.form {
            PenaltyForm::Standard => 1.0 / ratio + ratio.ln(),
            PenaltyForm::LogOnly => ratio.ln(),
        };
        -inner / n as f64
    }

    /// Maximizer of `−(S/2) log v − SS/(2v) + p̃ₙ(√v)` over `v > 0`: the
    /// variance update of the penalized M-step for a component with
    /// responsibility mass `s` and weighted sum of squares `ss`.
    pub fn variance_update(&self, n: usize, s: f64, ss: f64) -> f64 {
        let c = 2.0 / n as f64;
        match self.form {
            PenaltyForm::Standard => (ss + c * self.scale_anchor) / (s + c),
            PenaltyForm::LogOnly => ss / (s + c),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(contract("penalty requires n ≥ 1"));
    }
    Ok(())
}

/// `p̃ₙ(σ)` for one component.
pub fn penalty_component(cfg: &PenaltyConfig, n: usize, sigma: f64) -> Result<f64> {
    check_n(n)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(domain(format!("penalty needs a positive finite σ, got {sigma}")));
    }
    Ok(cfg.of_variance(n, sigma * sigma))
}

/// `pₙ(G) = Σⱼ p̃ₙ(σⱼ)`.
pub fn penalty_total(cfg: &PenaltyConfig, n: usize, g: &MixingDistribution) -> Result<f64> {
    g.atoms().iter().try_fold(0.0, |acc, a| {
        let sigma = a
            .scale
            .ok_or_else(|| contract("penalty_total requires every atom to carry a scale"))?;
        Ok(acc + penalty_component(cfg, n, sigma)?)
    })
}

/// Per-`n` outcome of the severity check `p̃ₙ(σ) < (log n)² log σ` over
/// grid points with `σ < n⁻¹ log n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityRow {
    pub n: usize,
    pub sigma_threshold: f64,
    pub points_checked: usize,
    pub violations: usize,
    /// `min (bound − penalty)` over checked points; positive means the
    /// inequality holds everywhere at this `n`.
    pub worst_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyValidation {
    pub form: PenaltyForm,
    /// `max [p̃ₙ(σ)]⁺` over the whole grid.
    pub max_positive_part: f64,
    /// `sup_σ [p̃ₙ(σ)]⁺ / n` decays at least like `1/n` along the `n` grid.
    pub upper_bound_holds: bool,
    /// `|p̃ₙ(σ)| / n` decays at least like `1/n` at every fixed `σ`.
    pub lower_bound_holds: bool,
    pub severity: Vec<SeverityRow>,
    /// Smallest grid `n` from which the severity inequality holds at every
    /// larger grid `n`; `None` if it fails at the largest `n`.
    pub severity_n0: Option<usize>,
    pub severity_holds: bool,
    pub passed: bool,
}

/// Certifies the additivity-compatible size conditions of a penalty on finite
/// `n` and `σ` grids.
pub fn validate_penalty_properties(
    cfg: &PenaltyConfig,
    n_grid: &[usize],
    sigma_grid: &[f64],
) -> Result<PenaltyValidation> {
    if n_grid.is_empty() || sigma_grid.is_empty() {
        return Err(contract("penalty validation needs nonempty grids"));
    }
    let mut ns = n_grid.to_vec();
    ns.sort_unstable();
    ns.dedup();
    ns.iter().try_for_each(|&n| check_n(n))?;
    let mut table = Vec::with_capacity(ns.len());
    for &n in &ns {
        let row = sigma_grid
            .iter()
            .map(|&s| penalty_component(cfg, n, s))
            .collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    let shrink = ns[0] as f64 / *ns.last().expect("nonempty") as f64;
    let decays = |seq: &[f64]| -> bool {
        let nonincreasing = seq.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let first = seq[0];
        let last = *seq.last().expect("nonempty");
        nonincreasing && last <= first * shrink * (1.0 + 1e-12)
    };

    let sup_pos: Vec<f64> = table
        .iter()
        .zip(&ns)
        .map(|(row, &n)| row.iter().fold(0.0f64, |m, &p| m.max(p)) / n as f64)
        .collect();
    let max_positive_part = table.iter().flatten().fold(0.0f64, |m, &p| m.max(p));
    let upper_bound_holds = max_positive_part == 0.0 || decays(&sup_pos);

    let lower_bound_holds = (0..sigma_grid.len()).all(|j| {
        let seq: Vec<f64> = table.iter().zip(&ns).map(|(row, &n)| row[j].abs() / n as f64).collect();
        decays(&seq)
    });

    let severity: Vec<SeverityRow> = ns
        .iter()
        .zip(&table)
        .map(|(&n, row)| {
            let ln_n = (n as f64).ln();
            let sigma_threshold = ln_n / n as f64;
            let mut points_checked = 0;
            let mut violations = 0;
            let mut worst: Option<f64> = None;
            for (&s, &p) in sigma_grid.iter().zip(row) {
                if s < sigma_threshold {
                    points_checked += 1;
                    let margin = ln_n * ln_n * s.ln() - p;
                    if !(margin > 0.0) {
                        violations += 1;
                    }
                    worst = Some(worst.map_or(margin, |w: f64| w.min(margin)));
                }
            }
            SeverityRow {
                n,
                sigma_threshold,
                points_checked,
                violations,
                worst_margin: worst,
            }
        })
        .collect();
    let mut severity_n0 = None;
    for row in severity.iter().rev() {
        if row.violations == 0 {
            severity_n0 = Some(row.n);
        } else {
            break;
        }
    }
    let severity_holds = severity_n0.is_some_and(|n0| severity.iter().any(|r| r.n >= n0 && r.points_checked > 0));
    Ok(PenaltyValidation {
        form: cfg.form,
        max_positive_part,
        upper_bound_holds,
        lower_bound_holds,
        severity,
        severity_n0,
        severity_holds,
        passed: upper_bound_holds && lower_bound_holds && severity_holds,
    })
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
