//! Maximum likelihood estimators for mixing distributions.
//!
//! [`em_fit`] handles finite mixtures with a known number of components under
//! four objectives (plain, penalized, σ-constrained, equal-variance);
//! [`npmle_fit`] computes the grid-restricted nonparametric MLE together with
//! its gradient certificate.

mod em;
mod npmle;

pub use em::{e_step, em_fit, em_fit_from, m_step, MixtureParams, Responsibilities, Variances};
pub use npmle::{gradient_function, npmle_fit, GridSpec, NpmleResult};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::{ComponentFamily, MixingDistribution, Sample};
use crate::numeric::serde_float;
use crate::penalty::{PenaltyConfig, PenaltyForm};

/// Where the penalty's scale anchor comes from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleAnchor {
    /// `sₙ²` of the data being fitted (scale-invariant form).
    #[default]
    SampleVariance,
    Fixed(f64),
}

/// Objective maximized by [`em_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitMode {
    /// Plain log-likelihood. With free variances the supremum is infinite and
    /// the report carries a warning.
    Plain,
    /// Log-likelihood plus the additive variance penalty.
    Penalized {
        #[serde(default)]
        anchor: ScaleAnchor,
        #[serde(default)]
        form: PenaltyForm,
    },
    /// Plain likelihood over `σⱼ ≥ sigma_floor`.
    Constrained { sigma_floor: f64 },
    /// Normal components with one shared, estimated variance.
    EqualVariance,
}

impl FitMode {
    pub fn penalized() -> Self {
        FitMode::Penalized {
            anchor: ScaleAnchor::SampleVariance,
            form: PenaltyForm::Standard,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FitMode::Plain => "plain",
            FitMode::Penalized { .. } => "penalized",
            FitMode::Constrained { .. } => "constrained",
            FitMode::EqualVariance => "equal_variance",
        }
    }

    /// Binds sample-dependent quantities (the penalty anchor).
    pub fn resolve(&self, sample: &Sample) -> Result<UpdateRule> {
        Ok(match *self {
            FitMode::Plain => UpdateRule::Plain,
            FitMode::Penalized { anchor, form } => {
                let a = match anchor {
                    ScaleAnchor::SampleVariance => sample.variance(),
                    ScaleAnchor::Fixed(v) => v,
                };
                UpdateRule::Penalized(PenaltyConfig::new(a, form)?)
            }
            FitMode::Constrained { sigma_floor } => {
                if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
                    return Err(contract(format!(
                        "sigma_floor must be positive and finite, got {sigma_floor}"
                    )));
                }
                UpdateRule::Constrained { sigma_floor }
            }
            FitMode::EqualVariance => UpdateRule::EqualVariance,
        })
    }

    pub(crate) fn check_family(&self, family: ComponentFamily) -> Result<()> {
        let ok = matches!(
            (self, family),
            (FitMode::Plain, _)
                | (
                    FitMode::Penalized { .. } | FitMode::Constrained { .. },
                    ComponentFamily::NormalFreeVariance
                )
                | (FitMode::EqualVariance, ComponentFamily::NormalEqualVariance { .. })
        );
        if ok {
            Ok(())
        } else {
            Err(contract(format!(
                "mode `{}` is not available for the {} family",
                self.name(),
                family.name()
            )))
        }
    }
}

/// [`FitMode`] with the penalty anchor bound to a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    Plain,
    Penalized(PenaltyConfig),
    Constrained { sigma_floor: f64 },
    EqualVariance,
}

fn default_max_iter() -> usize {
    2000
}
fn default_tol() -> f64 {
    1e-8
}
fn default_restarts() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub family: ComponentFamily,
    /// Number of components.
    pub m: usize,
    pub mode: FitMode,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Stop once the objective increases by less than this.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Number of initializations; the first is the quantile spread, the rest
    /// jitter it with seeded noise.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

impl FitConfig {
    pub fn new(family: ComponentFamily, m: usize, mode: FitMode) -> Self {
        Self {
            family,
            m,
            mode,
            max_iter: default_max_iter(),
            tol: default_tol(),
            restarts: default_restarts(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.m == 0 {
            return Err(contract("m must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(contract(format!("tol must be positive, got {}", self.tol)));
        }
        if self.restarts == 0 {
            return Err(contract("restarts must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(contract("max_iter must be at least 1"));
        }
        if let FitMode::Constrained { sigma_floor } = self.mode {
            if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
                return Err(contract(format!(
                    "sigma_floor must be positive and finite, got {sigma_floor}"
                )));
            }
        }
        self.mode.check_family(self.family)
    }
}

/// Outcome of one initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    #[serde(with = "serde_float::option")]
    pub final_objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: ComponentFamily,
    pub mode: FitMode,
    /// Canonicalized fitted mixing distribution. For a degenerate plain fit
    /// this is the last iterate before the collapse.
    pub estimate: MixingDistribution,
    /// Fitted shared variance (equal-variance mode) or the family's fixed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structural_variance: Option<f64>,
    /// Final objective: `ℓₙ` or `ℓ̃ₙ = ℓₙ + pₙ`.
    #[serde(with = "serde_float")]
    pub objective: f64,
    #[serde(with = "serde_float")]
    pub log_likelihood: f64,
    #[serde(default, with = "serde_float::option", skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    /// Objective per iteration of the selected run, starting at the
    /// initializer.
    #[serde(with = "serde_float::vec")]
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub best_of_restarts: usize,
    pub restarts: Vec<RestartSummary>,
    /// A component collapsed onto data (σ² → 0): the likelihood is unbounded
    /// and the objective is reported as `+inf`.
    pub degenerate: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitReport {
    /// Smallest fitted component standard deviation, if the family has scales.
    pub fn min_scale(&self) -> Option<f64> {
        match self.structural_variance {
            Some(v) => Some(v.sqrt()),
            None => self.estimate.atoms().iter().filter_map(|a| a.scale).reduce(f64::min),
        }
    }

    /// Family with the fitted structural variance substituted in.
    pub fn fitted_family(&self) -> ComponentFamily {
        match (self.family, self.structural_variance) {
            (ComponentFamily::NormalEqualVariance { .. }, Some(variance)) => {
                ComponentFamily::NormalEqualVariance { variance }
            }
            (f, _) => f,
        }
    }
}
