//! Mixture-model estimation laboratory.
//!
//! * [`model`]: mixing distributions (including sub-distributions), component
//!   families, log-space mixture densities, sampling, empirical c.d.f.s.
//! * [`metrics`]: exact Kiefer-Wolfowitz distance in one and two dimensions.
//! * [`penalty`]: the additive variance penalty and its property validator.
//! * [`estimators`]: EM for finite mixtures (plain, penalized, σ-constrained,
//!   equal-variance) and the grid NPMLE with gradient certificate.
//! * [`checks`]: numerical verifiers for inequalities and counterexamples
//!   about likelihood-based mixture estimation.
//! * [`experiments`]: reproducible consistency and degeneracy simulations.

#![forbid(unsafe_code)]
// `!(x >= y)` is used on purpose so that NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod penalty;
pub mod quadrature;

pub use checks::{
    check_concentration, check_jensen_kl, check_kl_finiteness_bounded_poisson, check_pfanzagl,
    degenerate_sequence_demo, finite_grid_mle_demo, g_dominance_check, poisson_heavy_tail_check, run_check,
    CheckReport, CheckSpec, Comparison,
};
pub use error::{MixError, Result};
pub use estimators::{
    e_step, em_fit, em_fit_from, m_step, npmle_fit, FitConfig, FitMode, FitReport, GridSpec, NpmleResult, ScaleAnchor,
    UpdateRule,
};
pub use metrics::{kw_distance, KwDim, KwDistanceResult};
pub use model::{
    canonicalize, cdf_window_sup, component_density, component_log_density, log_likelihood, mixture_density,
    mixture_log_density, sample_mixture, ComponentFamily, EmpiricalCdf, MixingDistribution, ParamPoint, Provenance,
    Sample,
};
pub use penalty::{
    penalty_component, penalty_total, validate_penalty_properties, PenaltyConfig, PenaltyForm, PenaltyValidation,
};
