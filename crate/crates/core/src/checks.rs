//! Numerical verifiers for inequalities and counterexamples about
//! likelihood-based mixture estimation.
//!
//! Every verifier returns a [`CheckReport`] whose `passed` flag is a pure
//! function of `(statistic, comparison, threshold)`. When a side condition
//! fails (a floor, a monotonicity requirement, a pointwise bound), the
//! threshold is set to the infinity that makes the comparison fail, so the
//! flag stays recomputable.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{contract, domain, Result};
use crate::estimators::{em_fit, FitConfig, FitMode};
use crate::model::{
    cdf_window_sup, log_likelihood, sample_mixture, ComponentFamily, MixingDistribution, ParamPoint, PreparedMixture,
    Sample,
};
use crate::numeric::{derive_seed, log_sum_exp, mean_and_se, serde_float, CompensatedSum};
use crate::quadrature::{integrate_to_infinity, QuadOptions};

/// Minimum Monte Carlo size for the expectation checks.
pub const MIN_MC_N: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `statistic ≤ threshold`.
    AtMost,
    /// `statistic ≥ threshold`.
    AtLeast,
}

impl Comparison {
    pub fn holds(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => statistic <= threshold,
            Comparison::AtLeast => statistic >= threshold,
        }
    }

    /// Threshold that fails every statistic.
    fn failing(self) -> f64 {
        match self {
            Comparison::AtMost => f64::NEG_INFINITY,
            Comparison::AtLeast => f64::INFINITY,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    #[serde(with = "serde_float")]
    pub statistic: f64,
    pub comparison: Comparison,
    #[serde(with = "serde_float")]
    pub threshold: f64,
    #[serde(default, with = "serde_float::option", skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<f64>,
    pub details: String,
}

impl CheckReport {
    pub fn new(
        name: impl Into<String>,
        statistic: f64,
        comparison: Comparison,
        threshold: f64,
        standard_error: Option<f64>,
        details: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            passed: comparison.holds(statistic, threshold),
            statistic,
            comparison,
            threshold,
            standard_error,
            details: details.into(),
        }
    }

    /// Whether `passed` agrees with `(statistic, comparison, threshold)`.
    pub fn is_consistent(&self) -> bool {
        self.passed == self.comparison.holds(self.statistic, self.threshold)
    }

    /// One human-readable line: verdict, statistic, comparison, threshold.
    pub fn summary_line(&self) -> String {
        let se = self
            .standard_error
            .map(|s| format!(" (se {s:.3e})"))
            .unwrap_or_default();
        format!(
            "{} {}: statistic {:.6e}{} {} threshold {:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            se,
            self.comparison.symbol(),
            self.threshold
        )
    }
}

fn mc_sample(family: ComponentFamily, g_star: &MixingDistribution, mc_n: usize, seed: u64) -> Result<Sample> {
    if mc_n < MIN_MC_N {
        return Err(contract(format!("mc_n must be at least {MIN_MC_N}, got {mc_n}")));
    }
    sample_mixture(family, g_star, mc_n, seed)
}

/// Per-observation `log f(x; G_alt) − log f(x; G*)` under `X ~ f(·; G*)`.
fn log_ratios(
    family: ComponentFamily,
    g_star: &MixingDistribution,
    g_alt: &MixingDistribution,
    sample: &Sample,
) -> Result<Vec<f64>> {
    g_alt.check_family(family)?;
    let mut star = PreparedMixture::new(family, g_star)?;
    let mut alt = PreparedMixture::new(family, g_alt)?;
    Ok(sample
        .values()
        .iter()
        .map(|&x| alt.log_density(x) - star.log_density(x))
        .collect())
}

/// Monte Carlo check of `E* log{f(X; G_alt)/f(X; G*)} ≤ 0`.
///
/// Both distributions are canonicalized first, so relabelings of the same
/// mixture give exactly zero.
pub fn check_jensen_kl(
    family: ComponentFamily,
    g_star: &MixingDistribution,
    g_alt: &MixingDistribution,
    mc_n: usize,
    seed: u64,
) -> Result<CheckReport> {
    let g_star = g_star.canonicalize();
    let g_alt = g_alt.canonicalize();
    let sample = mc_sample(family, &g_star, mc_n, seed)?;
    let summands = log_ratios(family, &g_star, &g_alt, &sample)?;
    let (estimate, se) = if summands.contains(&f64::NEG_INFINITY) {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        mean_and_se(&summands)
    };
    Ok(CheckReport::new(
        "jensen_kl",
        estimate,
        Comparison::AtMost,
        3.0 * se,
        Some(se),
        format!("E* log f(X;G_alt)/f(X;G*) over {mc_n} draws (seed {seed}); passes at <= 3 se"),
    ))
}

/// `log{1 + u(e^d − 1)}` for a log density ratio `d`, exact zero at `d = 0`.
fn pfanzagl_summand(u: f64, d: f64) -> f64 {
    if d == f64::NEG_INFINITY {
        (-u).ln_1p()
    } else if d < 30.0 {
        (u * d.exp_m1()).ln_1p()
    } else {
        log_sum_exp(&[(-u).ln_1p(), u.ln() + d])
    }
}

/// Monte Carlo check of `E* log{1 + u[f*(X)/f(X) − 1]} ≥ 0` with
/// `f* = f(·; G*)` and `f = f(·; G_alt)`. Also verifies every summand is at
/// least `log(1 − u)`.
pub fn check_pfanzagl(
    family: ComponentFamily,
    g_star: &MixingDistribution,
    g_alt: &MixingDistribution,
    u: f64,
    mc_n: usize,
    seed: u64,
) -> Result<CheckReport> {
    if !(u > 0.0 && u < 1.0) {
        return Err(contract(format!("u must lie in (0, 1), got {u}")));
    }
    let g_star = g_star.canonicalize();
    let g_alt = g_alt.canonicalize();
    let sample = mc_sample(family, &g_star, mc_n, seed)?;
    // d = log f* − log f, the negation of the Jensen summand.
    let summands: Vec<f64> = log_ratios(family, &g_star, &g_alt, &sample)?
        .into_iter()
        .map(|r| pfanzagl_summand(u, -r))
        .collect();
    let floor = (-u).ln_1p();
    let below = summands.iter().filter(|&&s| !(s >= floor)).count();
    let (estimate, se) = mean_and_se(&summands);
    let threshold = if below == 0 {
        -3.0 * se
    } else {
        Comparison::AtLeast.failing()
    };
    Ok(CheckReport::new(
        "pfanzagl",
        estimate,
        Comparison::AtLeast,
        threshold,
        Some(se),
        format!(
            "u = {u}; {mc_n} draws (seed {seed}); {below} summands below log(1-u) = {floor:.6e}; passes at >= -3 se"
        ),
    ))
}

/// Fraction of replications per `n` in which `θ*` maximizes `ℓₙ` over the
/// candidates. A tie among `k` maximizers containing `θ*` counts `1/k`.
pub fn finite_grid_selection_fractions(
    family: ComponentFamily,
    theta_star: ParamPoint,
    candidates: &[ParamPoint],
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    family.check_atom(&theta_star)?;
    let star_idx = candidates
        .iter()
        .position(|c| *c == theta_star)
        .ok_or_else(|| contract("theta_star must be one of the candidates"))?;
    for (i, a) in candidates.iter().enumerate() {
        family.check_atom(a)?;
        if candidates[..i].contains(a) {
            return Err(contract(format!("duplicate candidate {a:?}")));
        }
    }
    if reps == 0 || n_grid.is_empty() || n_grid.contains(&0) {
        return Err(contract("reps and every n must be positive, n_grid nonempty"));
    }
    let g_star = MixingDistribution::point(theta_star);
    let points: Vec<MixingDistribution> = candidates.iter().map(|&c| MixingDistribution::point(c)).collect();
    n_grid
        .iter()
        .map(|&n| {
            let mut credit = 0.0;
            for rep in 0..reps {
                let s = sample_mixture(family, &g_star, n, derive_seed(seed, &[n as u64, rep as u64]))?;
                let lls = points
                    .iter()
                    .map(|g| log_likelihood(family, g, &s))
                    .collect::<Result<Vec<_>>>()?;
                let best = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lls[star_idx] == best {
                    credit += 1.0 / lls.iter().filter(|&&l| l == best).count() as f64;
                }
            }
            Ok(credit / reps as f64)
        })
        .collect()
}

/// MLE over a finite candidate set selects `θ*` with frequency reaching
/// 0.99 at the largest `n`, nondecreasing in `n` up to one inversion.
pub fn finite_grid_mle_demo(
    family: ComponentFamily,
    theta_star: ParamPoint,
    candidates: &[ParamPoint],
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<CheckReport> {
    let fractions = finite_grid_selection_fractions(family, theta_star, candidates, n_grid, reps, seed)?;
    let inversions = fractions.windows(2).filter(|w| w[1] < w[0]).count();
    let last = *fractions.last().expect("n_grid nonempty");
    let threshold = if inversions <= 1 {
        0.99
    } else {
        Comparison::AtLeast.failing()
    };
    let table: Vec<String> = n_grid
        .iter()
        .zip(&fractions)
        .map(|(n, f)| format!("n={n}: {f:.4}"))
        .collect();
    Ok(CheckReport::new(
        "finite_grid_mle",
        last,
        Comparison::AtLeast,
        threshold,
        None,
        format!(
            "selection fraction over {reps} reps [{}]; {inversions} inversion(s)",
            table.join(", ")
        ),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerateRow {
    pub k: f64,
    /// `ℓₙ(G_k)`.
    pub log_likelihood: f64,
    /// `log k − ½ Σ_{i≥2} xᵢ² − n log 2π`.
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerateSequence {
    pub rows: Vec<DegenerateRow>,
    /// `ℓₙ` at the two-component equal-variance MLE.
    pub reference_log_likelihood: f64,
}

/// `G_k = ½ N(0, 1) + ½ N(x₁, (1/(2k))²)` as a free-variance mixing
/// distribution.
pub fn degenerate_mixing(x1: f64, k: f64) -> Result<MixingDistribution> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(contract(format!("k must be positive and finite, got {k}")));
    }
    MixingDistribution::from_pairs(&[(0.0, 1.0), (x1, 0.5 / k)], &[0.5, 0.5])
}

/// Evaluates `ℓₙ(G_k)` and its lower bound for every `k`, plus the
/// equal-variance reference fit.
pub fn degenerate_sequence_table(sample: &Sample, k_list: &[f64]) -> Result<DegenerateSequence> {
    if k_list.is_empty() || k_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(contract("k_list must be nonempty and strictly increasing"));
    }
    let xs = sample.values();
    let tail_sq: f64 = xs[1..].iter().map(|x| x * x).collect::<CompensatedSum>().value();
    let n = xs.len() as f64;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let rows = k_list
        .iter()
        .map(|&k| {
            let g = degenerate_mixing(xs[0], k)?;
            Ok(DegenerateRow {
                k,
                log_likelihood: log_likelihood(ComponentFamily::NormalFreeVariance, &g, sample)?,
                lower_bound: k.ln() - 0.5 * tail_sq - n * ln_2pi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = FitConfig::new(
        ComponentFamily::NormalEqualVariance {
            variance: sample.variance().max(f64::MIN_POSITIVE),
        },
        2,
        FitMode::EqualVariance,
    );
    let reference = em_fit(&cfg, sample)?;
    Ok(DegenerateSequence {
        rows,
        reference_log_likelihood: reference.log_likelihood,
    })
}

/// The explicit sequence `G_k` drives `ℓₙ` to infinity: `ℓₙ(G_k)` obeys the
/// lower bound at every `k` and exceeds the equal-variance MLE's `ℓₙ` by at
/// least 100 at the largest `k`.
pub fn degenerate_sequence_demo(sample: &Sample, k_list: &[f64]) -> Result<CheckReport> {
    let table = degenerate_sequence_table(sample, k_list)?;
    let violations = table
        .rows
        .iter()
        .filter(|r| !(r.log_likelihood >= r.lower_bound))
        .count();
    let last = table.rows.last().expect("nonempty");
    let gap = last.log_likelihood - table.reference_log_likelihood;
    let threshold = if violations == 0 {
        100.0
    } else {
        Comparison::AtLeast.failing()
    };
    Ok(CheckReport::new(
        "degenerate_sequence",
        gap,
        Comparison::AtLeast,
        threshold,
        None,
        format!(
            "lower bound violated at {violations} of {} k values; l(G_k) at k = {:e} is {:.6e}, equal-variance MLE l = {:.6e}",
            table.rows.len(),
            last.k,
            last.log_likelihood,
            table.reference_log_likelihood
        ),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub eps: f64,
    /// `sup_θ {Fₙ(θ + ε) − Fₙ(θ)}`.
    pub window_sup: f64,
    /// `2Mε + 10 log(n)/n`.
    pub bound: f64,
}

pub fn concentration_table(density_sup: f64, sample: &Sample, eps_list: &[f64]) -> Result<Vec<ConcentrationRow>> {
    if !(density_sup > 0.0 && density_sup.is_finite()) {
        return Err(contract(format!(
            "density sup must be positive and finite, got {density_sup}"
        )));
    }
    if sample.len() < 20 {
        return Err(contract(format!(
            "concentration check needs n >= 20, got {}",
            sample.len()
        )));
    }
    let n = sample.len() as f64;
    let slack = 10.0 * n.ln() / n;
    let ecdf = sample.ecdf();
    eps_list
        .iter()
        .map(|&eps| {
            Ok(ConcentrationRow {
                eps,
                window_sup: cdf_window_sup(&ecdf, eps)?,
                bound: 2.0 * density_sup * eps + slack,
            })
        })
        .collect()
}

/// `sup_θ {Fₙ(θ+ε) − Fₙ(θ)} ≤ 2Mε + 10 log(n)/n` at every `ε`; the
/// statistic is the worst margin. The left side must also be monotone in
/// `ε`.
pub fn check_concentration(density_sup: f64, sample: &Sample, eps_list: &[f64]) -> Result<CheckReport> {
    if eps_list.is_empty() {
        return Err(contract("eps_list must be nonempty"));
    }
    let rows = concentration_table(density_sup, sample, eps_list)?;
    let worst = rows
        .iter()
        .map(|r| r.bound - r.window_sup)
        .fold(f64::INFINITY, f64::min);
    let mut by_eps: Vec<&ConcentrationRow> = rows.iter().collect();
    by_eps.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let monotone = by_eps.windows(2).all(|w| w[1].window_sup >= w[0].window_sup);
    let violations = rows.iter().filter(|r| r.window_sup > r.bound).count();
    Ok(CheckReport::new(
        "concentration",
        worst,
        Comparison::AtLeast,
        if monotone { 0.0 } else { Comparison::AtLeast.failing() },
        None,
        format!(
            "n = {}, M = {density_sup}; {violations} of {} eps values violate the bound; window sup monotone in eps: {monotone}",
            sample.len(),
            rows.len()
        ),
    ))
}

/// Truncation point of the heavy-tail series.
pub const HEAVY_TAIL_TRUNCATION: u64 = 10_000_000;
const HEAVY_TAIL_START: u64 = 20;
pub const HEAVY_TAIL_MAX_X: i64 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyTailRow {
    pub x: i64,
    /// `Σ_{20≤n≤N} (log n)^{x−1} / (n log log n)²`.
    pub partial_sum: f64,
    /// Upper bound on the series remainder beyond `N`.
    pub tail_bound: f64,
    /// `log{(partial_sum + tail_bound)/x!}`, an upper bound on `log f(x; G*)`.
    pub log_f_upper: f64,
    pub neg_log_x: f64,
    /// `∫_{log 20}^∞ u^{x−1} e^{−u} / (log u)² du`.
    pub integral: f64,
    pub integral_error: f64,
    /// `(x − 1)!`.
    pub factorial: f64,
    /// `1 − (integral + error)/(x − 1)!`.
    pub relative_margin: f64,
}

/// `Γ(x, a)` for a positive integer `x`: `(x−1)! e^{−a} Σ_{k<x} aᵏ/k!`.
fn upper_incomplete_gamma_int(x: i64, a: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..x {
        term *= a / k as f64;
        sum += term;
    }
    (ln_gamma(x as f64) - a).exp() * sum
}

/// Evaluates the heavy-tail Poisson mixture `f(x; G*)` (mass
/// `1/{n log n (log log n)²}` at `θ = log n`, `n ≥ 20`) for each `x`.
pub fn poisson_heavy_tail_table(x_list: &[i64]) -> Result<Vec<HeavyTailRow>> {
    if let Some(&bad) = x_list.iter().find(|&&x| !(1..=HEAVY_TAIL_MAX_X).contains(&x)) {
        return Err(domain(format!(
            "x = {bad} outside [1, {HEAVY_TAIL_MAX_X}]: the series peak lies beyond the feasible truncation"
        )));
    }
    let max_x = x_list.iter().copied().max().unwrap_or(1) as usize;
    // One pass over n accumulates every power of log n up to max_x − 1.
    let mut sums = vec![CompensatedSum::new(); max_x];
    for n in HEAVY_TAIL_START..=HEAVY_TAIL_TRUNCATION {
        let ln_n = (n as f64).ln();
        let lln = ln_n.ln();
        let mut term = 1.0 / ((n as f64) * lln).powi(2);
        for s in sums.iter_mut() {
            s.add(term);
            term *= ln_n;
        }
    }
    let ln_trunc = (HEAVY_TAIL_TRUNCATION as f64).ln();
    let ln_start = (HEAVY_TAIL_START as f64).ln();
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_intervals: 20_000,
    };
    Ok(x_list
        .iter()
        .map(|&x| {
            let xf = x as f64;
            let partial_sum = sums[(x - 1) as usize].value();
            // The summand is decreasing beyond N when x − 1 < 2 log N, so the
            // remainder is below ∫_N^∞, which in u = log t is
            // ∫_{log N}^∞ u^{x−1} e^{−u} / (log u)² du ≤ Γ(x, log N)/(log log N)².
            debug_assert!(xf - 1.0 < 2.0 * ln_trunc);
            let tail_bound = upper_incomplete_gamma_int(x, ln_trunc) / ln_trunc.ln().powi(2);
            let log_f_upper = (partial_sum + tail_bound).ln() - ln_gamma(xf + 1.0);
            let q = integrate_to_infinity(
                |u: f64| ((xf - 1.0) * u.ln() - u).exp() / u.ln().powi(2),
                ln_start,
                opts,
            );
            let factorial = ln_gamma(xf).exp();
            HeavyTailRow {
                x,
                partial_sum,
                tail_bound,
                log_f_upper,
                neg_log_x: -xf.ln(),
                integral: q.value,
                integral_error: q.abs_error,
                factorial,
                relative_margin: 1.0 - (q.value + q.abs_error) / factorial,
            }
        })
        .collect())
}

/// `log f(x; G*) ≤ −log x` for the heavy-tail Poisson mixture, and the
/// integral comparison `∫ u^{x−1}e^{−u}/(log u)² du ≤ (x−1)!`. The statistic
/// is `max_x {log f_upper(x) + log x}`.
pub fn poisson_heavy_tail_check(x_list: &[i64]) -> Result<CheckReport> {
    if x_list.is_empty() {
        return Err(contract("x_list must be nonempty"));
    }
    let rows = poisson_heavy_tail_table(x_list)?;
    let worst = rows
        .iter()
        .map(|r| r.log_f_upper - r.neg_log_x)
        .fold(f64::NEG_INFINITY, f64::max);
    let integral_failures = rows.iter().filter(|r| !(r.relative_margin >= 0.0)).count();
    let min_margin = rows.iter().map(|r| r.relative_margin).fold(f64::INFINITY, f64::min);
    Ok(CheckReport::new(
        "poisson_heavy_tail",
        worst,
        Comparison::AtMost,
        if integral_failures == 0 {
            0.0
        } else {
            Comparison::AtMost.failing()
        },
        None,
        format!(
            "{} x values; integral comparison fails at {integral_failures}; smallest relative margin {min_margin:.6e}",
            rows.len()
        ),
    ))
}

fn normal_log_pdf(x: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - x * x / (2.0 * variance)
}

/// `φ(x; 0, σ₁²) ≤ φ(x; 0, 2ε₀²)` for `|x| = σ₁ log(1/σ₁) + offset`; the
/// statistic is the largest log density ratio.
pub fn g_dominance_check(eps0: f64, sigma1_list: &[f64], x_offsets: &[f64]) -> Result<CheckReport> {
    if !(eps0 > 0.0 && eps0 <= 0.05) {
        return Err(contract(format!("eps0 must lie in (0, 0.05], got {eps0}")));
    }
    if sigma1_list.is_empty() || x_offsets.is_empty() {
        return Err(contract("sigma1_list and x_offsets must be nonempty"));
    }
    if let Some(s) = sigma1_list.iter().find(|&&s| !(s > 0.0 && s <= eps0)) {
        return Err(contract(format!("every sigma1 must lie in (0, eps0], got {s}")));
    }
    if let Some(o) = x_offsets.iter().find(|&&o| !(o >= 0.0 && o.is_finite())) {
        return Err(contract(format!("offsets must be finite and nonnegative, got {o}")));
    }
    let wide = 2.0 * eps0 * eps0;
    let mut worst = f64::NEG_INFINITY;
    let mut at = (0.0, 0.0);
    for &s in sigma1_list {
        for &o in x_offsets {
            let x = s * (1.0 / s).ln() + o;
            let r = normal_log_pdf(x, s * s) - normal_log_pdf(x, wide);
            if r > worst {
                worst = r;
                at = (s, x);
            }
        }
    }
    Ok(CheckReport::new(
        "g_dominance",
        worst,
        Comparison::AtMost,
        0.0,
        None,
        format!(
            "worst density ratio {:.6e} at sigma1 = {:e}, x = {:e} (eps0 = {eps0})",
            worst.exp(),
            at.0,
            at.1
        ),
    ))
}

/// Stabilization of the Monte Carlo mean of `|log f(X; G*)|` for a Poisson
/// mixture with bounded support: the relative change between the first half
/// and the full sample must be below 1%.
pub fn check_kl_finiteness_bounded_poisson(
    m_bound: f64,
    g_star: &MixingDistribution,
    mc_n: usize,
    seed: u64,
) -> Result<CheckReport> {
    if let Some(a) = g_star.atoms().iter().find(|a| !(a.mean <= m_bound)) {
        return Err(contract(format!("atom {} exceeds the bound M = {m_bound}", a.mean)));
    }
    let family = ComponentFamily::Poisson;
    let sample = mc_sample(family, g_star, mc_n, seed)?;
    let mut mix = PreparedMixture::new(family, g_star)?;
    let values: Vec<f64> = sample.values().iter().map(|&x| mix.log_density(x).abs()).collect();
    let (half, _) = mean_and_se(&values[..mc_n / 2]);
    let (full, se) = mean_and_se(&values);
    let change = ((full - half) / full).abs();
    Ok(CheckReport::new(
        "kl_finiteness_bounded_poisson",
        change,
        Comparison::AtMost,
        0.01,
        Some(se),
        format!(
            "E*|log f| estimate {full:.6e} at {mc_n} draws, {half:.6e} at {}",
            mc_n / 2
        ),
    ))
}

/// Observations fed to a sample-based check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Values(Vec<f64>),
    /// CSV file with a `value` column.
    Csv(PathBuf),
    Mixture {
        family: ComponentFamily,
        mixing: MixingDistribution,
        n: usize,
        seed: u64,
    },
    Uniform {
        low: f64,
        high: f64,
        n: usize,
        seed: u64,
    },
}

impl SampleSource {
    pub fn load(&self) -> Result<Sample> {
        match self {
            SampleSource::Values(v) => Sample::from_values(v.clone()),
            SampleSource::Csv(path) => crate::io::read_sample(path),
            SampleSource::Mixture {
                family,
                mixing,
                n,
                seed,
            } => sample_mixture(*family, mixing, *n, *seed),
            SampleSource::Uniform { low, high, n, seed } => {
                if *n == 0 {
                    return Err(contract("sample size must be at least 1"));
                }
                let dist = Uniform::new(*low, *high).map_err(|e| contract(format!("uniform({low}, {high}): {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Sample::new((0..*n).map(|_| dist.sample(&mut rng)).collect(), *seed)
            }
        }
    }
}

fn default_mc_n() -> usize {
    100_000
}

/// A named check with its parameters, as read from a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    JensenKl {
        family: ComponentFamily,
        g_star: MixingDistribution,
        g_alt: MixingDistribution,
        #[serde(default = "default_mc_n")]
        mc_n: usize,
        #[serde(default)]
        seed: u64,
    },
    Pfanzagl {
        family: ComponentFamily,
        g_star: MixingDistribution,
        g_alt: MixingDistribution,
        u: f64,
        #[serde(default = "default_mc_n")]
        mc_n: usize,
        #[serde(default)]
        seed: u64,
    },
    FiniteGridMle {
        family: ComponentFamily,
        theta_star: ParamPoint,
        candidates: Vec<ParamPoint>,
        n_grid: Vec<usize>,
        reps: usize,
        #[serde(default)]
        seed: u64,
    },
    DegenerateSequence {
        sample: SampleSource,
        k_list: Vec<f64>,
    },
    Concentration {
        density_sup: f64,
        sample: SampleSource,
        eps_list: Vec<f64>,
    },
    PoissonHeavyTail {
        x_list: Vec<i64>,
    },
    GDominance {
        eps0: f64,
        sigma1_list: Vec<f64>,
        x_offsets: Vec<f64>,
    },
    KlFinitenessBoundedPoisson {
        m_bound: f64,
        g_star: MixingDistribution,
        #[serde(default = "default_mc_n")]
        mc_n: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl CheckSpec {
    pub const NAMES: [&'static str; 8] = [
        "jensen_kl",
        "pfanzagl",
        "finite_grid_mle",
        "degenerate_sequence",
        "concentration",
        "poisson_heavy_tail",
        "g_dominance",
        "kl_finiteness_bounded_poisson",
    ];

    /// Builds a spec from a check name and its parameter object.
    pub fn from_parts(name: &str, params: serde_json::Value) -> Result<Self> {
        if !Self::NAMES.contains(&name) {
            return Err(contract(format!(
                "unknown check `{name}`; expected one of {}",
                Self::NAMES.join(", ")
            )));
        }
        let mut obj = match params {
            serde_json::Value::Object(m) => m,
            serde_json::Value::Null => serde_json::Map::new(),
            _ => return Err(contract("check parameters must be a JSON object")),
        };
        obj.insert("name".into(), serde_json::Value::String(name.into()));
        Ok(serde_json::from_value(serde_json::Value::Object(obj))?)
    }
}

pub fn run_check(spec: &CheckSpec) -> Result<CheckReport> {
    match spec {
        CheckSpec::JensenKl {
            family,
            g_star,
            g_alt,
            mc_n,
            seed,
        } => check_jensen_kl(*family, g_star, g_alt, *mc_n, *seed),
        CheckSpec::Pfanzagl {
            family,
            g_star,
            g_alt,
            u,
            mc_n,
            seed,
        } => check_pfanzagl(*family, g_star, g_alt, *u, *mc_n, *seed),
        CheckSpec::FiniteGridMle {
            family,
            theta_star,
            candidates,
            n_grid,
            reps,
            seed,
        } => finite_grid_mle_demo(*family, *theta_star, candidates, n_grid, *reps, *seed),
        CheckSpec::DegenerateSequence { sample, k_list } => degenerate_sequence_demo(&sample.load()?, k_list),
        CheckSpec::Concentration {
            density_sup,
            sample,
            eps_list,
        } => check_concentration(*density_sup, &sample.load()?, eps_list),
        CheckSpec::PoissonHeavyTail { x_list } => poisson_heavy_tail_check(x_list),
        CheckSpec::GDominance {
            eps0,
            sigma1_list,
            x_offsets,
        } => g_dominance_check(*eps0, sigma1_list, x_offsets),
        CheckSpec::KlFinitenessBoundedPoisson {
            m_bound,
            g_star,
            mc_n,
            seed,
        } => check_kl_finiteness_bounded_poisson(*m_bound, g_star, *mc_n, *seed),
    }
}
