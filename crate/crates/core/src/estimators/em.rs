use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{FitConfig, FitMode, FitReport, RestartSummary, UpdateRule};
use crate::error::{contract, MixError, Result};
use crate::model::{ComponentFamily, MixingDistribution, ParamPoint, Sample};
use crate::numeric::{derive_seed, log_sum_exp, quantile_sorted, CompensatedSum};

/// Responsibility mass below which a component counts as dead.
const DEATH_MASS: f64 = 1e-10;

/// Row-major `n × m` matrix of posterior component memberships.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    fn column_mass(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).collect::<CompensatedSum>().value()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variances {
    /// Poisson components.
    None,
    /// One variance for every component.
    Shared(f64),
    PerComponent(Vec<f64>),
}

/// Flat parameter vector manipulated by EM.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Variances,
}

impl MixtureParams {
    pub fn m(&self) -> usize {
        self.weights.len()
    }

    /// `(family, G)` pair whose mixture density these parameters describe.
    pub fn to_model(&self, family: ComponentFamily) -> Result<(ComponentFamily, MixingDistribution)> {
        let total: f64 = self.weights.iter().sum();
        let weights: Vec<f64> = self.weights.iter().map(|w| w / total).collect();
        let (family, atoms) = match (&self.variances, family) {
            (Variances::None, ComponentFamily::Poisson) => {
                (family, self.means.iter().map(|&m| ParamPoint::location(m)).collect())
            }
            (Variances::Shared(v), ComponentFamily::NormalEqualVariance { .. }) => (
                ComponentFamily::NormalEqualVariance { variance: *v },
                self.means.iter().map(|&m| ParamPoint::location(m)).collect(),
            ),
            (Variances::PerComponent(vs), ComponentFamily::NormalFreeVariance) => (
                family,
                self.means
                    .iter()
                    .zip(vs)
                    .map(|(&m, &v)| ParamPoint::with_scale(m, v.sqrt()))
                    .collect(),
            ),
            _ => return Err(contract("parameter layout does not match the family")),
        };
        let g = MixingDistribution::new(atoms, weights)?;
        g.check_family(family)?;
        Ok((family, g))
    }

    fn from_model(family: ComponentFamily, g: &MixingDistribution) -> Result<Self> {
        g.check_family(family)?;
        let total = g.mass();
        let weights = g.weights().iter().map(|w| w / total).collect();
        let means = g.atoms().iter().map(|a| a.mean).collect();
        let variances = match family {
            ComponentFamily::Poisson => Variances::None,
            ComponentFamily::NormalEqualVariance { variance } => Variances::Shared(variance),
            ComponentFamily::NormalFreeVariance => Variances::PerComponent(
                g.atoms()
                    .iter()
                    .map(|a| a.scale.map(|s| s * s).unwrap_or(f64::NAN))
                    .collect(),
            ),
        };
        Ok(Self {
            weights,
            means,
            variances,
        })
    }
}

fn e_step_inner(family: ComponentFamily, g: &MixingDistribution, sample: &Sample) -> Result<(Responsibilities, f64)> {
    let terms = g.kernels(family)?;
    let m = terms.len();
    let n = sample.len();
    let mut data = vec![0.0; n * m];
    let mut ll = CompensatedSum::new();
    let mut buf = vec![0.0; m];
    for (i, &x) in sample.values().iter().enumerate() {
        for (b, (lw, k)) in buf.iter_mut().zip(&terms) {
            *b = lw + k.log_density(x);
        }
        let lse = log_sum_exp(&buf);
        if lse == f64::NEG_INFINITY || lse.is_nan() {
            return Err(MixError::DegenerateInput { index: i, value: x });
        }
        ll.add(lse);
        for (d, &b) in data[i * m..(i + 1) * m].iter_mut().zip(&buf) {
            *d = (b - lse).exp();
        }
    }
    Ok((Responsibilities { n, m, data }, ll.value()))
}

/// Posterior probabilities `w_ij = αⱼ f(xᵢ; θⱼ) / f(xᵢ; G)`.
pub fn e_step(family: ComponentFamily, g: &MixingDistribution, sample: &Sample) -> Result<Responsibilities> {
    sample.check_family(family)?;
    e_step_inner(family, g, sample).map(|(r, _)| r)
}

/// Closed-form maximizer of the expected complete-data objective.
///
/// Collapse of a component onto the data (updated `σ² = 0`, reachable in the
/// plain and negative-control modes) is reported as
/// [`MixError::FitFailure`]; [`em_fit`] turns it into a degenerate report.
pub fn m_step(
    family: ComponentFamily,
    rule: &UpdateRule,
    resp: &Responsibilities,
    sample: &Sample,
) -> Result<MixtureParams> {
    if resp.n() != sample.len() {
        return Err(contract(format!(
            "responsibilities have {} rows for {} observations",
            resp.n(),
            sample.len()
        )));
    }
    let n = sample.len();
    let nf = n as f64;
    let xs = sample.values();
    let m = resp.m();
    let mut weights = Vec::with_capacity(m);
    let mut means = Vec::with_capacity(m);
    let mut masses = Vec::with_capacity(m);
    let mut sums_sq = Vec::with_capacity(m);
    for j in 0..m {
        let s = resp.column_mass(j);
        if !(s >= DEATH_MASS) {
            return Err(MixError::ComponentDeath { component: j, mass: s });
        }
        let mean = (0..n)
            .map(|i| resp.get(i, j) * xs[i])
            .collect::<CompensatedSum>()
            .value()
            / s;
        let ss = (0..n)
            .map(|i| resp.get(i, j) * (xs[i] - mean).powi(2))
            .collect::<CompensatedSum>()
            .value();
        weights.push(s / nf);
        means.push(mean);
        masses.push(s);
        sums_sq.push(ss);
    }
    let collapse = |j: usize| {
        MixError::FitFailure(format!(
            "component {j} collapsed onto the data (σ² = 0): likelihood unbounded"
        ))
    };
    let variances = match family {
        ComponentFamily::Poisson => {
            if *rule != UpdateRule::Plain {
                return Err(contract("poisson components support only the plain mode"));
            }
            Variances::None
        }
        ComponentFamily::NormalEqualVariance { variance } => match rule {
            UpdateRule::Plain => Variances::Shared(variance),
            UpdateRule::EqualVariance => {
                let v = sums_sq.iter().copied().collect::<CompensatedSum>().value() / nf;
                if !(v > 0.0) {
                    return Err(collapse(0));
                }
                Variances::Shared(v)
            }
            _ => return Err(contract("equal-variance family supports plain or equal_variance modes")),
        },
        ComponentFamily::NormalFreeVariance => {
            let mut vs = Vec::with_capacity(m);
            for j in 0..m {
                let (s, ss) = (masses[j], sums_sq[j]);
                let v = match rule {
                    UpdateRule::Plain => ss / s,
                    UpdateRule::Penalized(cfg) => cfg.variance_update(n, s, ss),
                    UpdateRule::Constrained { sigma_floor } => (ss / s).max(sigma_floor * sigma_floor),
                    UpdateRule::EqualVariance => {
                        return Err(contract("equal_variance mode needs the equal-variance family"))
                    }
                };
                if !(v > 0.0) || !v.is_finite() {
                    return Err(collapse(j));
                }
                vs.push(v);
            }
            Variances::PerComponent(vs)
        }
    };
    Ok(MixtureParams {
        weights,
        means,
        variances,
    })
}

fn penalty_of(rule: &UpdateRule, n: usize, params: &MixtureParams) -> f64 {
    match (rule, &params.variances) {
        (UpdateRule::Penalized(cfg), Variances::PerComponent(vs)) => vs.iter().map(|&v| cfg.of_variance(n, v)).sum(),
        _ => 0.0,
    }
}

struct RunOutcome {
    params: MixtureParams,
    log_likelihood: f64,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
    degenerate: bool,
}

impl RunOutcome {
    fn objective(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial objective")
    }
}

fn run_em(cfg: &FitConfig, rule: &UpdateRule, sample: &Sample, init: MixtureParams) -> Result<RunOutcome> {
    let n = sample.len();
    let (fam, g) = init.to_model(cfg.family)?;
    let (mut resp, mut ll) = e_step_inner(fam, &g, sample)?;
    let mut params = init;
    let mut objective = ll + penalty_of(rule, n, &params);
    let mut trace = vec![objective];
    let mut converged = false;
    let mut degenerate = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let next = match m_step(cfg.family, rule, &resp, sample) {
            Ok(p) => p,
            Err(MixError::FitFailure(_)) => {
                degenerate = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let (fam, g) = next.to_model(cfg.family)?;
        let (next_resp, next_ll) = e_step_inner(fam, &g, sample)?;
        let next_objective = next_ll + penalty_of(rule, n, &next);
        if !next_objective.is_finite() {
            degenerate = true;
            break;
        }
        trace.push(next_objective);
        let gain = next_objective - objective;
        params = next;
        resp = next_resp;
        ll = next_ll;
        objective = next_objective;
        if gain < cfg.tol {
            converged = true;
            break;
        }
    }
    if degenerate {
        trace.push(f64::INFINITY);
        ll = f64::INFINITY;
    }
    Ok(RunOutcome {
        params,
        log_likelihood: ll,
        trace,
        converged,
        iterations,
        degenerate,
    })
}

fn initial_params(cfg: &FitConfig, sample: &Sample, restart: usize) -> MixtureParams {
    let m = cfg.m;
    let sorted = sample.sorted_values();
    let s2 = sample.variance();
    let sd = s2.sqrt();
    let mut means: Vec<f64> = (0..m)
        .map(|j| quantile_sorted(&sorted, (j as f64 + 0.5) / m as f64))
        .collect();
    if restart > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[restart as u64]));
        for mu in &mut means {
            let z: f64 = StandardNormal.sample(&mut rng);
            *mu += sd * z;
        }
    }
    let variances = match cfg.family {
        ComponentFamily::Poisson => {
            let floor = 1e-3 * sample.mean().max(1.0);
            for mu in &mut means {
                *mu = mu.abs().max(floor);
            }
            Variances::None
        }
        ComponentFamily::NormalEqualVariance { variance } => match cfg.mode {
            FitMode::EqualVariance => Variances::Shared(s2),
            _ => Variances::Shared(variance),
        },
        ComponentFamily::NormalFreeVariance => {
            let v = match cfg.mode {
                FitMode::Constrained { sigma_floor } => s2.max(sigma_floor * sigma_floor),
                _ => s2,
            };
            Variances::PerComponent(vec![v; m])
        }
    };
    MixtureParams {
        weights: vec![1.0 / m as f64; m],
        means,
        variances,
    }
}

fn check_inputs(cfg: &FitConfig, sample: &Sample) -> Result<()> {
    cfg.validate()?;
    sample.check_family(cfg.family)?;
    let n = sample.len();
    if n < cfg.m {
        return Err(MixError::UnderDetermined { n, m: cfg.m });
    }
    if cfg.family.is_normal() {
        if n < 2 {
            return Err(MixError::UnderDetermined { n, m: cfg.m.max(2) });
        }
        if !(sample.variance() > 0.0) {
            return Err(contract("normal mixtures need a sample with positive variance"));
        }
    }
    Ok(())
}

fn build_report(
    cfg: &FitConfig,
    rule: &UpdateRule,
    sample: &Sample,
    run: RunOutcome,
    best: usize,
    restarts: Vec<RestartSummary>,
) -> Result<FitReport> {
    let (family, g) = run.params.to_model(cfg.family)?;
    let structural_variance = match family {
        ComponentFamily::NormalEqualVariance { variance } => Some(variance),
        _ => None,
    };
    let penalty = match rule {
        UpdateRule::Penalized(_) => Some(penalty_of(rule, sample.len(), &run.params)),
        _ => None,
    };
    let mut warnings = Vec::new();
    if cfg.family == ComponentFamily::NormalFreeVariance && cfg.mode == FitMode::Plain {
        warnings.push(
            "plain likelihood of a free-variance normal mixture is unbounded; \
             the reported estimate is a local maximum at best"
                .to_string(),
        );
    }
    if run.degenerate {
        warnings.push("a component collapsed onto the data: the likelihood diverges along this path".to_string());
    }
    if !run.converged && !run.degenerate {
        warnings.push(format!("stopped at max_iter = {} before convergence", cfg.max_iter));
    }
    Ok(FitReport {
        family: cfg.family,
        mode: cfg.mode,
        estimate: g.canonicalize(),
        structural_variance,
        objective: run.objective(),
        log_likelihood: run.log_likelihood,
        penalty,
        converged: run.converged,
        iterations: run.iterations,
        objective_trace: run.trace,
        best_of_restarts: best,
        restarts,
        degenerate: run.degenerate,
        warnings,
    })
}

/// Fits a finite mixture by EM, keeping the best of `cfg.restarts`
/// initializations. Deterministic given `(cfg.seed, sample)`.
pub fn em_fit(cfg: &FitConfig, sample: &Sample) -> Result<FitReport> {
    check_inputs(cfg, sample)?;
    let rule = cfg.mode.resolve(sample)?;
    let mut summaries = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(usize, RunOutcome, MixingDistribution)> = None;
    for r in 0..cfg.restarts {
        let init = initial_params(cfg, sample, r);
        match run_em(cfg, &rule, sample, init) {
            Ok(run) => {
                summaries.push(RestartSummary {
                    index: r,
                    final_objective: Some(run.objective()),
                    iterations: run.iterations,
                    converged: run.converged,
                    failure: None,
                });
                let estimate = run.params.to_model(cfg.family)?.1.canonicalize();
                let better = match &best {
                    None => true,
                    Some((_, b, b_est)) => match run.objective().total_cmp(&b.objective()) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => estimate.canonical_cmp(b_est) == Ordering::Less,
                    },
                };
                if better {
                    best = Some((r, run, estimate));
                }
            }
            Err(e @ (MixError::ComponentDeath { .. } | MixError::DegenerateInput { .. })) => {
                summaries.push(RestartSummary {
                    index: r,
                    final_objective: None,
                    iterations: 0,
                    converged: false,
                    failure: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((index, run, _)) => build_report(cfg, &rule, sample, run, index, summaries),
        None => Err(MixError::FitFailure(format!(
            "all {} restarts failed: {}",
            cfg.restarts,
            summaries
                .iter()
                .filter_map(|s| s.failure.as_deref())
                .collect::<Vec<_>>()
                .join("; ")
        ))),
    }
}

/// Runs EM once from a caller-supplied starting point (`cfg.restarts` is
/// ignored). For the equal-variance family `family_init`'s structural
/// variance seeds the shared variance.
pub fn em_fit_from(
    cfg: &FitConfig,
    sample: &Sample,
    family_init: ComponentFamily,
    init: &MixingDistribution,
) -> Result<FitReport> {
    check_inputs(cfg, sample)?;
    if init.len() != cfg.m {
        return Err(contract(format!(
            "initial mixing distribution has {} atoms, config expects m = {}",
            init.len(),
            cfg.m
        )));
    }
    if std::mem::discriminant(&family_init) != std::mem::discriminant(&cfg.family) {
        return Err(contract("initial family differs from the configured family"));
    }
    let rule = cfg.mode.resolve(sample)?;
    let params = MixtureParams::from_model(family_init, init)?;
    let run = run_em(cfg, &rule, sample, params)?;
    let summary = RestartSummary {
        index: 0,
        final_objective: Some(run.objective()),
        iterations: run.iterations,
        converged: run.converged,
        failure: None,
    };
    build_report(cfg, &rule, sample, run, 0, vec![summary])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::ScaleAnchor;
    use crate::model::{log_likelihood, sample_mixture};
    use crate::penalty::{penalty_total, PenaltyConfig, PenaltyForm};

    fn two_normal_sample(n: usize, seed: u64) -> Sample {
        let g = MixingDistribution::from_pairs(&[(0.0, 1.0), (3.0, 1.0)], &[0.5, 0.5]).unwrap();
        sample_mixture(ComponentFamily::NormalFreeVariance, &g, n, seed).unwrap()
    }

    #[test]
    fn single_component_responsibilities_are_one() {
        let s = Sample::from_values(vec![0.1, 2.0, -3.0]).unwrap();
        let g = MixingDistribution::point(ParamPoint::with_scale(0.0, 1.0));
        let r = e_step(ComponentFamily::NormalFreeVariance, &g, &s).unwrap();
        assert!((0..3).all(|i| r.get(i, 0) == 1.0));
    }

    #[test]
    fn separated_components_claim_their_points() {
        let s = Sample::from_values(vec![0.0]).unwrap();
        let g = MixingDistribution::from_pairs(&[(0.0, 1.0), (10.0, 1.0)], &[0.5, 0.5]).unwrap();
        let r = e_step(ComponentFamily::NormalFreeVariance, &g, &s).unwrap();
        // Ratio of densities is exp(-50).
        assert!(r.get(0, 0) > 0.999);
        assert!((r.get(0, 0) - 1.0 / (1.0 + (-50f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn midpoint_of_symmetric_mixture_is_split_evenly() {
        let s = Sample::from_values(vec![1.5]).unwrap();
        let g = MixingDistribution::from_pairs(&[(0.0, 1.0), (3.0, 1.0)], &[0.5, 0.5]).unwrap();
        let r = e_step(ComponentFamily::NormalFreeVariance, &g, &s).unwrap();
        assert!((r.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((r.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_density_names_the_observation() {
        let s = Sample::from_values(vec![0.0, 0.0, 4.0]).unwrap();
        let g = MixingDistribution::point(ParamPoint::location(0.0));
        match e_step(ComponentFamily::Poisson, &g, &s) {
            Err(MixError::DegenerateInput { index, value }) => {
                assert_eq!(index, 2);
                assert_eq!(value, 4.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_component_equal_variance_is_normal_mle() {
        let s = two_normal_sample(200, 5);
        let g = MixingDistribution::point(ParamPoint::location(0.0));
        let fam = ComponentFamily::NormalEqualVariance { variance: 1.0 };
        let r = e_step(fam, &g, &s).unwrap();
        let p = m_step(fam, &UpdateRule::EqualVariance, &r, &s).unwrap();
        assert!((p.means[0] - s.mean()).abs() < 1e-12);
        match p.variances {
            Variances::Shared(v) => assert!((v - s.variance()).abs() < 1e-12),
            _ => panic!(),
        }
    }

    #[test]
    fn penalized_update_with_zero_spread_stays_positive() {
        let s = Sample::from_values(vec![2.0, 2.0, 2.0, 2.0]).unwrap();
        let g = MixingDistribution::point(ParamPoint::with_scale(2.0, 1.0));
        let fam = ComponentFamily::NormalFreeVariance;
        let r = e_step(fam, &g, &s).unwrap();
        let rule = UpdateRule::Penalized(PenaltyConfig::raw());
        let p = m_step(fam, &rule, &r, &s).unwrap();
        match p.variances {
            Variances::PerComponent(v) => assert!((v[0] - 0.5 / 4.5).abs() < 1e-15),
            _ => panic!(),
        }
        assert!(matches!(
            m_step(fam, &UpdateRule::Plain, &r, &s),
            Err(MixError::FitFailure(_))
        ));
    }

    #[test]
    fn constrained_update_respects_floor() {
        let s = Sample::from_values(vec![1.0, 1.01, 0.99, 1.0]).unwrap();
        let g = MixingDistribution::point(ParamPoint::with_scale(1.0, 1.0));
        let fam = ComponentFamily::NormalFreeVariance;
        let r = e_step(fam, &g, &s).unwrap();
        let p = m_step(fam, &UpdateRule::Constrained { sigma_floor: 0.5 }, &r, &s).unwrap();
        assert_eq!(p.variances, Variances::PerComponent(vec![0.25]));
    }

    #[test]
    fn under_determined_fit_rejected() {
        let s = Sample::from_values(vec![1.0, 2.0]).unwrap();
        let cfg = FitConfig::new(ComponentFamily::NormalFreeVariance, 3, FitMode::penalized());
        assert!(matches!(
            em_fit(&cfg, &s),
            Err(MixError::UnderDetermined { n: 2, m: 3 })
        ));
    }

    #[test]
    fn mode_family_mismatch_rejected() {
        let s = Sample::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        let cfg = FitConfig::new(ComponentFamily::Poisson, 1, FitMode::penalized());
        assert!(matches!(em_fit(&cfg, &s), Err(MixError::Contract(_))));
        let cfg = FitConfig::new(ComponentFamily::NormalFreeVariance, 1, FitMode::EqualVariance);
        assert!(matches!(em_fit(&cfg, &s), Err(MixError::Contract(_))));
    }

    #[test]
    fn equal_variance_fit_beats_single_component_baseline() {
        let s = two_normal_sample(1000, 17);
        let cfg = FitConfig::new(
            ComponentFamily::NormalEqualVariance { variance: 1.0 },
            2,
            FitMode::EqualVariance,
        )
        .with_seed(3);
        let rep = em_fit(&cfg, &s).unwrap();
        assert!(rep.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let base = log_likelihood(
            ComponentFamily::NormalEqualVariance { variance: s.variance() },
            &MixingDistribution::point(ParamPoint::location(s.mean())),
            &s,
        )
        .unwrap();
        assert!(rep.objective >= base);
        assert!(rep.converged);
        let v = rep.structural_variance.unwrap();
        assert!(v > 1e-4 * s.variance() && v < 10.0 * s.variance());
        let means: Vec<f64> = rep.estimate.atoms().iter().map(|a| a.mean).collect();
        assert!(
            (means[0] - 0.0).abs() < 0.3 && (means[1] - 3.0).abs() < 0.3,
            "{means:?}"
        );
    }

    #[test]
    fn penalized_objective_is_likelihood_plus_penalty() {
        let s = two_normal_sample(300, 23);
        let cfg = FitConfig::new(ComponentFamily::NormalFreeVariance, 2, FitMode::penalized()).with_seed(1);
        let rep = em_fit(&cfg, &s).unwrap();
        let ll = log_likelihood(ComponentFamily::NormalFreeVariance, &rep.estimate, &s).unwrap();
        let pen = penalty_total(&PenaltyConfig::for_sample(&s).unwrap(), s.len(), &rep.estimate).unwrap();
        assert!((rep.log_likelihood - ll).abs() < 1e-8);
        assert!((rep.penalty.unwrap() - pen).abs() < 1e-12);
        assert!((rep.objective - (ll + pen)).abs() < 1e-8);
        assert!(rep.objective <= rep.log_likelihood);
    }

    #[test]
    fn fit_is_deterministic() {
        let s = two_normal_sample(150, 2);
        let cfg = FitConfig::new(ComponentFamily::NormalFreeVariance, 2, FitMode::penalized()).with_seed(99);
        assert_eq!(em_fit(&cfg, &s).unwrap(), em_fit(&cfg, &s).unwrap());
    }

    #[test]
    fn plain_fit_seeded_at_degenerate_point_diverges() {
        let s = two_normal_sample(100, 8);
        let x1 = s.values()[0];
        let fam = ComponentFamily::NormalFreeVariance;
        let init = MixingDistribution::from_pairs(&[(x1, 1e-8), (s.mean(), s.variance().sqrt())], &[0.5, 0.5]).unwrap();
        let plain = FitConfig::new(fam, 2, FitMode::Plain);
        let rep = em_fit_from(&plain, &s, fam, &init).unwrap();
        assert!(rep.degenerate);
        assert!(!rep.warnings.is_empty());
        let pen = em_fit(&FitConfig::new(fam, 2, FitMode::penalized()), &s).unwrap();
        assert!(rep.objective > pen.objective + 1e3);
    }

    #[test]
    fn poisson_fit_recovers_rates() {
        let g = MixingDistribution::from_locations(&[1.0, 8.0], &[0.4, 0.6]).unwrap();
        let s = sample_mixture(ComponentFamily::Poisson, &g, 2000, 4).unwrap();
        let rep = em_fit(&FitConfig::new(ComponentFamily::Poisson, 2, FitMode::Plain), &s).unwrap();
        let rates: Vec<f64> = rep.estimate.atoms().iter().map(|a| a.mean).collect();
        assert!(
            (rates[0] - 1.0).abs() < 0.3 && (rates[1] - 8.0).abs() < 0.4,
            "{rates:?}"
        );
        assert!(rep.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn fixed_anchor_mode_serializes() {
        let mode = FitMode::Penalized {
            anchor: ScaleAnchor::Fixed(1.0),
            form: PenaltyForm::Standard,
        };
        let text = serde_json::to_string(&mode).unwrap();
        assert_eq!(serde_json::from_str::<FitMode>(&text).unwrap(), mode);
        let default: FitMode = serde_json::from_str(r#"{"kind":"penalized"}"#).unwrap();
        assert_eq!(default, FitMode::penalized());
    }
}
