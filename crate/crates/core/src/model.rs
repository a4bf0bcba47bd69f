//! Mixing distributions, component families, mixture densities and samples.
//!
//! A finite mixing distribution `G = Σ αⱼ δ_{θⱼ}` carries its total mass
//! `ρ = Σ αⱼ ≤ 1`, so sub-distributions (`ρ < 1`) are ordinary values of the
//! same type. All density arithmetic goes through log space; mixture
//! log-densities use the max-shift log-sum-exp reduction, which keeps
//! components with standard deviations down to `1e-150` and below finite.

use std::cmp::Ordering;

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{contract, domain, MixError, Result};
use crate::numeric::{log_sum_exp, CompensatedSum};

/// `ln √(2π)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const MASS_TOLERANCE: f64 = 1e-12;
const INTEGER_TOLERANCE: f64 = 1e-9;

/// A support point of a mixing distribution.
///
/// `mean` holds the Poisson rate or the normal location. `scale` is the
/// component standard deviation and is present only for free-variance normal
/// atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl ParamPoint {
    pub fn location(mean: f64) -> Self {
        Self { mean, scale: None }
    }

    pub fn with_scale(mean: f64, scale: f64) -> Self {
        Self {
            mean,
            scale: Some(scale),
        }
    }

    /// Canonical total order: ascending mean, then ascending scale (absent first).
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.mean
            .total_cmp(&other.mean)
            .then_with(|| match (self.scale, other.scale) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(a), Some(b)) => a.total_cmp(&b),
            })
    }

    fn bitwise_eq(&self, other: &Self) -> bool {
        self.mean.to_bits() == other.mean.to_bits() && self.scale.map(f64::to_bits) == other.scale.map(f64::to_bits)
    }
}

/// The parametric kernel being mixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentFamily {
    Poisson,
    /// Normal components sharing one structural variance `σ²`.
    NormalEqualVariance {
        variance: f64,
    },
    /// Normal components, each with its own standard deviation.
    NormalFreeVariance,
}

impl ComponentFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ComponentFamily::NormalEqualVariance { variance } if !(variance > 0.0 && variance.is_finite()) => {
                Err(contract(format!(
                    "structural variance must be positive and finite, got {variance}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn is_normal(&self) -> bool {
        !matches!(self, ComponentFamily::Poisson)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ComponentFamily::Poisson => "poisson",
            ComponentFamily::NormalEqualVariance { .. } => "normal_equal_variance",
            ComponentFamily::NormalFreeVariance => "normal_free_variance",
        }
    }

    /// Checks that `atom` is a legal support point for this family.
    pub fn check_atom(&self, atom: &ParamPoint) -> Result<()> {
        self.validate()?;
        if !atom.mean.is_finite() {
            return Err(contract(format!("atom mean must be finite, got {}", atom.mean)));
        }
        match (self, atom.scale) {
            (ComponentFamily::Poisson, None) if atom.mean >= 0.0 => Ok(()),
            (ComponentFamily::Poisson, None) => {
                Err(contract(format!("poisson rate must be nonnegative, got {}", atom.mean)))
            }
            (ComponentFamily::NormalEqualVariance { .. }, None) => Ok(()),
            (ComponentFamily::NormalFreeVariance, Some(s)) if s > 0.0 && s.is_finite() => Ok(()),
            (ComponentFamily::NormalFreeVariance, Some(s)) => Err(contract(format!(
                "component standard deviation must be positive and finite, got {s}"
            ))),
            (ComponentFamily::NormalFreeVariance, None) => Err(contract("free-variance normal atoms require a scale")),
            (family, Some(_)) => Err(contract(format!("{} atoms must not carry a scale", family.name()))),
        }
    }

    /// Checks that `x` lies in the support of the family's reference measure.
    pub fn check_observation(&self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(domain(format!("observation must be finite, got {x}")));
        }
        if matches!(self, ComponentFamily::Poisson)
            && (x < -INTEGER_TOLERANCE || (x - x.round()).abs() > INTEGER_TOLERANCE)
        {
            return Err(domain(format!(
                "poisson observations must be nonnegative integers, got {x}"
            )));
        }
        Ok(())
    }

    pub(crate) fn kernel(&self, atom: &ParamPoint) -> Result<Kernel> {
        self.check_atom(atom)?;
        Ok(self.kernel_unchecked(atom))
    }

    pub(crate) fn kernel_unchecked(&self, atom: &ParamPoint) -> Kernel {
        match *self {
            ComponentFamily::Poisson => Kernel::Poisson {
                rate: atom.mean,
                ln_rate: atom.mean.ln(),
            },
            ComponentFamily::NormalEqualVariance { variance } => Kernel::normal(atom.mean, variance.sqrt()),
            ComponentFamily::NormalFreeVariance => Kernel::normal(atom.mean, atom.scale.unwrap_or(f64::NAN)),
        }
    }
}

/// A component density prepared for repeated evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Kernel {
    Poisson { rate: f64, ln_rate: f64 },
    Normal { mean: f64, ln_sd: f64, inv_two_var: f64 },
}

impl Kernel {
    fn normal(mean: f64, sd: f64) -> Self {
        // 1/(2σ²) is formed from σ⁻¹ to stay finite for σ down to ~1e-154
        // and to overflow gracefully to +inf below that.
        let inv_sd = 1.0 / sd;
        Kernel::Normal {
            mean,
            ln_sd: sd.ln(),
            inv_two_var: 0.5 * inv_sd * inv_sd,
        }
    }

    /// Log density at an already validated observation.
    pub(crate) fn log_density(&self, x: f64) -> f64 {
        match *self {
            Kernel::Poisson { rate, ln_rate } => {
                let k = x.round();
                if rate == 0.0 {
                    if k == 0.0 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    k * ln_rate - rate - ln_gamma(k + 1.0)
                }
            }
            Kernel::Normal {
                mean,
                ln_sd,
                inv_two_var,
            } => {
                let d = x - mean;
                if d == 0.0 {
                    -LN_SQRT_2PI - ln_sd
                } else {
                    -LN_SQRT_2PI - ln_sd - d * d * inv_two_var
                }
            }
        }
    }
}

/// Log of the component density (pmf for Poisson) at `x`.
pub fn component_log_density(family: ComponentFamily, atom: &ParamPoint, x: f64) -> Result<f64> {
    let kernel = family.kernel(atom)?;
    family.check_observation(x)?;
    Ok(kernel.log_density(x))
}

/// Component density (pmf for Poisson) at `x`.
pub fn component_density(family: ComponentFamily, atom: &ParamPoint, x: f64) -> Result<f64> {
    component_log_density(family, atom, x).map(f64::exp)
}

/// A finitely supported mixing distribution with total mass `ρ ∈ (0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixing")]
pub struct MixingDistribution {
    atoms: Vec<ParamPoint>,
    weights: Vec<f64>,
    mass: f64,
}

#[derive(Deserialize)]
struct RawMixing {
    atoms: Vec<ParamPoint>,
    weights: Vec<f64>,
    #[serde(default)]
    mass: Option<f64>,
}

impl TryFrom<RawMixing> for MixingDistribution {
    type Error = MixError;

    fn try_from(raw: RawMixing) -> Result<Self> {
        let g = MixingDistribution::new(raw.atoms, raw.weights)?;
        if let Some(mass) = raw.mass {
            if (mass - g.mass).abs() > MASS_TOLERANCE {
                return Err(contract(format!(
                    "declared mass {mass} disagrees with the weight sum {}",
                    g.mass
                )));
            }
        }
        Ok(g)
    }
}

impl MixingDistribution {
    /// Builds a mixing distribution; the weights must be nonnegative with a
    /// positive sum of at most one. Atom order is kept as given; use
    /// [`MixingDistribution::canonicalize`] for the canonical form.
    pub fn new(atoms: Vec<ParamPoint>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(contract("mixing distribution needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(contract(format!("{} atoms but {} weights", atoms.len(), weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(contract(format!("weights must be finite and nonnegative, got {w}")));
        }
        if let Some(a) = atoms.iter().find(|a| !a.mean.is_finite()) {
            return Err(contract(format!("atom means must be finite, got {}", a.mean)));
        }
        if let Some(s) = atoms
            .iter()
            .filter_map(|a| a.scale)
            .find(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(contract(format!("atom scales must be positive and finite, got {s}")));
        }
        let mass = weights.iter().copied().collect::<CompensatedSum>().value();
        if !(mass > 0.0) {
            return Err(contract("total mass must be positive"));
        }
        if mass > 1.0 + MASS_TOLERANCE {
            return Err(contract(format!("total mass {mass} exceeds one")));
        }
        Ok(Self {
            atoms,
            weights,
            mass: mass.min(1.0),
        })
    }

    /// Point mass `δ_atom`.
    pub fn point(atom: ParamPoint) -> Self {
        Self {
            atoms: vec![atom],
            weights: vec![1.0],
            mass: 1.0,
        }
    }

    /// Convenience constructor for location-only atoms (Poisson or
    /// equal-variance normal).
    pub fn from_locations(means: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(
            means.iter().map(|&m| ParamPoint::location(m)).collect(),
            weights.to_vec(),
        )
    }

    /// Convenience constructor for `(mean, sd)` atoms.
    pub fn from_pairs(pairs: &[(f64, f64)], weights: &[f64]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|&(m, s)| ParamPoint::with_scale(m, s)).collect(),
            weights.to_vec(),
        )
    }

    pub fn atoms(&self) -> &[ParamPoint] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_proper(&self) -> bool {
        (self.mass - 1.0).abs() <= MASS_TOLERANCE
    }

    /// The sub-distribution `ρG` (weights multiplied by `rho ∈ (0, 1]`).
    pub fn scaled(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(contract(format!("mass factor must lie in (0, 1], got {rho}")));
        }
        Self::new(self.atoms.clone(), self.weights.iter().map(|w| w * rho).collect())
    }

    pub fn check_family(&self, family: ComponentFamily) -> Result<()> {
        self.atoms.iter().try_for_each(|a| family.check_atom(a))
    }

    /// Canonical form: atoms sorted by [`ParamPoint::canonical_cmp`], bitwise
    /// identical atoms merged, zero-weight atoms dropped.
    pub fn canonicalize(&self) -> Self {
        let mut order: Vec<usize> = (0..self.atoms.len()).collect();
        order.sort_by(|&i, &j| self.atoms[i].canonical_cmp(&self.atoms[j]));
        let mut atoms: Vec<ParamPoint> = Vec::with_capacity(order.len());
        let mut weights: Vec<f64> = Vec::with_capacity(order.len());
        for i in order {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            match atoms.last() {
                Some(last) if last.bitwise_eq(&self.atoms[i]) => {
                    *weights.last_mut().expect("parallel vectors") += w;
                }
                _ => {
                    atoms.push(self.atoms[i]);
                    weights.push(w);
                }
            }
        }
        Self {
            atoms,
            weights,
            mass: self.mass,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
            && self
                .atoms
                .windows(2)
                .all(|p| p[0].canonical_cmp(&p[1]) == Ordering::Less)
    }

    /// Lexicographic comparison of canonical forms (atoms, then weights).
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        let a = self.canonicalize();
        let b = other.canonicalize();
        for (x, y) in a.atoms.iter().zip(&b.atoms) {
            match x.canonical_cmp(y) {
                Ordering::Equal => {}
                ord => return ord,
            }
        }
        a.atoms.len().cmp(&b.atoms.len()).then_with(|| {
            a.weights
                .iter()
                .zip(&b.weights)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    }

    /// Mixing c.d.f. `G(θ) = Σ αⱼ I(θⱼ ≤ θ)` over atom means.
    pub fn cdf(&self, theta: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .filter(|(a, _)| a.mean <= theta)
            .map(|(_, w)| w)
            .sum()
    }

    pub(crate) fn kernels(&self, family: ComponentFamily) -> Result<Vec<(f64, Kernel)>> {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, &w)| Ok((w.ln(), family.kernel(a)?)))
            .collect()
    }
}

/// Prepared mixture for repeated density evaluation.
pub(crate) struct PreparedMixture {
    terms: Vec<(f64, Kernel)>,
    buf: Vec<f64>,
}

impl PreparedMixture {
    pub(crate) fn new(family: ComponentFamily, g: &MixingDistribution) -> Result<Self> {
        let terms = g.kernels(family)?;
        let buf = Vec::with_capacity(terms.len());
        Ok(Self { terms, buf })
    }

    pub(crate) fn log_density(&mut self, x: f64) -> f64 {
        self.buf.clear();
        self.buf.extend(self.terms.iter().map(|(lw, k)| lw + k.log_density(x)));
        log_sum_exp(&self.buf)
    }
}

/// `log f(x; G)` for a possibly sub-stochastic `G`.
pub fn mixture_log_density(family: ComponentFamily, g: &MixingDistribution, x: f64) -> Result<f64> {
    family.check_observation(x)?;
    Ok(PreparedMixture::new(family, g)?.log_density(x))
}

/// `f(x; G) = Σ αⱼ f(x; θⱼ)`.
pub fn mixture_density(family: ComponentFamily, g: &MixingDistribution, x: f64) -> Result<f64> {
    mixture_log_density(family, g, x).map(f64::exp)
}

/// `ℓₙ(G) = Σ log f(xᵢ; G)`; `-inf` when some observation has zero density.
pub fn log_likelihood(family: ComponentFamily, g: &MixingDistribution, sample: &Sample) -> Result<f64> {
    sample.check_family(family)?;
    let mut mix = PreparedMixture::new(family, g)?;
    let mut acc = CompensatedSum::new();
    for &x in sample.values() {
        let l = mix.log_density(x);
        if l == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        acc.add(l);
    }
    Ok(acc.value())
}

/// Where a simulated sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub family: ComponentFamily,
    pub mixing: MixingDistribution,
}

/// A nonempty set of finite i.i.d. observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl Sample {
    pub fn new(values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(contract("sample must be nonempty"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(domain(format!("observation {i} is not finite ({v})")));
        }
        Ok(Self {
            values,
            seed,
            provenance: None,
        })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 0)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().copied().collect::<CompensatedSum>().value() / self.len() as f64
    }

    /// `sₙ² = n⁻¹ Σ (xᵢ − x̄)²`
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.values
            .iter()
            .map(|x| (x - mean).powi(2))
            .collect::<CompensatedSum>()
            .value()
            / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn distinct_count(&self) -> usize {
        let v = self.sorted_values();
        1 + v.windows(2).filter(|w| w[0] != w[1]).count()
    }

    pub fn check_family(&self, family: ComponentFamily) -> Result<()> {
        self.values.iter().try_for_each(|&x| family.check_observation(x))
    }

    pub fn ecdf(&self) -> EmpiricalCdf {
        EmpiricalCdf::new(&self.values)
    }
}

/// Draws `n` observations from `f(·; G)`; deterministic given `seed`.
pub fn sample_mixture(family: ComponentFamily, g: &MixingDistribution, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(contract("sample size must be at least 1"));
    }
    if !g.is_proper() {
        return Err(contract(format!(
            "cannot sample from a sub-distribution (mass {})",
            g.mass()
        )));
    }
    g.check_family(family)?;
    let picker = WeightedIndex::new(g.weights()).map_err(|e| contract(format!("invalid weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let atom = g.atoms()[picker.sample(&mut rng)];
        let x = match family {
            ComponentFamily::Poisson => {
                if atom.mean == 0.0 {
                    0.0
                } else {
                    Poisson::new(atom.mean)
                        .map_err(|e| contract(format!("poisson rate {}: {e}", atom.mean)))?
                        .sample(&mut rng)
                }
            }
            ComponentFamily::NormalEqualVariance { variance } => normal(atom.mean, variance.sqrt())?.sample(&mut rng),
            ComponentFamily::NormalFreeVariance => normal(atom.mean, atom.scale.unwrap_or(f64::NAN))?.sample(&mut rng),
        };
        values.push(x);
    }
    Ok(Sample::new(values, seed)?.with_provenance(Provenance {
        family,
        mixing: g.clone(),
    }))
}

fn normal(mean: f64, sd: f64) -> Result<Normal<f64>> {
    Normal::new(mean, sd).map_err(|e| contract(format!("normal({mean}, {sd}): {e}")))
}

/// Free-function form of [`MixingDistribution::canonicalize`].
pub fn canonicalize(g: &MixingDistribution) -> MixingDistribution {
    g.canonicalize()
}

/// Empirical distribution function `Fₙ(x) = n⁻¹ #{xᵢ ≤ x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// `sup_θ {Fₙ(θ + ε) − Fₙ(θ)}`.
    ///
    /// The supremum is attained by windows `(θ, θ + ε]` whose open left end
    /// sits just below a data point, so it suffices to count, for each
    /// distinct value `v`, the observations in `[v, v + ε]`.
    pub fn window_sup(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(domain(format!("window width must be positive, got {eps}")));
        }
        let n = self.sorted.len();
        if n == 0 {
            return Ok(0.0);
        }
        let mut best = 0usize;
        let mut hi = 0usize;
        let mut lo = 0usize;
        while lo < n {
            let v = self.sorted[lo];
            let right = v + eps;
            if hi < lo {
                hi = lo;
            }
            while hi < n && self.sorted[hi] <= right {
                hi += 1;
            }
            best = best.max(hi - lo);
            // Skip ties: the window anchored at the first copy dominates.
            while lo < n && self.sorted[lo] == v {
                lo += 1;
            }
        }
        Ok(best as f64 / n as f64)
    }
}

/// Free-function form of [`EmpiricalCdf::window_sup`].
pub fn cdf_window_sup(ecdf: &EmpiricalCdf, eps: f64) -> Result<f64> {
    ecdf.window_sup(eps)
}
