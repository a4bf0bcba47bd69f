//! Grid-restricted nonparametric MLE.
//!
//! Weights over a fixed grid of candidate atoms are updated by the
//! multiplicative EM map `wⱼ ← wⱼ (1 + D(θⱼ; G)/n)`, where
//!
//! ```text
//! D(θ; G) = Σᵢ f(xᵢ; θ) / f(xᵢ; G) − n
//! ```
//!
//! is the directional derivative of `ℓₙ` from `G` towards `δ_θ`. EM alone
//! smears mass over neighbouring grid atoms and converges sublinearly, so each
//! round ends with constrained Newton steps on the weights (a nonnegative
//! least-squares subproblem plus backtracking), which also add grid local
//! maxima of `D` to the support. A fit is certified when
//! `sup_θ D(θ; Ĝ) ≤ tol_grad · n` over the whole grid and `|D| ≤ 1e-6 · n` at
//! every retained atom.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::{ComponentFamily, MixingDistribution, ParamPoint, Sample};
use crate::numeric::CompensatedSum;

const PRUNE_WEIGHT: f64 = 1e-10;
const NEWTON_STEPS: usize = 100;

fn default_atoms() -> usize {
    200
}
fn default_rounds() -> usize {
    200
}
fn default_iters() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Target number of grid atoms over `[min x, max x]`.
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    /// Explicit grid; overrides `atoms` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
    /// EM sweeps between pruning/certification passes.
    #[serde(default = "default_iters")]
    pub iterations_per_round: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            atoms: default_atoms(),
            points: None,
            max_rounds: default_rounds(),
            iterations_per_round: default_iters(),
        }
    }
}

impl GridSpec {
    /// Candidate atoms for `sample`. Poisson grids are integer aligned: the
    /// spacing is `1/k` for the smallest integer `k` that yields at least
    /// `atoms` points.
    pub fn build(&self, family: ComponentFamily, sample: &Sample) -> Result<Vec<f64>> {
        let (lo, hi) = (sample.min(), sample.max());
        if let Some(points) = &self.points {
            let mut p = points.clone();
            p.sort_by(f64::total_cmp);
            p.dedup();
            if p.is_empty() || p[0] > lo || *p.last().expect("nonempty") < hi {
                return Err(contract(format!("grid must cover the data range [{lo}, {hi}]")));
            }
            if family == ComponentFamily::Poisson && p[0] < 0.0 {
                return Err(contract("poisson grid points must be nonnegative"));
            }
            return Ok(p);
        }
        if self.atoms < 2 || lo == hi {
            return Ok(vec![lo]);
        }
        Ok(match family {
            ComponentFamily::Poisson => {
                let span = hi - lo;
                let per_unit = ((self.atoms - 1) as f64 / span).ceil().max(1.0);
                let steps = (span * per_unit).round() as usize;
                (0..=steps).map(|k| lo + k as f64 / per_unit).collect()
            }
            _ => {
                let k = self.atoms - 1;
                (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpmleResult {
    pub estimate: MixingDistribution,
    /// `sup` of the gradient function over the grid.
    pub gradient_sup: f64,
    /// `max |D(θⱼ; Ĝ)|` over retained support points.
    pub support_gradient_max: f64,
    pub support_size: usize,
    pub distinct_obs: usize,
    pub certified: bool,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub grid_size: usize,
}

/// Distinct observations with multiplicities and the row-scaled kernel
/// matrix `L[k][j] = f(u_k; θⱼ) / max_j f(u_k; θⱼ)`. Row scaling leaves both
/// the EM map and `D` unchanged.
struct Design {
    counts: Vec<f64>,
    log_scale: Vec<f64>,
    kernel: Vec<Vec<f64>>,
}

fn design(family: ComponentFamily, sample: &Sample, grid: &[f64]) -> Result<Design> {
    let sorted = sample.sorted_values();
    let mut values: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for x in sorted {
        if values.last() == Some(&x) {
            *counts.last_mut().expect("parallel") += 1.0;
        } else {
            values.push(x);
            counts.push(1.0);
        }
    }
    let kernels = grid
        .iter()
        .map(|&t| family.kernel(&ParamPoint::location(t)))
        .collect::<Result<Vec<_>>>()?;
    let mut kernel = Vec::with_capacity(values.len());
    let mut log_scale = Vec::with_capacity(values.len());
    for &u in &values {
        let logs: Vec<f64> = kernels.iter().map(|k| k.log_density(u)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        kernel.push(logs.iter().map(|l| (l - top).exp()).collect());
        log_scale.push(top);
    }
    Ok(Design {
        counts,
        log_scale,
        kernel,
    })
}

impl Design {
    fn fitted(&self, weights: &[f64], active: &[usize]) -> Vec<f64> {
        self.kernel
            .iter()
            .map(|row| active.iter().map(|&j| weights[j] * row[j]).sum())
            .collect()
    }

    /// `D(θⱼ)` for every grid index in `cols`.
    fn gradient(&self, fitted: &[f64], cols: impl Iterator<Item = usize>, n: f64) -> Vec<(usize, f64)> {
        cols.map(|j| {
            let s: f64 = self
                .kernel
                .iter()
                .zip(fitted)
                .zip(&self.counts)
                .map(|((row, f), c)| c * row[j] / f)
                .sum();
            (j, s - n)
        })
        .collect()
    }

    /// One constrained Newton step. Candidates are the active atoms plus grid
    /// local maxima of `D` with `D > 0`. Returns the likelihood gain.
    fn newton_step(&self, weights: &mut [f64], active: &mut Vec<usize>, fitted: &mut Vec<f64>, n: f64) -> f64 {
        let g_len = weights.len();
        let all = self.gradient(fitted, 0..g_len, n);
        let mut cols = active.clone();
        for j in 0..g_len {
            let v = all[j].1;
            let left = if j > 0 { all[j - 1].1 } else { f64::NEG_INFINITY };
            let right = if j + 1 < g_len { all[j + 1].1 } else { f64::NEG_INFINITY };
            if v > 0.0 && v >= left && v >= right && weights[j] == 0.0 {
                cols.push(j);
            }
        }
        cols.sort_unstable();
        // Quadratic model of ℓ in the ratios sₖ = f(uₖ; w)/f(uₖ; w₀) is
        // −½ Σ cₖ (sₖ − 2)²; the last row pins Σ w ≈ 1, without which the
        // minimizer is just 2w₀.
        let rows = self.kernel.len();
        let pin = (1e3 * n).sqrt();
        let a = DMatrix::from_fn(rows + 1, cols.len(), |k, c| {
            if k == rows {
                pin
            } else {
                self.counts[k].sqrt() * self.kernel[k][cols[c]] / fitted[k]
            }
        });
        let b = DVector::from_fn(
            rows + 1,
            |k, _| {
                if k == rows {
                    pin
                } else {
                    2.0 * self.counts[k].sqrt()
                }
            },
        );
        let x = nnls(&a, &b);
        let total = x.sum();
        if !(total > 0.0) {
            return 0.0;
        }
        let target: Vec<f64> = x.iter().map(|v| v / total).collect();
        let dir: Vec<f64> = cols.iter().zip(&target).map(|(&j, t)| t - weights[j]).collect();
        let slope: f64 = cols.iter().zip(&dir).map(|(&j, d)| d * all[j].1).sum();
        let base = self.log_likelihood(fitted);
        if !(slope > 0.0) {
            return 0.0;
        }
        let mut alpha = 1.0;
        for _ in 0..40 {
            let trial: Vec<f64> = cols
                .iter()
                .zip(&dir)
                .map(|(&j, d)| (weights[j] + alpha * d).max(0.0))
                .collect();
            let f = self.fitted_on(&trial, &cols);
            let ll = self.log_likelihood(&f);
            if ll >= base + alpha * slope / 3.0 {
                for (&j, &w) in cols.iter().zip(&trial) {
                    weights[j] = w;
                }
                active.clear();
                active.extend(cols.iter().copied().filter(|&j| weights[j] > 0.0));
                *fitted = f;
                return ll - base;
            }
            alpha *= 0.5;
        }
        0.0
    }

    fn fitted_on(&self, w: &[f64], cols: &[usize]) -> Vec<f64> {
        self.kernel
            .iter()
            .map(|row| cols.iter().zip(w).map(|(&j, wj)| wj * row[j]).sum())
            .collect()
    }

    fn log_likelihood(&self, fitted: &[f64]) -> f64 {
        fitted
            .iter()
            .zip(&self.counts)
            .zip(&self.log_scale)
            .map(|((f, c), s)| c * (f.ln() + s))
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Lawson-Hanson nonnegative least squares: `argmin ‖Ax − b‖` over `x ≥ 0`.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let p = a.ncols();
    let mut x = DVector::zeros(p);
    let mut passive = vec![false; p];
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);
    let solve = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..p).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-13)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut z = DVector::zeros(p);
        for (k, &j) in idx.iter().enumerate() {
            z[j] = sol[k];
        }
        z
    };
    for _ in 0..3 * p + 10 {
        let w = a.transpose() * (b - a * &x);
        let pick = (0..p)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = pick else { break };
        passive[t] = true;
        loop {
            let z = solve(&passive);
            if (0..p).all(|j| !passive[j] || z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in 0..p {
                if passive[j] && z[j] <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - z[j]));
                }
            }
            x += (z - &x) * alpha;
            for j in 0..p {
                if passive[j] && x[j] <= 1e-15 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if !passive.iter().any(|&q| q) {
                break;
            }
        }
    }
    x
}

/// `D(θ; G)` evaluated at arbitrary `θ` values.
pub fn gradient_function(
    family: ComponentFamily,
    g: &MixingDistribution,
    sample: &Sample,
    thetas: &[f64],
) -> Result<Vec<f64>> {
    sample.check_family(family)?;
    let mut mix = crate::model::PreparedMixture::new(family, g)?;
    let log_fitted: Vec<f64> = sample.values().iter().map(|&x| mix.log_density(x)).collect();
    thetas
        .iter()
        .map(|&t| {
            let k = family.kernel(&ParamPoint::location(t))?;
            let s = sample
                .values()
                .iter()
                .zip(&log_fitted)
                .map(|(&x, lf)| (k.log_density(x) - lf).exp())
                .collect::<CompensatedSum>()
                .value();
            Ok(s - sample.len() as f64)
        })
        .collect()
}

/// Grid NPMLE of the mixing distribution for Poisson or known-variance normal
/// kernels.
pub fn npmle_fit(family: ComponentFamily, sample: &Sample, grid_spec: &GridSpec, tol_grad: f64) -> Result<NpmleResult> {
    match family {
        ComponentFamily::Poisson | ComponentFamily::NormalEqualVariance { .. } => {}
        ComponentFamily::NormalFreeVariance => {
            return Err(contract(
                "the free-variance normal NPMLE does not exist (unbounded likelihood)",
            ))
        }
    }
    family.validate()?;
    if !(tol_grad > 0.0) {
        return Err(contract(format!("tol_grad must be positive, got {tol_grad}")));
    }
    sample.check_family(family)?;
    let grid = grid_spec.build(family, sample)?;
    let d = design(family, sample, &grid)?;
    let n = sample.len() as f64;
    let g_len = grid.len();

    let mut weights = vec![1.0 / g_len as f64; g_len];
    let mut active: Vec<usize> = (0..g_len).collect();
    let mut iterations = 0;
    let mut fitted = d.fitted(&weights, &active);
    let mut certified = false;
    let mut gradient_sup = f64::INFINITY;
    let mut support_gradient_max = f64::INFINITY;

    for _round in 0..grid_spec.max_rounds.max(1) {
        for _ in 0..grid_spec.iterations_per_round {
            let grads = d.gradient(&fitted, active.iter().copied(), n);
            for (j, dj) in grads {
                weights[j] *= 1.0 + dj / n;
            }
            let total: f64 = active.iter().map(|&j| weights[j]).sum();
            active.iter().for_each(|&j| weights[j] /= total);
            fitted = d.fitted(&weights, &active);
            iterations += 1;
        }
        // Prune negligible atoms and renormalize.
        for &j in &active {
            if weights[j] < PRUNE_WEIGHT {
                weights[j] = 0.0;
            }
        }
        active.retain(|&j| weights[j] > 0.0);
        let total: f64 = active.iter().map(|&j| weights[j]).sum();
        active.iter().for_each(|&j| weights[j] /= total);
        fitted = d.fitted(&weights, &active);
        for _ in 0..NEWTON_STEPS {
            let before = d.log_likelihood(&fitted).abs();
            let gain = d.newton_step(&mut weights, &mut active, &mut fitted, n);
            if gain <= 1e-14 * before.max(1.0) {
                break;
            }
        }
        for &j in &active {
            if weights[j] < PRUNE_WEIGHT {
                weights[j] = 0.0;
            }
        }
        active.retain(|&j| weights[j] > 0.0);
        let total: f64 = active.iter().map(|&j| weights[j]).sum();
        active.iter().for_each(|&j| weights[j] /= total);
        fitted = d.fitted(&weights, &active);

        let all = d.gradient(&fitted, 0..g_len, n);
        gradient_sup = all.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
        support_gradient_max = active.iter().map(|&j| all[j].1.abs()).fold(0.0, f64::max);
        if gradient_sup <= tol_grad * n && support_gradient_max <= 1e-6 * n {
            certified = true;
            break;
        }
        // Re-admit pruned atoms that the gradient says should carry mass.
        let mut readmitted = false;
        for &(j, v) in &all {
            if weights[j] == 0.0 && v > tol_grad * n {
                weights[j] = 1e-6;
                active.push(j);
                readmitted = true;
            }
        }
        if readmitted {
            active.sort_unstable();
            let total: f64 = active.iter().map(|&j| weights[j]).sum();
            active.iter().for_each(|&j| weights[j] /= total);
            fitted = d.fitted(&weights, &active);
        }
    }

    let atoms = active.iter().map(|&j| ParamPoint::location(grid[j])).collect();
    let w = active.iter().map(|&j| weights[j]).collect();
    let estimate = MixingDistribution::new(atoms, w)?.canonicalize();
    Ok(NpmleResult {
        support_size: estimate.len(),
        estimate,
        gradient_sup,
        support_gradient_max,
        distinct_obs: sample.distinct_count(),
        certified,
        log_likelihood: d.log_likelihood(&fitted),
        iterations,
        grid_size: g_len,
    })
}
