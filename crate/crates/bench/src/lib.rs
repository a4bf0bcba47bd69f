//! Shared fixtures for the benchmarks.

use mixlab_core::{sample_mixture, ComponentFamily, MixingDistribution, Sample};

/// Two well-separated normal components with unequal scales.
pub fn two_normals() -> MixingDistribution {
    MixingDistribution::from_pairs(&[(0.0, 1.0), (3.0, 0.5)], &[0.5, 0.5]).expect("valid mixture")
}

pub fn normal_sample(n: usize, seed: u64) -> Sample {
    sample_mixture(ComponentFamily::NormalFreeVariance, &two_normals(), n, seed).expect("sampling")
}

pub fn poisson_sample(n: usize, seed: u64) -> Sample {
    let g = MixingDistribution::from_locations(&[1.0, 5.0], &[0.5, 0.5]).expect("valid mixture");
    sample_mixture(ComponentFamily::Poisson, &g, n, seed).expect("sampling")
}
