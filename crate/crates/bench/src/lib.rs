//! Seeded fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tensorenc::harness::{synth_corpus, FeatureFile, SynthConfig};
use tensorenc::DenseTensor;

pub fn gaussian_tensor(dims: &[usize], seed: u64) -> DenseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    DenseTensor::new(dims.to_vec(), data).expect("extents match data")
}

pub fn gaussian_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Small synthetic corpus of `h x w x d` images, 4 categories.
pub fn corpus(per_category: usize, h: usize, w: usize, d: usize) -> FeatureFile {
    synth_corpus(&SynthConfig::new(4, per_category, h, w, d, 17)).expect("valid sizes")
}
