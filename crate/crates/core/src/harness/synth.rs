//! Seeded synthetic corpora standing in for CNN feature maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::format::FeatureFile;
use crate::error::{Error, Result};
use crate::feature::FeatureTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub categories: usize,
    pub per_category: usize,
    pub height: usize,
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
    /// Std-dev of category means around the origin.
    pub mean_spread: f64,
    /// Per-dimension variances are `noise_scale^2` times a log-uniform draw
    /// from `[1 / variance_spread, variance_spread]`.
    pub noise_scale: f64,
    pub variance_spread: f64,
}

impl SynthConfig {
    pub fn new(categories: usize, per_category: usize, height: usize, width: usize, depth: usize, seed: u64) -> Self {
        Self {
            categories,
            per_category,
            height,
            width,
            depth,
            seed,
            mean_spread: 0.15,
            noise_scale: 1.0,
            variance_spread: 4.0,
        }
    }
}

/// Each category is a diagonal Gaussian over the descriptor space; every
/// pixel of every image draws one descriptor from its category.
/// Images are ordered by category.
pub fn synth_corpus(config: &SynthConfig) -> Result<FeatureFile> {
    let SynthConfig {
        categories,
        per_category,
        height: h,
        width: w,
        depth: d,
        seed,
        mean_spread,
        noise_scale,
        variance_spread,
    } = *config;
    if categories == 0 || per_category == 0 || h == 0 || w == 0 || d == 0 {
        return Err(Error::invalid(format!(
            "synthetic corpus sizes must be positive: {categories} categories x {per_category}, {h}x{w}x{d}"
        )));
    }
    let ok = mean_spread >= 0.0
        && mean_spread.is_finite()
        && noise_scale > 0.0
        && noise_scale.is_finite()
        && variance_spread >= 1.0
        && variance_spread.is_finite();
    if !ok {
        return Err(Error::invalid(format!(
            "mean spread {mean_spread}, noise scale {noise_scale}, variance spread {variance_spread} out of range"
        )));
    }
    let log_v = variance_spread.ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (categories - 1).to_string().len();
    let mut names = Vec::with_capacity(categories);
    let mut images = Vec::with_capacity(categories * per_category);
    let mut labels = Vec::with_capacity(categories * per_category);
    for c in 0..categories {
        names.push(format!("category{c:0width$}"));
        let mean: Vec<f64> = (0..d)
            .map(|_| mean_spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let sd: Vec<f64> = (0..d)
            .map(|_| {
                let u: f64 = rng.random_range(-1.0..=1.0);
                noise_scale * (0.5 * u * log_v).exp()
            })
            .collect();
        for _ in 0..per_category {
            let mut data = vec![0.0; h * w * d];
            for p in 0..h * w {
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    data[p + h * w * j] = mean[j] + sd[j] * z;
                }
            }
            images.push(FeatureTensor::from_data(h, w, d, data)?);
            labels.push(c as u32);
        }
    }
    FeatureFile::new((h, w, d), names, images, labels)
}
