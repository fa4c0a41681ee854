use std::f64::consts::PI;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feature::DescriptorSet;

/// Rows per work unit in the E/M passes. Partial sums are combined in chunk
/// order, so results do not depend on the thread count.
const CHUNK: usize = 1024;

/// Relative decrease of the log-likelihood tolerated as rounding noise.
const LL_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once the relative log-likelihood improvement falls below this.
    pub tol: f64,
    pub seed: u64,
    /// Size of the subsample used for k-means++ seeding.
    pub init_samples: usize,
    /// Variances are kept above this fraction of the global per-dimension
    /// variance.
    pub var_floor_ratio: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-5,
            seed: 0,
            init_samples: 10_000,
            var_floor_ratio: 1e-4,
        }
    }
}

/// K-component Gaussian mixture with diagonal covariances.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    k: usize,
    d: usize,
    weights: Vec<f64>,
    /// Row-major `K x D`.
    means: Vec<f64>,
    /// Row-major `K x D`.
    variances: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>, d: usize) -> Result<Self> {
        let k = weights.len();
        if k == 0 || d == 0 {
            return Err(Error::invalid("mixture needs K >= 1 and D >= 1"));
        }
        if means.len() != k * d || variances.len() != k * d {
            return Err(Error::shape(format!(
                "mixture with K={k}, D={d} needs {} means and variances",
                k * d
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("mixture variances must be positive"));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mixture means must be finite"));
        }
        Ok(Self {
            k,
            d,
            weights,
            means,
            variances,
        })
    }

    pub fn num_components(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.d..(k + 1) * self.d]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.d..(k + 1) * self.d]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `-0.5 * (t - mu_k)^T Sigma_k^-1 (t - mu_k)`.
    pub(crate) fn half_mahalanobis(&self, k: usize, t: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&x, &m), &v) in t.iter().zip(self.mean(k)).zip(self.variance(k)) {
            let z = x - m;
            acc += z * z / v;
        }
        -0.5 * acc
    }

    /// `log(omega_k) - 0.5 * sum_j log(2 pi sigma^2_jk)`.
    pub(crate) fn log_norm_const(&self, k: usize) -> f64 {
        self.weights[k].ln()
            - 0.5
                * self
                    .variance(k)
                    .iter()
                    .map(|v| (2.0 * PI * v).ln())
                    .sum::<f64>()
    }

    /// Log-density of one descriptor under the mixture.
    pub fn log_density(&self, t: &[f64]) -> f64 {
        let consts: Vec<f64> = (0..self.k).map(|k| self.log_norm_const(k)).collect();
        let mut lp: Vec<f64> = (0..self.k)
            .map(|k| consts[k] + self.half_mahalanobis(k, t))
            .collect();
        log_sum_exp_normalize(&mut lp)
    }

    /// Mean log-density over a descriptor set.
    pub fn mean_log_likelihood(&self, data: &DescriptorSet) -> f64 {
        data.iter().map(|t| self.log_density(t)).sum::<f64>() / data.len() as f64
    }

    /// Draws `n` descriptors from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DescriptorSet {
        let mut rows = Vec::with_capacity(n * self.d);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut comp = self.k - 1;
            for (k, &w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    comp = k;
                    break;
                }
            }
            for (&m, &v) in self.mean(comp).iter().zip(self.variance(comp)) {
                let z: f64 = StandardNormal.sample(rng);
                rows.push(m + v.sqrt() * z);
            }
        }
        DescriptorSet::from_rows(n, self.d, rows).expect("finite samples")
    }
}

/// Result of EM training.
#[derive(Clone, Debug)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Training log-likelihood (sum over descriptors) of each E-step.
    pub log_likelihoods: Vec<f64>,
    /// Components re-seeded after losing all responsibility mass, and any
    /// other irregularities worth surfacing.
    pub warnings: Vec<String>,
    /// Iterations whose E-step followed a re-seeding; the log-likelihood may
    /// legitimately drop there.
    pub reseeded_at: Vec<usize>,
}

/// Fits a diagonal-covariance mixture by EM, seeded with k-means++.
pub fn train_gmm(data: &DescriptorSet, k: usize, config: &EmConfig) -> Result<GmmFit> {
    let n = data.len();
    let d = data.dim();
    if k == 0 {
        return Err(Error::invalid("component count must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "{k} components but only {n} descriptors"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let global_var = column_variance(data);
    let floor: Vec<f64> = global_var
        .iter()
        .map(|&v| (config.var_floor_ratio * v).max(f64::MIN_POSITIVE.sqrt()))
        .collect();

    let seeds = kmeans_plus_plus(data, k, config.init_samples, &mut rng);
    let mut means = Vec::with_capacity(k * d);
    for &s in &seeds {
        means.extend_from_slice(data.row(s));
    }
    let init_var: Vec<f64> = global_var
        .iter()
        .zip(&floor)
        .map(|(&v, &f)| v.max(f))
        .collect();
    let mut model = GmmModel {
        k,
        d,
        weights: vec![1.0 / k as f64; k],
        means,
        variances: init_var.repeat(k),
    };

    let mut log_likelihoods = Vec::new();
    let mut warnings = Vec::new();
    let mut reseeded_at = Vec::new();
    let mut resp = vec![0.0; n * k];
    for iter in 0..=config.max_iter {
        let ll = e_step(&model, data, &mut resp);
        if let Some(&prev) = log_likelihoods.last() {
            let prev: f64 = prev;
            if ll < prev - LL_SLACK * prev.abs() && !reseeded_at.contains(&iter) {
                let msg = format!("log-likelihood decreased at iteration {iter}: {prev} -> {ll}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
            log_likelihoods.push(ll);
            if iter == config.max_iter || (ll - prev).abs() <= config.tol * prev.abs() {
                break;
            }
        } else {
            log_likelihoods.push(ll);
            if config.max_iter == 0 {
                break;
            }
        }
        let reseeded = m_step(&mut model, data, &resp, &floor, &global_var);
        for comp in reseeded {
            let msg = format!("component {comp} lost all mass at iteration {iter}; re-seeded");
            log::warn!("{msg}");
            warnings.push(msg);
            reseeded_at.push(iter + 1);
        }
    }

    Ok(GmmFit {
        model,
        log_likelihoods,
        warnings,
        reseeded_at,
    })
}

/// Fills `resp` (row-major `N x K`) with posteriors and returns the total
/// log-likelihood.
fn e_step(model: &GmmModel, data: &DescriptorSet, resp: &mut [f64]) -> f64 {
    let k = model.k;
    let consts: Vec<f64> = (0..k).map(|c| model.log_norm_const(c)).collect();
    let rows = data.as_rows();
    let d = data.dim();
    let partial: Vec<f64> = resp
        .par_chunks_mut(CHUNK * k)
        .zip(rows.par_chunks(CHUNK * d))
        .map(|(r_chunk, x_chunk)| {
            let mut ll = 0.0;
            for (r, x) in r_chunk.chunks_exact_mut(k).zip(x_chunk.chunks_exact(d)) {
                for (c, slot) in r.iter_mut().enumerate() {
                    *slot = consts[c] + model.half_mahalanobis(c, x);
                }
                ll += log_sum_exp_normalize(r);
            }
            ll
        })
        .collect();
    partial.iter().sum()
}

/// Maximization step with variance flooring. Returns the components that
/// were re-seeded for lack of mass.
fn m_step(
    model: &mut GmmModel,
    data: &DescriptorSet,
    resp: &[f64],
    floor: &[f64],
    global_var: &[f64],
) -> Vec<usize> {
    let (k, d, n) = (model.k, model.d, data.len());
    let rows = data.as_rows();

    // pass 1: soft counts and first moments
    let partial: Vec<(Vec<f64>, Vec<f64>)> = resp
        .par_chunks(CHUNK * k)
        .zip(rows.par_chunks(CHUNK * d))
        .map(|(r_chunk, x_chunk)| {
            let mut nk = vec![0.0; k];
            let mut s1 = vec![0.0; k * d];
            for (r, x) in r_chunk.chunks_exact(k).zip(x_chunk.chunks_exact(d)) {
                for c in 0..k {
                    let w = r[c];
                    nk[c] += w;
                    for (acc, &v) in s1[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *acc += w * v;
                    }
                }
            }
            (nk, s1)
        })
        .collect();
    let mut nk = vec![0.0; k];
    let mut s1 = vec![0.0; k * d];
    for (pn, ps) in &partial {
        add_into(&mut nk, pn);
        add_into(&mut s1, ps);
    }

    let empty_mass = f64::EPSILON * n as f64;
    let mut reseeded = Vec::new();
    for c in 0..k {
        if nk[c] > empty_mass {
            for j in 0..d {
                model.means[c * d + j] = s1[c * d + j] / nk[c];
            }
        } else {
            reseeded.push(c);
        }
    }

    // pass 2: second moments about the new means
    let means = &model.means;
    let partial: Vec<Vec<f64>> = resp
        .par_chunks(CHUNK * k)
        .zip(rows.par_chunks(CHUNK * d))
        .map(|(r_chunk, x_chunk)| {
            let mut s2 = vec![0.0; k * d];
            for (r, x) in r_chunk.chunks_exact(k).zip(x_chunk.chunks_exact(d)) {
                for c in 0..k {
                    let w = r[c];
                    let mu = &means[c * d..(c + 1) * d];
                    for ((acc, &v), &m) in s2[c * d..(c + 1) * d].iter_mut().zip(x).zip(mu) {
                        let z = v - m;
                        *acc += w * z * z;
                    }
                }
            }
            s2
        })
        .collect();
    let mut s2 = vec![0.0; k * d];
    for p in &partial {
        add_into(&mut s2, p);
    }

    for c in 0..k {
        if reseeded.contains(&c) {
            continue;
        }
        for j in 0..d {
            model.variances[c * d + j] = (s2[c * d + j] / nk[c]).max(floor[j]);
        }
        model.weights[c] = nk[c] / n as f64;
    }

    if !reseeded.is_empty() {
        // the worst-explained descriptors take over the empty components
        let mut order: Vec<usize> = (0..n).collect();
        let dens: Vec<f64> = data.iter().map(|t| model.log_density(t)).collect();
        order.sort_by(|&a, &b| dens[a].total_cmp(&dens[b]).then(a.cmp(&b)));
        for (slot, &c) in reseeded.iter().enumerate() {
            let src = order[slot.min(n - 1)];
            model.means[c * d..(c + 1) * d].copy_from_slice(data.row(src));
            for j in 0..d {
                model.variances[c * d + j] = global_var[j].max(floor[j]);
            }
            model.weights[c] = 1.0 / n as f64;
        }
    }
    let total: f64 = model.weights.iter().sum();
    for w in &mut model.weights {
        *w /= total;
    }
    reseeded
}

fn add_into(acc: &mut [f64], src: &[f64]) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += s;
    }
}

/// Replaces log-weights by normalized probabilities; returns their log-sum-exp.
pub(crate) fn log_sum_exp_normalize(v: &mut [f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    max + sum.ln()
}

/// Biased per-dimension variance.
fn column_variance(data: &DescriptorSet) -> Vec<f64> {
    let (n, d) = (data.len() as f64, data.dim());
    let mut mean = vec![0.0; d];
    for t in data.iter() {
        add_into(&mut mean, t);
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for t in data.iter() {
        for ((v, &x), &m) in var.iter_mut().zip(t).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter().map(|v| v / n).collect()
}

/// k-means++ seeding on a fixed-seed subsample; returns row indices of `data`.
fn kmeans_plus_plus(data: &DescriptorSet, k: usize, max_samples: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.len();
    let m = n.min(max_samples.max(k));
    let mut pool: Vec<usize> = if m < n {
        index::sample(rng, n, m).into_vec()
    } else {
        (0..n).collect()
    };
    pool.sort_unstable();

    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut chosen = vec![pool[rng.random_range(0..m)]];
    let mut dist: Vec<f64> = pool.iter().map(|&i| sq(data.row(i), data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (p, &w) in dist.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(p);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total distance")
        } else {
            // every remaining point coincides with a seed; take any unused one
            let unused: Vec<usize> = (0..m).filter(|p| !chosen.contains(&pool[*p])).collect();
            unused[rng.random_range(0..unused.len())]
        };
        let idx = pool[pick];
        chosen.push(idx);
        for (p, &i) in pool.iter().enumerate() {
            dist[p] = dist[p].min(sq(data.row(i), data.row(idx)));
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters(seed: u64) -> DescriptorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for c in [-10.0, 10.0] {
            for _ in 0..500 {
                for _ in 0..2 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    rows.push(c + z);
                }
            }
        }
        DescriptorSet::from_rows(1000, 2, rows).unwrap()
    }

    #[test]
    fn single_component_is_closed_form() {
        let data = two_clusters(1);
        let fit = train_gmm(&data, 1, &EmConfig::default()).unwrap();
        let var = column_variance(&data);
        for j in 0..2 {
            let mean: f64 = data.iter().map(|t| t[j]).sum::<f64>() / 1000.0;
            assert!((fit.model.mean(0)[j] - mean).abs() < 1e-10);
            assert!((fit.model.variance(0)[j] - var[j]).abs() < 1e-10);
        }
        assert_eq!(fit.model.weights(), &[1.0]);
    }

    #[test]
    fn recovers_separated_clusters() {
        let data = two_clusters(7);
        let fit = train_gmm(&data, 2, &EmConfig { seed: 3, ..Default::default() }).unwrap();
        let mut centers: Vec<f64> = (0..2).map(|k| fit.model.mean(k)[0]).collect();
        centers.sort_by(f64::total_cmp);
        for (c, want) in centers.iter().zip([-10.0, 10.0]) {
            assert!((c - want).abs() < 0.2, "{c} vs {want}");
        }
        for k in 0..2 {
            assert!((fit.model.mean(k)[1] - fit.model.mean(k)[0]).abs() < 0.4);
        }
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let data = two_clusters(11);
        let fit = train_gmm(&data, 5, &EmConfig { seed: 2, ..Default::default() }).unwrap();
        assert!(fit.log_likelihoods.len() > 1);
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - LL_SLACK * w[0].abs(), "{w:?}");
        }
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn one_point_per_component_floors_variances() {
        let data = DescriptorSet::from_rows(3, 1, vec![0.0, 1.0, 5.0]).unwrap();
        let fit = train_gmm(&data, 3, &EmConfig::default()).unwrap();
        let floor = 1e-4 * column_variance(&data)[0];
        for k in 0..3 {
            assert!(fit.model.variance(k)[0] >= floor);
        }
        let w: f64 = fit.model.weights().iter().sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_components() {
        let data = DescriptorSet::from_rows(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(train_gmm(&data, 3, &EmConfig::default()).is_err());
        assert!(train_gmm(&data, 0, &EmConfig::default()).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let data = two_clusters(5);
        let cfg = EmConfig { seed: 9, ..Default::default() };
        let a = train_gmm(&data, 4, &cfg).unwrap();
        let b = train_gmm(&data, 4, &cfg).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn duplicate_points_still_seed() {
        let data = DescriptorSet::from_rows(4, 1, vec![2.0, 2.0, 2.0, 2.0]).unwrap();
        let fit = train_gmm(&data, 2, &EmConfig::default()).unwrap();
        assert_eq!(fit.model.num_components(), 2);
        assert!(fit.model.variances().iter().all(|&v| v > 0.0));
    }
}
