use super::gmm::{log_sum_exp_normalize, GmmModel};
use crate::error::{Error, Result};
use crate::feature::DescriptorSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FisherConfig {
    /// Use the full mixture posterior `omega_k N(t; mu_k, Sigma_k)` for soft
    /// assignments instead of the unweighted Mahalanobis softmax.
    pub weighted_posterior: bool,
}

/// `2 K D` Fisher signature: mean-gradient block then variance-gradient
/// block, each ordered component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherVector {
    pub values: Vec<f64>,
    pub normalized: bool,
}

/// Soft assignment of one descriptor to each component.
///
/// By default this is the softmax of `-0.5 * Mahalanobis^2` over
/// components, with neither mixture weights nor covariance determinants.
/// With `weighted_posterior` it is the usual mixture posterior.
pub fn soft_assign(model: &GmmModel, t: &[f64], config: FisherConfig) -> Vec<f64> {
    let mut q: Vec<f64> = (0..model.num_components())
        .map(|k| {
            let base = model.half_mahalanobis(k, t);
            if config.weighted_posterior {
                base + model.log_norm_const(k)
            } else {
                base
            }
        })
        .collect();
    log_sum_exp_normalize(&mut q);
    q
}

/// Gradient of the log-likelihood with respect to means and variances,
/// scaled by `1/(N sqrt(omega_k))` and `1/(N sqrt(2 omega_k))`; not
/// normalized.
pub fn fisher_encode_unnormalized(
    model: &GmmModel,
    image: &DescriptorSet,
    config: FisherConfig,
) -> Result<Vec<f64>> {
    let (k, d) = (model.num_components(), model.dim());
    if image.dim() != d {
        return Err(Error::shape(format!(
            "descriptors of dimension {} against a mixture of dimension {d}",
            image.dim()
        )));
    }
    let sigma: Vec<f64> = model.variances().iter().map(|v| v.sqrt()).collect();
    let mut mean_grad = vec![0.0; k * d];
    let mut var_grad = vec![0.0; k * d];
    let mut q = vec![0.0; k];
    let weighted = config.weighted_posterior;
    let consts: Vec<f64> = (0..k).map(|c| model.log_norm_const(c)).collect();
    for t in image.iter() {
        for (c, slot) in q.iter_mut().enumerate() {
            *slot = model.half_mahalanobis(c, t) + if weighted { consts[c] } else { 0.0 };
        }
        log_sum_exp_normalize(&mut q);
        for c in 0..k {
            let w = q[c];
            if w == 0.0 {
                continue;
            }
            let mu = model.mean(c);
            let sg = &sigma[c * d..(c + 1) * d];
            let mg = &mut mean_grad[c * d..(c + 1) * d];
            let vg = &mut var_grad[c * d..(c + 1) * d];
            for j in 0..d {
                let z = (t[j] - mu[j]) / sg[j];
                mg[j] += w * z;
                vg[j] += w * (z * z - 1.0);
            }
        }
    }
    let n = image.len() as f64;
    for c in 0..k {
        let omega = model.weights()[c];
        let sm = 1.0 / (n * omega.sqrt());
        let sv = 1.0 / (n * (2.0 * omega).sqrt());
        mean_grad[c * d..(c + 1) * d].iter_mut().for_each(|v| *v *= sm);
        var_grad[c * d..(c + 1) * d].iter_mut().for_each(|v| *v *= sv);
    }
    mean_grad.extend_from_slice(&var_grad);
    Ok(mean_grad)
}

/// l2-normalized Fisher vector. An all-zero gradient is returned as is,
/// with `normalized == false`.
pub fn fisher_encode(
    model: &GmmModel,
    image: &DescriptorSet,
    config: FisherConfig,
) -> Result<FisherVector> {
    let mut values = fisher_encode_unnormalized(model, image, config)?;
    let normalized = crate::retrieval::l2_normalize(&mut values);
    Ok(FisherVector { values, normalized })
}
