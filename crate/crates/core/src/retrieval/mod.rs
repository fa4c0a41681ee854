//! Brute-force L2 retrieval over encoded signatures, and MAP@k evaluation.

mod index;
mod metrics;

pub use index::{EncodedIndex, EncoderTag, Hit, RankedResult, Signature};
pub use metrics::{average_precision_at_k, mean_average_precision, ApNormalization, MapOptions};

/// Scales `v` to unit l2 norm in place. Returns `false`, leaving `v`
/// untouched, when the norm is zero.
pub fn l2_normalize(v: &mut [f64]) -> bool {
    let norm = crate::tensor::norms_l2(v);
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}
