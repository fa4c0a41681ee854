use rayon::prelude::*;

use super::{EncodedIndex, RankedResult, Signature};
use crate::error::{Error, Result};

/// Denominator of AP@k.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ApNormalization {
    /// Number of relevant items within the top `k` (1 if there are none).
    #[default]
    RetrievedRelevant,
    /// `min(k, number of relevant items in the index)`.
    TotalRelevant,
}

/// Average precision over the first `k` hits:
///
/// `AP@k = sum_{i <= k, rel(i)} P@i / Z`
///
/// where `P@i` is the fraction of relevant hits among the first `i`, and
/// `Z` is the number of relevant hits within the top `k` (or 1 when that is
/// zero). `total_relevant` is only consulted for
/// [`ApNormalization::TotalRelevant`].
pub fn average_precision_at_k(
    result: &RankedResult,
    query_label: u32,
    k: usize,
    norm: ApNormalization,
    total_relevant: usize,
) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, h) in result.hits.iter().take(k).enumerate() {
        if h.label == query_label {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    let z = match norm {
        ApNormalization::RetrievedRelevant => hits.max(1),
        ApNormalization::TotalRelevant => k.min(total_relevant).max(1),
    };
    sum / z as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MapOptions {
    /// Drop the query's own item (matched by id) from its candidates.
    pub exclude_self: bool,
    pub normalization: ApNormalization,
}

/// Mean of per-query AP@k.
pub fn mean_average_precision(
    index: &EncodedIndex,
    queries: &[Signature],
    k: usize,
    options: MapOptions,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::invalid("MAP needs at least one query"));
    }
    let aps: Vec<f64> = queries
        .par_iter()
        .map(|q| {
            let exclude = options.exclude_self.then_some(q.item_id);
            let result = index.query_excluding(&q.values, k, exclude)?;
            let mut total = index.count_label(q.label);
            if let Some(id) = exclude {
                total -= index
                    .signatures()
                    .iter()
                    .filter(|s| s.item_id == id && s.label == q.label)
                    .count();
            }
            Ok(average_precision_at_k(&result, q.label, k, options.normalization, total))
        })
        .collect::<Result<_>>()?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}
