use super::{DenseTensor, Matrix};

/// Square root of the sum of squared entries.
pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    l2(t.data())
}

/// Sum of singular values.
pub fn nuclear_norm(m: &Matrix) -> f64 {
    m.as_inner().clone().singular_values().sum()
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
