use nalgebra::{DMatrixView, DMatrixViewMut};

use super::{DenseTensor, Matrix};
use crate::error::{Error, Result};

/// n-mode product `t x_mode a`: contracts mode `mode` of `t` against the
/// columns of `a`, leaving `rows(a)` as the new extent of that mode.
pub fn mode_n_product(t: &DenseTensor, a: &Matrix, mode: usize) -> Result<DenseTensor> {
    let dims = t.dims();
    if mode >= dims.len() {
        return Err(Error::invalid(format!(
            "mode {mode} of an order-{} tensor",
            dims.len()
        )));
    }
    let n = dims[mode];
    if a.cols() != n {
        return Err(Error::shape(format!(
            "mode-{mode} product needs {n} columns, matrix is {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let rows = a.rows();
    let left: usize = dims[..mode].iter().product();
    let right: usize = dims[mode + 1..].iter().product();
    let src = t.data();
    let at = a.as_inner().transpose();
    let mut out = vec![0.0; left * rows * right];
    // each slab over the trailing modes is a column-major left x n matrix
    for (s, d) in src.chunks_exact(left * n).zip(out.chunks_exact_mut(left * rows)) {
        let s = DMatrixView::from_slice(s, left, n);
        DMatrixViewMut::from_slice(d, left, rows).gemm(1.0, &s, &at, 0.0);
    }
    let mut new_dims = dims.to_vec();
    new_dims[mode] = rows;
    DenseTensor::new(new_dims, out)
}

/// Sum of `R` rank-1 outer products `a_r^(1) o a_r^(2) o ... o a_r^(N)`,
/// one column of each factor per term.
pub fn cp_reconstruct(factors: &[Matrix]) -> Result<DenseTensor> {
    let first = factors
        .first()
        .ok_or_else(|| Error::invalid("no CP factors"))?;
    let rank = first.cols();
    if let Some(bad) = factors.iter().find(|f| f.cols() != rank) {
        return Err(Error::shape(format!(
            "CP factors disagree on rank: {rank} vs {}",
            bad.cols()
        )));
    }
    let dims: Vec<usize> = factors.iter().map(Matrix::rows).collect();
    DenseTensor::from_fn(&dims, |idx| {
        (0..rank)
            .map(|r| {
                factors
                    .iter()
                    .zip(idx)
                    .map(|(f, &i)| f.get(i, r))
                    .product::<f64>()
            })
            .sum()
    })
}
