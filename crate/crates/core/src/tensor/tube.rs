//! Tube algebra: block-circulant embedding and the t-product.

use rayon::prelude::*;

use super::{DenseTensor, Matrix, TubeSpectrum};
use crate::error::{Error, Result};

/// Stacks the frontal slices vertically: `(n1*n3) x n2`.
pub fn unfold_tube(t: &DenseTensor) -> Result<Matrix> {
    let (n1, n2, n3) = t.require_order3()?;
    Ok(Matrix::from_fn(n1 * n3, n2, |r, j| {
        t.get(&[r % n1, j, r / n1])
    }))
}

/// Inverse of [`unfold_tube`].
pub fn fold_tube(m: &Matrix, dims: &[usize]) -> Result<DenseTensor> {
    let &[n1, n2, n3] = dims else {
        return Err(Error::NotOrder3(dims.len()));
    };
    if m.rows() != n1 * n3 || m.cols() != n2 {
        return Err(Error::shape(format!(
            "{}x{} matrix cannot fold to {dims:?}",
            m.rows(),
            m.cols()
        )));
    }
    DenseTensor::from_fn(dims, |i| m.get(i[2] * n1 + i[0], i[1]))
}

/// Block-circulant matrix `(n1*n3) x (n2*n3)` whose block `(i, j)` is
/// frontal slice `(i - j) mod n3`.
pub fn circ(t: &DenseTensor) -> Result<Matrix> {
    let (n1, n2, n3) = t.require_order3()?;
    Ok(Matrix::from_fn(n1 * n3, n2 * n3, |r, c| {
        let (bi, i) = (r / n1, r % n1);
        let (bj, j) = (c / n2, c % n2);
        t.get(&[i, j, (bi + n3 - bj) % n3])
    }))
}

/// `n x n x n3` tensor with the identity as first frontal slice and zeros
/// elsewhere; the unit of the t-product.
pub fn tube_identity(n: usize, n3: usize) -> Result<DenseTensor> {
    DenseTensor::from_fn(&[n, n, n3], |i| {
        if i[2] == 0 && i[0] == i[1] {
            1.0
        } else {
            0.0
        }
    })
}

/// t-product of `n1 x n2 x n3` and `n2 x m x n3` tensors, computed slice-wise
/// in the tube Fourier domain.
pub fn t_product(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (n1, n2, n3) = a.require_order3()?;
    let (p2, m, p3) = b.require_order3()?;
    if n2 != p2 || n3 != p3 {
        return Err(Error::shape(format!(
            "t-product of {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let fa = TubeSpectrum::forward(a)?;
    let fb = TubeSpectrum::forward(b)?;
    spectral_product(&fa, &fb)?.inverse().map(|t| {
        debug_assert_eq!(t.dims(), &[n1, m, n3]);
        t
    })
}

/// Slice-wise product of two spectra of real tensors.
pub(crate) fn spectral_product(fa: &TubeSpectrum, fb: &TubeSpectrum) -> Result<TubeSpectrum> {
    let n3 = fa.dims()[2];
    let half: Vec<_> = (0..=n3 / 2)
        .into_par_iter()
        .map(|k| fa.slice(k) * fb.slice(k))
        .collect();
    TubeSpectrum::from_half_slices(&half, n3)
}

/// Tensor transpose: each frontal slice transposed, slices `1..n3` reversed.
pub fn t_transpose(t: &DenseTensor) -> Result<DenseTensor> {
    let (n1, n2, n3) = t.require_order3()?;
    DenseTensor::from_fn(&[n2, n1, n3], |i| {
        t.get(&[i[1], i[0], (n3 - i[2]) % n3])
    })
}
