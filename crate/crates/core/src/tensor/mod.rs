//! Dense real tensors and the multilinear primitives built on them.
//!
//! All tensors are stored with the first index varying fastest, so the
//! element `(i1, i2, ..., iN)` of a tensor with extents `(n1, ..., nN)` lives
//! at `i1 + n1 * (i2 + n2 * (i3 + ...))`. For an order-3 tensor this makes
//! each frontal slice `t[:, :, k]` a contiguous column-major `n1 x n2` block,
//! and an `H x W x D` feature block is already laid out as the `H*W x 1 x D`
//! tube view and as the `H*W x D` descriptor matrix.

mod matrix;
mod norms;
mod products;
mod spectrum;
mod tube;

pub use matrix::Matrix;
pub use norms::{frobenius_norm, nuclear_norm};
pub(crate) use norms::l2 as norms_l2;
pub use products::{cp_reconstruct, mode_n_product};
pub use spectrum::TubeSpectrum;
pub use tube::{circ, fold_tube, t_product, t_transpose, tube_identity, unfold_tube};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} need {expected} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        let mut idx = vec![0usize; dims.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            increment(&mut idx, dims);
        }
        Ok(t)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Linear position of a multi-index, or `None` when out of range.
    pub fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.dims.len() {
            return None;
        }
        let mut off = 0;
        let mut stride = 1;
        for (&i, &n) in index.iter().zip(&self.dims) {
            if i >= n {
                return None;
            }
            off += i * stride;
            stride *= n;
        }
        Some(off)
    }

    /// Panics if the index is out of range.
    pub fn get(&self, index: &[usize]) -> f64 {
        let off = self
            .offset(index)
            .unwrap_or_else(|| panic!("index {index:?} out of range for {:?}", self.dims));
        self.data[off]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self
            .offset(index)
            .unwrap_or_else(|| panic!("index {index:?} out of range for {:?}", self.dims));
        self.data[off] = value;
    }

    /// Same data under new extents; the element count must be unchanged.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "elementwise op on {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub(crate) fn require_order3(&self) -> Result<(usize, usize, usize)> {
        match self.dims[..] {
            [n1, n2, n3] => Ok((n1, n2, n3)),
            _ => Err(Error::NotOrder3(self.order())),
        }
    }

    /// Frontal slice `k` of an order-3 tensor.
    pub fn frontal_slice(&self, k: usize) -> Result<Matrix> {
        let (n1, n2, n3) = self.require_order3()?;
        if k >= n3 {
            return Err(Error::invalid(format!("slice {k} of {n3}")));
        }
        let block = n1 * n2;
        Ok(Matrix::from_column_slice(
            n1,
            n2,
            &self.data[k * block..(k + 1) * block],
        ))
    }

    /// Stacks equally-shaped matrices as the frontal slices of an order-3 tensor.
    pub fn from_frontal_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::invalid("no frontal slices"))?;
        let (n1, n2) = (first.rows(), first.cols());
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for s in slices {
            if (s.rows(), s.cols()) != (n1, n2) {
                return Err(Error::shape("frontal slices differ in shape"));
            }
            data.extend_from_slice(s.as_slice());
        }
        Self::new(vec![n1, n2, slices.len()], data)
    }
}

impl AsRef<DenseTensor> for DenseTensor {
    fn as_ref(&self) -> &DenseTensor {
        self
    }
}

impl From<Matrix> for DenseTensor {
    fn from(m: Matrix) -> Self {
        let dims = vec![m.rows(), m.cols()];
        Self {
            dims,
            data: m.as_slice().to_vec(),
        }
    }
}

impl TryFrom<DenseTensor> for Matrix {
    type Error = Error;

    fn try_from(t: DenseTensor) -> Result<Self> {
        match t.dims[..] {
            [r, c] => Ok(Matrix::from_column_slice(r, c, &t.data)),
            _ => Err(Error::shape(format!(
                "order-2 tensor required, got dims {:?}",
                t.dims
            ))),
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::shape("tensor order must be at least 1"));
    }
    if dims.contains(&0) {
        return Err(Error::shape(format!("zero extent in {dims:?}")));
    }
    Ok(())
}

/// Advances a multi-index in first-index-fastest order.
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, &n) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < n {
            return;
        }
        *i = 0;
    }
}
