//! Per-image deep-feature blocks and their descriptor-set view.

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

/// One image's `H x W x D` block of local deep features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor(DenseTensor);

impl AsRef<DenseTensor> for FeatureTensor {
    fn as_ref(&self) -> &DenseTensor {
        &self.0
    }
}

impl FeatureTensor {
    pub fn new(tensor: DenseTensor) -> Result<Self> {
        tensor.require_order3()?;
        if tensor.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature tensor has non-finite entries"));
        }
        Ok(Self(tensor))
    }

    pub fn from_data(h: usize, w: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(DenseTensor::new(vec![h, w, d], data)?)
    }

    /// `(H, W, D)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        let d = self.0.dims();
        (d[0], d[1], d[2])
    }

    pub fn num_descriptors(&self) -> usize {
        let (h, w, _) = self.shape();
        h * w
    }

    pub fn as_tensor(&self) -> &DenseTensor {
        &self.0
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.0
    }

    /// The `H*W x 1 x D` tube view; shares the linearization, so only the
    /// extents change.
    pub fn tube_view(&self) -> DenseTensor {
        let (h, w, d) = self.shape();
        DenseTensor::new(vec![h * w, 1, d], self.0.data().to_vec()).expect("same element count")
    }

    /// Local descriptors, one per spatial position `i = h + H*w`.
    pub fn descriptors(&self) -> DescriptorSet {
        let (h, w, d) = self.shape();
        let n = h * w;
        let src = self.0.data();
        let mut rows = vec![0.0; n * d];
        for j in 0..d {
            for i in 0..n {
                rows[i * d + j] = src[j * n + i];
            }
        }
        DescriptorSet { n, d, rows }
    }
}

/// `N x D` local descriptors of one image (or a pooled training set),
/// stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    n: usize,
    d: usize,
    rows: Vec<f64>,
}

impl DescriptorSet {
    pub fn from_rows(n: usize, d: usize, rows: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("descriptor set needs N >= 1 and D >= 1"));
        }
        if rows.len() != n * d {
            return Err(Error::shape(format!(
                "{n} descriptors of dimension {d} from {} values",
                rows.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("descriptor set has non-finite entries"));
        }
        Ok(Self { n, d, rows })
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        Self::from_rows(m.rows(), m.cols(), m.transpose().as_slice().to_vec())
    }

    /// Concatenates the descriptors of several images.
    pub fn pooled<'a>(sets: impl IntoIterator<Item = &'a DescriptorSet>) -> Result<Self> {
        let mut d = None;
        let mut rows = Vec::new();
        for s in sets {
            if *d.get_or_insert(s.d) != s.d {
                return Err(Error::shape("pooled descriptor sets differ in dimension"));
            }
            rows.extend_from_slice(&s.rows);
        }
        let d = d.ok_or_else(|| Error::invalid("nothing to pool"))?;
        Self::from_rows(rows.len() / d, d, rows)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.rows.chunks_exact(self.d)
    }

    pub fn as_rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_row_slice(self.n, self.d, &self.rows)
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut rows = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            rows.extend_from_slice(self.row(i));
        }
        Self::from_rows(indices.len(), self.d, rows)
    }
}
