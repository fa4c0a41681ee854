//! Sparse coding of local descriptors: OMP against a k-SVD dictionary,
//! max-pooled into one signature per image.

mod ksvd;
mod omp;

pub use ksvd::{ksvd_train, KsvdConfig, KsvdFit};
pub use omp::{omp, omp_detailed, OmpResult};

use crate::error::{Error, Result};
use crate::feature::DescriptorSet;
use crate::tensor::Matrix;

/// Columns may drift this far from unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// `D x K_a` dictionary with unit-norm atoms as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDictionary {
    atoms: Matrix,
}

impl SparseDictionary {
    /// Wraps atoms that are already unit-norm.
    pub fn new(atoms: Matrix) -> Result<Self> {
        for j in 0..atoms.cols() {
            let n = crate::tensor::norms_l2(atoms.column(j));
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::invalid(format!("atom {j} has norm {n}")));
            }
        }
        Ok(Self { atoms })
    }

    /// Normalizes each column; fails on a zero column.
    pub fn from_unnormalized(atoms: Matrix) -> Result<Self> {
        let (d, k) = (atoms.rows(), atoms.cols());
        let mut data = atoms.as_slice().to_vec();
        for (j, col) in data.chunks_exact_mut(d).enumerate() {
            if !crate::retrieval::l2_normalize(col) {
                return Err(Error::invalid(format!("atom {j} is zero")));
            }
        }
        Self::new(Matrix::new(d, k, data)?)
    }

    pub fn atoms(&self) -> &Matrix {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.atoms.rows()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.cols()
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        self.atoms.column(j)
    }
}

/// Sparse code of one descriptor over a dictionary of `ambient` atoms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseCode {
    /// Sorted, unique atom indices.
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub ambient: usize,
}

impl SparseCode {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.ambient];
        for (&j, &c) in self.support.iter().zip(&self.coefficients) {
            v[j] = c;
        }
        v
    }

    pub fn coefficient(&self, atom: usize) -> Option<f64> {
        self.support
            .binary_search(&atom)
            .ok()
            .map(|p| self.coefficients[p])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PooledSignature {
    pub values: Vec<f64>,
    pub normalized: bool,
}

/// Codes every descriptor with OMP and keeps, per atom, the largest
/// coefficient magnitude over the image; then l2-normalizes.
pub fn encode_image_sparse(
    dict: &SparseDictionary,
    image: &DescriptorSet,
    sparsity: usize,
    res_tol: f64,
) -> Result<PooledSignature> {
    if image.is_empty() {
        return Err(Error::invalid("empty descriptor set"));
    }
    if image.dim() != dict.dim() {
        return Err(Error::shape(format!(
            "descriptors of dimension {} against a dictionary of dimension {}",
            image.dim(),
            dict.dim()
        )));
    }
    let mut values = vec![0.0f64; dict.num_atoms()];
    for t in image.iter() {
        let code = omp(dict, t, sparsity, res_tol)?;
        for (&j, &c) in code.support.iter().zip(&code.coefficients) {
            values[j] = values[j].max(c.abs());
        }
    }
    let normalized = crate::retrieval::l2_normalize(&mut values);
    Ok(PooledSignature { values, normalized })
}
