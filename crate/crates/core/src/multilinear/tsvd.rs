use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feature::FeatureTensor;
use crate::linalg::{slice_svd, SliceSvd};
use crate::tensor::{DenseTensor, TubeSpectrum};

/// `t = u * s * v^T` under the t-product.
#[derive(Clone, Debug, PartialEq)]
pub struct TsvdFactors {
    /// `n1 x n1 x n3`, t-orthogonal.
    pub u: DenseTensor,
    /// `n1 x n2 x n3`, f-diagonal.
    pub s: DenseTensor,
    /// `n2 x n2 x n3`, t-orthogonal.
    pub v: DenseTensor,
}

/// Whether spectral slice `k` of a real tensor is itself real.
fn self_conjugate(k: usize, n3: usize) -> bool {
    k == 0 || 2 * k == n3
}

/// Per-slice SVDs of the independent half of the spectrum.
fn spectral_svds(spectrum: &TubeSpectrum, want_v: bool, full: bool) -> Vec<SliceSvd> {
    let n3 = spectrum.dims()[2];
    (0..=n3 / 2)
        .into_par_iter()
        .map(|k| slice_svd(&spectrum.slice(k), want_v, full, self_conjugate(k, n3)))
        .collect()
}

fn diag_slice(sigma: &[f64], rows: usize, cols: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(rows, cols, Complex64::new(0.0, 0.0));
    for (i, &s) in sigma.iter().enumerate() {
        m[(i, i)] = Complex64::new(s, 0.0);
    }
    m
}

/// Full t-SVD: slice-wise SVD in the tube Fourier domain with
/// non-increasing singular values per slice.
pub fn tsvd(t: &DenseTensor) -> Result<TsvdFactors> {
    let (n1, n2, n3) = t.require_order3()?;
    let spectrum = TubeSpectrum::forward(t)?;
    let svds = spectral_svds(&spectrum, true, true);
    let u: Vec<_> = svds.iter().map(|s| s.u.clone()).collect();
    let s: Vec<_> = svds.iter().map(|s| diag_slice(&s.sigma, n1, n2)).collect();
    let v: Vec<_> = svds
        .into_iter()
        .map(|s| s.v.expect("right singular vectors requested"))
        .collect();
    Ok(TsvdFactors {
        u: TubeSpectrum::from_half_slices(&u, n3)?.inverse()?,
        s: TubeSpectrum::from_half_slices(&s, n3)?.inverse()?,
        v: TubeSpectrum::from_half_slices(&v, n3)?.inverse()?,
    })
}

/// t-SVD dictionary of a training set stacked along the second index.
///
/// Only the left factor, the eigen-tuples and the training mean are kept:
/// the right factor is `M x M x D` and plays no part in projection.
#[derive(Clone, Debug)]
pub struct TsvdBasis {
    u: DenseTensor,
    eigen_tuples: DenseTensor,
    mean: DenseTensor,
    /// Conjugate-transposed spectral slices of `u`, `0..=n3/2`.
    u_adjoint_half: Vec<DMatrix<Complex64>>,
}

impl PartialEq for TsvdBasis {
    fn eq(&self, other: &Self) -> bool {
        self.u == other.u && self.eigen_tuples == other.eigen_tuples && self.mean == other.mean
    }
}

impl TsvdBasis {
    /// `u`: `n1 x n1 x n3`; `eigen_tuples`: `r x 1 x n3` diagonal tubes of
    /// the f-diagonal factor; `mean`: `n1 x 1 x n3`.
    pub fn new(u: DenseTensor, eigen_tuples: DenseTensor, mean: DenseTensor) -> Result<Self> {
        let (a, b, n3) = u.require_order3()?;
        if a != b {
            return Err(Error::shape(format!("t-SVD basis must be square, got {:?}", u.dims())));
        }
        let (_, one, e3) = eigen_tuples.require_order3()?;
        if one != 1 || e3 != n3 {
            return Err(Error::shape(format!(
                "eigen-tuples {:?} do not match basis {:?}",
                eigen_tuples.dims(),
                u.dims()
            )));
        }
        if mean.dims() != [a, 1, n3] {
            return Err(Error::shape(format!(
                "mean {:?} does not match basis {:?}",
                mean.dims(),
                u.dims()
            )));
        }
        let u_adjoint_half = TubeSpectrum::forward(&u)?
            .half_slices()
            .into_iter()
            .map(|s| s.adjoint())
            .collect();
        Ok(Self {
            u,
            eigen_tuples,
            mean,
            u_adjoint_half,
        })
    }

    pub fn u(&self) -> &DenseTensor {
        &self.u
    }

    pub fn eigen_tuples(&self) -> &DenseTensor {
        &self.eigen_tuples
    }

    pub fn mean(&self) -> &DenseTensor {
        &self.mean
    }

    /// `(n1, n3)`: descriptors per image and descriptor dimension.
    pub fn shape(&self) -> (usize, usize) {
        let d = self.u.dims();
        (d[0], d[2])
    }

    /// Materializes the f-diagonal factor with `n2` lateral slices.
    pub fn s_tensor(&self, n2: usize) -> Result<DenseTensor> {
        let (n1, n3) = self.shape();
        let r = self.eigen_tuples.dims()[0];
        DenseTensor::from_fn(&[n1, n2, n3], |i| {
            if i[0] == i[1] && i[0] < r {
                self.eigen_tuples.get(&[i[0], 0, i[2]])
            } else {
                0.0
            }
        })
    }
}

/// Stacks `H*W x 1 x D` views of the images into `H*W x M x D`, removes the
/// mean image and takes the t-SVD of the result.
pub fn tsvd_train(training: &[FeatureTensor]) -> Result<TsvdBasis> {
    let first = training
        .first()
        .ok_or_else(|| Error::invalid("t-SVD training needs at least one image"))?;
    let (h, w, d) = first.shape();
    if let Some(bad) = training.iter().find(|t| t.shape() != (h, w, d)) {
        return Err(Error::shape(format!(
            "training images differ in shape: {:?} vs {:?}",
            (h, w, d),
            bad.shape()
        )));
    }
    let n1 = h * w;
    let m = training.len();

    let mut mean = vec![0.0; n1 * d];
    for img in training {
        for (acc, v) in mean.iter_mut().zip(img.as_tensor().data()) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);

    // frontal slice k of the stack holds feature channel k of every image
    let mut stack = vec![0.0; n1 * m * d];
    for (j, img) in training.iter().enumerate() {
        let src = img.as_tensor().data();
        for k in 0..d {
            for i in 0..n1 {
                stack[i + n1 * j + n1 * m * k] = src[i + n1 * k] - mean[i + n1 * k];
            }
        }
    }
    let centered = DenseTensor::new(vec![n1, m, d], stack)?;
    let spectrum = TubeSpectrum::forward(&centered)?;
    let svds = spectral_svds(&spectrum, false, true);

    let r = n1.min(m);
    let u_half: Vec<_> = svds.iter().map(|s| s.u.clone()).collect();
    let tuple_half: Vec<_> = svds
        .iter()
        .map(|s| DMatrix::from_iterator(r, 1, s.sigma.iter().map(|&x| Complex64::new(x, 0.0))))
        .collect();
    let u = TubeSpectrum::from_half_slices(&u_half, d)?.inverse()?;
    let eigen_tuples = TubeSpectrum::from_half_slices(&tuple_half, d)?.inverse()?;
    TsvdBasis::new(u, eigen_tuples, DenseTensor::new(vec![n1, 1, d], mean)?)
}

/// `u^T * (t - mean)`, optionally keeping only the leading `truncate` rows.
pub fn tsvd_project(basis: &TsvdBasis, image: &FeatureTensor, truncate: Option<usize>) -> Result<DenseTensor> {
    let (n1, n3) = basis.shape();
    let (h, w, d) = image.shape();
    if h * w != n1 || d != n3 {
        return Err(Error::shape(format!(
            "image {:?} does not match a basis for {n1} descriptors of dimension {n3}",
            (h, w, d)
        )));
    }
    let rows = match truncate {
        Some(r) if r == 0 || r > n1 => {
            return Err(Error::invalid(format!("truncation {r} outside 1..={n1}")))
        }
        Some(r) => r,
        None => n1,
    };
    let centered = image.tube_view().sub(&basis.mean)?;
    let spectrum = TubeSpectrum::forward(&centered)?;
    let half: Vec<_> = basis
        .u_adjoint_half
        .iter()
        .enumerate()
        .map(|(k, ua)| {
            let x = spectrum.slice(k);
            if rows == n1 {
                ua * x
            } else {
                ua.rows(0, rows) * x
            }
        })
        .collect();
    TubeSpectrum::from_half_slices(&half, n3)?.inverse()
}
