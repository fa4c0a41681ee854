use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::DenseTensor;
use crate::error::{Error, Result};

/// Largest imaginary residue, relative to the largest real magnitude, that an
/// inverse transform may discard.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Discrete Fourier transform of every tube (mode-3 fiber) of an order-3
/// tensor, stored with the same linearization as the source.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeSpectrum {
    dims: [usize; 3],
    data: Vec<Complex64>,
}

impl TubeSpectrum {
    pub fn forward(t: &DenseTensor) -> Result<Self> {
        let (n1, n2, n3) = t.require_order3()?;
        let block = n1 * n2;
        let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); block * n3];
        // tube-major scratch so the batched FFT sees contiguous tubes
        for k in 0..n3 {
            let slice = &t.data()[k * block..(k + 1) * block];
            for (p, &v) in slice.iter().enumerate() {
                buf[p * n3 + k] = Complex64::new(v, 0.0);
            }
        }
        if n3 > 1 {
            FftPlanner::new().plan_fft_forward(n3).process(&mut buf);
        }
        Ok(Self {
            dims: [n1, n2, n3],
            data: from_tube_major(&buf, block, n3),
        })
    }

    /// Assembles a spectrum from its leading `n3 / 2 + 1` slices; the rest
    /// are filled in by conjugate symmetry.
    pub(crate) fn from_half_slices(half: &[DMatrix<Complex64>], n3: usize) -> Result<Self> {
        let needed = n3 / 2 + 1;
        if half.len() != needed {
            return Err(Error::shape(format!(
                "{} spectral slices for tube length {n3}, need {needed}",
                half.len()
            )));
        }
        let (n1, n2) = half[0].shape();
        let block = n1 * n2;
        let mut data = vec![Complex64::new(0.0, 0.0); block * n3];
        for (k, s) in half.iter().enumerate() {
            if s.shape() != (n1, n2) {
                return Err(Error::shape("spectral slices differ in shape"));
            }
            data[k * block..(k + 1) * block].copy_from_slice(s.as_slice());
            let mirror = (n3 - k) % n3;
            if mirror != k {
                for (dst, src) in data[mirror * block..(mirror + 1) * block]
                    .iter_mut()
                    .zip(s.as_slice())
                {
                    *dst = src.conj();
                }
            }
        }
        Ok(Self {
            dims: [n1, n2, n3],
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn slice(&self, k: usize) -> DMatrix<Complex64> {
        let [n1, n2, _] = self.dims;
        let block = n1 * n2;
        DMatrix::from_column_slice(n1, n2, &self.data[k * block..(k + 1) * block])
    }

    /// Slices `0..=n3/2`, the independent half of a real tensor's spectrum.
    pub(crate) fn half_slices(&self) -> Vec<DMatrix<Complex64>> {
        (0..=self.dims[2] / 2).map(|k| self.slice(k)).collect()
    }

    /// Sum of squared magnitudes over all entries.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Inverse transform back to a real tensor.
    ///
    /// Fails when the imaginary residue exceeds [`IMAG_RESIDUE_TOL`] relative
    /// to the largest real magnitude, i.e. when the spectrum is not the
    /// transform of a real tensor.
    pub fn inverse(&self) -> Result<DenseTensor> {
        let [n1, n2, n3] = self.dims;
        let block = n1 * n2;
        let mut buf = vec![Complex64::new(0.0, 0.0); block * n3];
        for k in 0..n3 {
            for p in 0..block {
                buf[p * n3 + k] = self.data[k * block + p];
            }
        }
        if n3 > 1 {
            FftPlanner::new().plan_fft_inverse(n3).process(&mut buf);
        }
        let scale = 1.0 / n3 as f64;
        let mut max_re = 0f64;
        let mut max_im = 0f64;
        let mut out = vec![0.0; block * n3];
        for p in 0..block {
            for k in 0..n3 {
                let c = buf[p * n3 + k] * scale;
                max_re = max_re.max(c.re.abs());
                max_im = max_im.max(c.im.abs());
                out[k * block + p] = c.re;
            }
        }
        if max_im > IMAG_RESIDUE_TOL * max_re.max(1.0) {
            return Err(Error::invalid(format!(
                "spectrum is not conjugate-symmetric: imaginary residue {max_im:e}"
            )));
        }
        DenseTensor::new(vec![n1, n2, n3], out)
    }
}

fn from_tube_major(buf: &[Complex64], block: usize, n3: usize) -> Vec<Complex64> {
    let mut data = vec![Complex64::new(0.0, 0.0); block * n3];
    for p in 0..block {
        for k in 0..n3 {
            data[k * block + p] = buf[p * n3 + k];
        }
    }
    data
}
