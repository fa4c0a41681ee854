use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::slice_svd;
use crate::tensor::{DenseTensor, TubeSpectrum};

/// `t = low_rank + sparse`, with `low_rank` the t-SVD truncated to `r`
/// components.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankSplit {
    pub low_rank: DenseTensor,
    pub sparse: DenseTensor,
    pub r: usize,
}

pub fn low_rank_split(t: &DenseTensor, r: usize) -> Result<LowRankSplit> {
    let (n1, n2, n3) = t.require_order3()?;
    if r == 0 || r > n1.min(n2) {
        return Err(Error::invalid(format!(
            "truncation index {r} outside 1..={}",
            n1.min(n2)
        )));
    }
    let spectrum = TubeSpectrum::forward(t)?;
    let half: Vec<DMatrix<Complex64>> = (0..=n3 / 2)
        .into_par_iter()
        .map(|k| {
            let svd = slice_svd(&spectrum.slice(k), true, false, k == 0 || 2 * k == n3);
            let v = svd.v.expect("right singular vectors requested");
            let mut l = DMatrix::from_element(n1, n2, Complex64::new(0.0, 0.0));
            for i in 0..r {
                let s = Complex64::new(svd.sigma[i], 0.0);
                l += (svd.u.column(i) * s) * v.column(i).adjoint();
            }
            l
        })
        .collect();
    let low_rank = TubeSpectrum::from_half_slices(&half, n3)?.inverse()?;
    let sparse = t.sub(&low_rank)?;
    Ok(LowRankSplit { low_rank, sparse, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multilinear::tsvd;
    use crate::tensor::{t_product, t_transpose};

    fn noise(dims: &[usize], seed: u64) -> DenseTensor {
        let mut x = seed as f64 + 0.25;
        DenseTensor::from_fn(dims, |_| {
            x = (x * 12.9898 + 78.233).sin() * 43758.5453;
            x - x.floor() - 0.5
        })
        .unwrap()
    }

    #[test]
    fn full_rank_keeps_everything() {
        let t = noise(&[4, 3, 5], 1);
        let split = low_rank_split(&t, 3).unwrap();
        assert!(split.sparse.frobenius_norm() < 1e-10 * t.frobenius_norm());
    }

    #[test]
    fn planted_tubal_rank_two() {
        let f = tsvd(&noise(&[5, 4, 6], 2)).unwrap();
        let mut s = f.s.clone();
        for i in 2..4 {
            for k in 0..6 {
                s.set(&[i, i, k], 0.0);
            }
        }
        let t = t_product(&f.u, &t_product(&s, &t_transpose(&f.v).unwrap()).unwrap()).unwrap();
        let split = low_rank_split(&t, 2).unwrap();
        assert!(split.sparse.frobenius_norm() <= 1e-8);
    }

    #[test]
    fn energy_splits_orthogonally_and_monotonically() {
        let t = noise(&[4, 5, 3], 3);
        let total = t.frobenius_norm().powi(2);
        let mut prev = f64::INFINITY;
        for r in 1..=4 {
            let split = low_rank_split(&t, r).unwrap();
            let l = split.low_rank.frobenius_norm().powi(2);
            let p = split.sparse.frobenius_norm().powi(2);
            assert!((l + p - total).abs() < 1e-10 * total);
            assert!(split.low_rank.frobenius_norm() <= t.frobenius_norm() * (1.0 + 1e-12));
            assert!(p.sqrt() <= prev + 1e-12);
            prev = p.sqrt();
            // sparse + low-rank reconstruct the input
            assert!(split.low_rank.add(&split.sparse).unwrap().sub(&t).unwrap().frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn tubal_rank_bounded_by_r() {
        let t = noise(&[4, 4, 4], 4);
        let split = low_rank_split(&t, 2).unwrap();
        let f = tsvd(&split.low_rank).unwrap();
        let scale = f.s.frobenius_norm();
        for i in 2..4 {
            let tube: f64 = (0..4).map(|k| f.s.get(&[i, i, k]).powi(2)).sum();
            assert!(tube.sqrt() < 1e-10 * scale);
        }
    }

    #[test]
    fn rejects_bad_r() {
        let t = noise(&[3, 2, 2], 5);
        assert!(low_rank_split(&t, 0).is_err());
        assert!(low_rank_split(&t, 3).is_err());
        assert!(low_rank_split(&noise(&[3, 2], 1), 1).is_err());
    }
}
