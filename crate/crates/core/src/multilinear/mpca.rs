use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::tensor::{mode_n_product, DenseTensor, Matrix};

/// How many dimensions each mode keeps.
#[derive(Clone, Debug, PartialEq)]
pub enum SubspaceDims {
    Explicit(Vec<usize>),
    /// Per mode, the fewest leading eigenvectors of the initial mode scatter
    /// whose eigenvalues reach this fraction of the total.
    VarianceRatio(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcaConfig {
    pub dims: SubspaceDims,
    pub max_sweeps: usize,
    /// Stop once captured scatter improves by less than this fraction.
    pub tol: f64,
}

impl Default for MpcaConfig {
    fn default() -> Self {
        Self {
            dims: SubspaceDims::VarianceRatio(0.97),
            max_sweeps: 10,
            tol: 1e-6,
        }
    }
}

/// One orthonormal factor per mode plus the training mean.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcaModel {
    factors: Vec<Matrix>,
    mean: DenseTensor,
    /// Order in which projections apply the modes: strongest reduction first.
    mode_order: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct MpcaFit {
    pub model: MpcaModel,
    /// Captured scatter after initialization, then after every sweep.
    pub captured_scatter: Vec<f64>,
    /// Scatter of the centered training set.
    pub total_scatter: f64,
}

impl MpcaModel {
    pub fn new(factors: Vec<Matrix>, mean: DenseTensor) -> Result<Self> {
        if factors.len() != mean.order() {
            return Err(Error::shape(format!(
                "{} factors for an order-{} mean",
                factors.len(),
                mean.order()
            )));
        }
        for (n, (f, &extent)) in factors.iter().zip(mean.dims()).enumerate() {
            if f.rows() != extent || f.cols() > extent {
                return Err(Error::shape(format!(
                    "mode-{n} factor is {}x{}, mode extent is {extent}",
                    f.rows(),
                    f.cols()
                )));
            }
        }
        let mut mode_order: Vec<usize> = (0..factors.len()).collect();
        mode_order.sort_by(|&a, &b| {
            let ra = factors[a].cols() as f64 / factors[a].rows() as f64;
            let rb = factors[b].cols() as f64 / factors[b].rows() as f64;
            ra.total_cmp(&rb).then(a.cmp(&b))
        });
        Ok(Self {
            factors,
            mean,
            mode_order,
        })
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn mean(&self) -> &DenseTensor {
        &self.mean
    }

    pub fn subspace_dims(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::cols).collect()
    }

    /// Maps a core back to input space (without adding the mean).
    pub fn back_project(&self, core: &DenseTensor) -> Result<DenseTensor> {
        tucker_reconstruct(core, &self.factors)
    }
}

/// Alternating per-mode eigen-updates maximizing total tensor scatter.
pub fn mpca_train<T: AsRef<DenseTensor>>(training: &[T], config: &MpcaConfig) -> Result<MpcaFit> {
    let training: Vec<&DenseTensor> = training.iter().map(AsRef::as_ref).collect();
    if training.len() < 2 {
        return Err(Error::invalid(format!(
            "multilinear PCA needs at least 2 training tensors, got {}",
            training.len()
        )));
    }
    let dims = training[0].dims().to_vec();
    if let Some(bad) = training.iter().find(|t| t.dims() != dims.as_slice()) {
        return Err(Error::shape(format!(
            "training tensors differ in shape: {dims:?} vs {:?}",
            bad.dims()
        )));
    }
    let order = dims.len();
    if let SubspaceDims::Explicit(p) = &config.dims {
        if p.len() != order {
            return Err(Error::shape(format!("{} subspace dims for order {order}", p.len())));
        }
        for (n, (&want, &have)) in p.iter().zip(&dims).enumerate() {
            if want == 0 || want > have {
                return Err(Error::invalid(format!(
                    "mode {n} keeps {want} dimensions of {have}"
                )));
            }
        }
    }
    if let SubspaceDims::VarianceRatio(q) = config.dims {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::invalid(format!("variance ratio {q} outside (0, 1]")));
        }
    }

    let m = training.len() as f64;
    let mut mean = DenseTensor::zeros(&dims)?;
    for t in &training {
        for (acc, v) in mean.data_mut().iter_mut().zip(t.data()) {
            *acc += v;
        }
    }
    mean.data_mut().iter_mut().for_each(|v| *v /= m);
    let centered: Vec<DenseTensor> = training.iter().map(|t| t.sub(&mean)).collect::<Result<_>>()?;
    let total_scatter: f64 = centered.iter().map(|c| c.frobenius_norm().powi(2)).sum();

    // full-projection initialization: each mode from the raw centered data
    let mut factors = Vec::with_capacity(order);
    let mut kept = Vec::with_capacity(order);
    for n in 0..order {
        let (vals, vecs) = sym_eigen_desc(mode_scatter(&centered, n));
        let p = match &config.dims {
            SubspaceDims::Explicit(p) => p[n],
            SubspaceDims::VarianceRatio(q) => ratio_dims(&vals, *q),
        };
        kept.push(p);
        factors.push(Matrix::from(vecs.columns(0, p).into_owned()));
    }

    let mut captured = vec![captured_scatter(&centered, &factors)?];
    for _ in 0..config.max_sweeps {
        for n in 0..order {
            let partial: Vec<DenseTensor> = centered
                .par_iter()
                .map(|c| project_except(c, &factors, n))
                .collect::<Result<_>>()?;
            let (_, vecs) = sym_eigen_desc(mode_scatter(&partial, n));
            factors[n] = Matrix::from(vecs.columns(0, kept[n]).into_owned());
        }
        let now = captured_scatter(&centered, &factors)?;
        let prev = *captured.last().unwrap();
        captured.push(now);
        if now - prev <= config.tol * prev.abs() {
            break;
        }
    }

    Ok(MpcaFit {
        model: MpcaModel::new(factors, mean)?,
        captured_scatter: captured,
        total_scatter,
    })
}

/// `(t - mean) x_1 A1^T x_2 A2^T ... x_N AN^T`.
pub fn mpca_project(model: &MpcaModel, t: &DenseTensor) -> Result<DenseTensor> {
    if t.dims() != model.mean.dims() {
        return Err(Error::shape(format!(
            "tensor {:?} does not match model {:?}",
            t.dims(),
            model.mean.dims()
        )));
    }
    let mut y = t.sub(&model.mean)?;
    for &n in &model.mode_order {
        y = mode_n_product(&y, &model.factors[n].transpose(), n)?;
    }
    Ok(y)
}

/// `core x_1 A1 x_2 A2 ... x_N AN`.
pub fn tucker_reconstruct(core: &DenseTensor, factors: &[Matrix]) -> Result<DenseTensor> {
    if factors.len() != core.order() {
        return Err(Error::shape(format!(
            "{} factors for an order-{} core",
            factors.len(),
            core.order()
        )));
    }
    let mut t = core.clone();
    for (n, f) in factors.iter().enumerate() {
        t = mode_n_product(&t, f, n)?;
    }
    Ok(t)
}

fn ratio_dims(eigenvalues: &[f64], q: f64) -> usize {
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= q * total * (1.0 - 1e-12) {
            return i + 1;
        }
    }
    eigenvalues.len()
}

/// Projects every mode except `skip`.
fn project_except(t: &DenseTensor, factors: &[Matrix], skip: usize) -> Result<DenseTensor> {
    let mut y = t.clone();
    for (n, f) in factors.iter().enumerate() {
        if n != skip {
            y = mode_n_product(&y, &f.transpose(), n)?;
        }
    }
    Ok(y)
}

fn captured_scatter(centered: &[DenseTensor], factors: &[Matrix]) -> Result<f64> {
    let parts: Vec<f64> = centered
        .par_iter()
        .map(|c| {
            let mut y = c.clone();
            for (n, f) in factors.iter().enumerate() {
                y = mode_n_product(&y, &f.transpose(), n)?;
            }
            Ok(y.frobenius_norm().powi(2))
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// `sum_m Y_m(n) Y_m(n)^T` over mode-`n` unfoldings.
fn mode_scatter(tensors: &[DenseTensor], n: usize) -> DMatrix<f64> {
    let dims = tensors[0].dims();
    let extent = dims[n];
    let left: usize = dims[..n].iter().product();
    let right: usize = dims[n + 1..].iter().product();
    let cols = left * right;
    let per: Vec<DMatrix<f64>> = tensors
        .par_iter()
        .map(|t| {
            let src = t.data();
            let mut unf = DMatrix::<f64>::zeros(extent, cols);
            for r in 0..right {
                for a in 0..extent {
                    let base = (r * extent + a) * left;
                    for l in 0..left {
                        unf[(a, l + left * r)] = src[base + l];
                    }
                }
            }
            &unf * unf.transpose()
        })
        .collect();
    let mut acc = DMatrix::<f64>::zeros(extent, extent);
    for p in &per {
        acc += p;
    }
    acc
}
