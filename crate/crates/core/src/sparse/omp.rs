use super::{SparseCode, SparseDictionary};
use crate::error::{Error, Result};

/// OMP output with the data needed to audit the run.
#[derive(Clone, Debug)]
pub struct OmpResult {
    pub code: SparseCode,
    /// Atoms in the order they were selected.
    pub selection_order: Vec<usize>,
    /// Residual norm after each selection, starting with `||t||`.
    pub residual_norms: Vec<f64>,
    /// `t - D_I c`.
    pub residual: Vec<f64>,
}

/// Orthogonal matching pursuit: greedily adds the atom most correlated with
/// the residual, then re-fits all coefficients on the support by least
/// squares. Stops after `sparsity` atoms or once `||r|| <= res_tol`.
pub fn omp(dict: &SparseDictionary, t: &[f64], sparsity: usize, res_tol: f64) -> Result<SparseCode> {
    omp_detailed(dict, t, sparsity, res_tol).map(|r| r.code)
}

pub fn omp_detailed(
    dict: &SparseDictionary,
    t: &[f64],
    sparsity: usize,
    res_tol: f64,
) -> Result<OmpResult> {
    let (d, ka) = (dict.dim(), dict.num_atoms());
    if t.len() != d {
        return Err(Error::shape(format!(
            "descriptor of dimension {} against a dictionary of dimension {d}",
            t.len()
        )));
    }
    if sparsity == 0 || sparsity > d.min(ka) {
        return Err(Error::invalid(format!(
            "sparsity {sparsity} outside 1..={}",
            d.min(ka)
        )));
    }

    let t_norm = crate::tensor::norms_l2(t);
    let mut residual = t.to_vec();
    let mut residual_norms = vec![t_norm];
    let mut selected: Vec<usize> = Vec::with_capacity(sparsity);
    // Orthonormal basis of the selected atoms (modified Gram-Schmidt) and the
    // triangular factor linking it back to them: D_I = Q R.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(sparsity);
    let mut r = vec![vec![0.0; sparsity]; sparsity];
    let mut qt = Vec::with_capacity(sparsity);

    let negligible = 1e-14 * t_norm.max(f64::MIN_POSITIVE);
    while selected.len() < sparsity && *residual_norms.last().unwrap() > res_tol.max(negligible) {
        let mut best = None;
        let mut best_corr = 0.0;
        for j in 0..ka {
            if selected.contains(&j) {
                continue;
            }
            let c = dot(dict.atom(j), &residual).abs();
            if c > best_corr {
                best_corr = c;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        if best_corr <= negligible {
            break;
        }

        let atom = dict.atom(j);
        let mut v = atom.to_vec();
        let col = selected.len();
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let p = dot(qi, &v);
                r[i][col] += p;
                axpy(-p, qi, &mut v);
            }
        }
        let vn = crate::tensor::norms_l2(&v);
        if vn <= 1e-10 {
            // atom lies in the span of the support; it cannot reduce the residual
            break;
        }
        v.iter_mut().for_each(|x| *x /= vn);
        r[col][col] = vn;
        let proj = dot(&v, t);
        qt.push(proj);
        let pr = dot(&v, &residual);
        axpy(-pr, &v, &mut residual);
        q.push(v);
        selected.push(j);
        residual_norms.push(crate::tensor::norms_l2(&residual));
    }

    // back-substitute R c = Q^T t
    let k = selected.len();
    let mut coef = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = qt[i];
        for jj in i + 1..k {
            acc -= r[i][jj] * coef[jj];
        }
        coef[i] = acc / r[i][i];
    }

    // exact residual from the fitted coefficients
    let mut residual = t.to_vec();
    for (&j, &c) in selected.iter().zip(&coef) {
        axpy(-c, dict.atom(j), &mut residual);
    }

    let mut pairs: Vec<(usize, f64)> = selected.iter().copied().zip(coef).collect();
    pairs.sort_unstable_by_key(|p| p.0);
    Ok(OmpResult {
        code: SparseCode {
            support: pairs.iter().map(|p| p.0).collect(),
            coefficients: pairs.iter().map(|p| p.1).collect(),
            ambient: ka,
        },
        selection_order: selected,
        residual_norms,
        residual,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
