use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::omp::{axpy, dot, omp};
use super::{SparseCode, SparseDictionary};
use crate::error::{Error, Result};
use crate::feature::DescriptorSet;
use crate::linalg::sym_eigen_desc;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct KsvdConfig {
    pub atoms: usize,
    pub sparsity: usize,
    pub iters: usize,
    pub seed: u64,
    /// OMP residual tolerance in the coding stage.
    pub res_tol: f64,
}

impl KsvdConfig {
    /// `K_a = 2D`, `s = 5`.
    pub fn for_dim(d: usize) -> Self {
        Self {
            atoms: 2 * d,
            sparsity: 5.min(d),
            iters: 10,
            seed: 0,
            res_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KsvdFit {
    pub dictionary: SparseDictionary,
    /// `||T - D Phi||_F` after each sweep.
    pub objective: Vec<f64>,
    /// Unused atoms swapped for badly represented signals.
    pub replaced_atoms: usize,
}

/// k-SVD dictionary learning.
///
/// Each sweep codes every signal with OMP (keeping the previous code when the
/// new one fits worse), then revisits the atoms one at a time: the residual
/// restricted to the signals using atom `k`, with that atom's contribution
/// added back, is replaced by its best rank-1 approximation `u0 (w0 v0)^T`.
pub fn ksvd_train(data: &DescriptorSet, config: &KsvdConfig) -> Result<KsvdFit> {
    let (n, d) = (data.len(), data.dim());
    let ka = config.atoms;
    if ka == 0 {
        return Err(Error::invalid("dictionary needs at least one atom"));
    }
    if n < ka {
        return Err(Error::invalid(format!("{ka} atoms but only {n} training signals")));
    }
    if config.sparsity == 0 || config.sparsity > d.min(ka) {
        return Err(Error::invalid(format!(
            "sparsity {} outside 1..={}",
            config.sparsity,
            d.min(ka)
        )));
    }

    let mut atoms = initial_atoms(data, ka, config.seed)?;
    let mut codes: Vec<SparseCode> = Vec::new();
    let mut residuals: Vec<Vec<f64>> = Vec::new();
    let mut objective = Vec::with_capacity(config.iters);
    let mut replaced_atoms = 0;

    for _ in 0..config.iters {
        let dict = SparseDictionary::new(Matrix::new(d, ka, atoms.clone())?)?;

        // sparse coding stage
        let fresh: Vec<(SparseCode, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = data.row(i);
                let code = omp(&dict, x, config.sparsity, config.res_tol)?;
                let r = residual_of(&atoms, d, x, &code);
                Ok((code, r))
            })
            .collect::<Result<_>>()?;
        if codes.is_empty() {
            (codes, residuals) = fresh.into_iter().unzip();
        } else {
            for (i, (code, r)) in fresh.into_iter().enumerate() {
                if dot(&r, &r) < dot(&residuals[i], &residuals[i]) {
                    codes[i] = code;
                    residuals[i] = r;
                }
            }
        }

        // dictionary update stage
        let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ka];
        for (i, c) in codes.iter().enumerate() {
            for (p, &j) in c.support.iter().enumerate() {
                users[j].push((i, p));
            }
        }
        let mut taken = vec![false; n];
        for k in 0..ka {
            let atom_k = atoms[k * d..(k + 1) * d].to_vec();
            if users[k].is_empty() {
                if let Some(i) = worst_signal(&residuals, &taken) {
                    taken[i] = true;
                    let mut fresh_atom = data.row(i).to_vec();
                    if crate::retrieval::l2_normalize(&mut fresh_atom) {
                        atoms[k * d..(k + 1) * d].copy_from_slice(&fresh_atom);
                        replaced_atoms += 1;
                    }
                }
                continue;
            }
            // E_k columns: residual plus this atom's own contribution
            let e: Vec<Vec<f64>> = users[k]
                .iter()
                .map(|&(i, p)| {
                    let mut col = residuals[i].clone();
                    axpy(codes[i].coefficients[p], &atom_k, &mut col);
                    col
                })
                .collect();
            let mut u = top_left_singular(&e, d).unwrap_or_else(|| atom_k.clone());
            if dot(&u, &atom_k) < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
            }
            crate::retrieval::l2_normalize(&mut u);
            for (col, &(i, p)) in e.iter().zip(&users[k]) {
                let coef = dot(col, &u);
                codes[i].coefficients[p] = coef;
                let mut r = col.clone();
                axpy(-coef, &u, &mut r);
                residuals[i] = r;
            }
            atoms[k * d..(k + 1) * d].copy_from_slice(&u);
        }

        // recompute residuals exactly against the updated dictionary
        residuals = (0..n)
            .into_par_iter()
            .map(|i| residual_of(&atoms, d, data.row(i), &codes[i]))
            .collect();
        let err: f64 = residuals.iter().map(|r| dot(r, r)).sum();
        objective.push(err.sqrt());
    }

    Ok(KsvdFit {
        dictionary: SparseDictionary::new(Matrix::new(d, ka, atoms)?)?,
        objective,
        replaced_atoms,
    })
}

/// Leading left singular vector of the `d x m` matrix with columns `e`,
/// from whichever of `E E^T` and `E^T E` is smaller; `None` if `E = 0`.
fn top_left_singular(e: &[Vec<f64>], d: usize) -> Option<Vec<f64>> {
    let m = e.len();
    if m >= d {
        let mut gram = DMatrix::<f64>::zeros(d, d);
        for col in e {
            let v = nalgebra::DVectorView::from_slice(col, d);
            gram.ger(1.0, &v, &v, 1.0);
        }
        let (vals, vecs) = sym_eigen_desc(gram);
        return (vals[0] > 0.0).then(|| vecs.column(0).iter().copied().collect());
    }
    let gram = DMatrix::<f64>::from_fn(m, m, |a, b| dot(&e[a], &e[b]));
    let (vals, vecs) = sym_eigen_desc(gram);
    if vals[0] <= 0.0 {
        return None;
    }
    let mut u = vec![0.0; d];
    for (col, &w) in e.iter().zip(vecs.column(0).iter()) {
        axpy(w, col, &mut u);
    }
    crate::retrieval::l2_normalize(&mut u).then_some(u)
}

fn residual_of(atoms: &[f64], d: usize, x: &[f64], code: &SparseCode) -> Vec<f64> {
    let mut r = x.to_vec();
    for (&j, &c) in code.support.iter().zip(&code.coefficients) {
        axpy(-c, &atoms[j * d..(j + 1) * d], &mut r);
    }
    r
}

fn worst_signal(residuals: &[Vec<f64>], taken: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in residuals.iter().enumerate() {
        if taken[i] {
            continue;
        }
        let e = dot(r, r);
        if best.is_none_or(|(_, b)| e > b) {
            best = Some((i, e));
        }
    }
    best.map(|b| b.0)
}

/// `ka` distinct, non-zero training signals picked by a seeded permutation,
/// normalized; column-major `D x ka`.
fn initial_atoms(data: &DescriptorSet, ka: usize, seed: u64) -> Result<Vec<f64>> {
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = index::sample(&mut rng, n, n).into_vec();
    let mut atoms = Vec::with_capacity(ka * data.dim());
    let mut count = 0;
    for i in order {
        let mut a = data.row(i).to_vec();
        if crate::retrieval::l2_normalize(&mut a) {
            atoms.extend_from_slice(&a);
            count += 1;
            if count == ka {
                return Ok(atoms);
            }
        }
    }
    Err(Error::invalid(format!(
        "only {count} non-zero training signals for {ka} atoms"
    )))
}
