//! Dense factorizations with the sign conventions the encoders rely on.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Entries below this fraction of a vector's norm count as zero when picking
/// the entry that fixes the sign (or phase) of a singular vector.
const SIGN_PIVOT_TOL: f64 = 1e-12;

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
/// Each eigenvector's first non-negligible entry is made positive.
pub(crate) fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_real_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

fn fix_real_sign(col: &mut DVector<f64>) {
    let tol = SIGN_PIVOT_TOL * col.norm();
    if let Some(p) = col.iter().find(|v| v.abs() > tol) {
        if *p < 0.0 {
            col.neg_mut();
        }
    }
}

/// Unit-modulus factor that rotates the first non-negligible entry of `col`
/// onto the positive real axis.
fn pivot_phase(col: &[Complex64]) -> Complex64 {
    let norm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let tol = SIGN_PIVOT_TOL * norm;
    col.iter()
        .find(|c| c.norm() > tol)
        .map(|c| c.conj() / c.norm())
        .unwrap_or(Complex64::new(1.0, 0.0))
}

/// Singular value decomposition of one spectral slice.
pub(crate) struct SliceSvd {
    /// `rows x rows` when full, else `rows x min(rows, cols)`.
    pub u: DMatrix<Complex64>,
    /// Non-increasing, length `min(rows, cols)`.
    pub sigma: Vec<f64>,
    /// `cols x cols` when full; `None` when not requested.
    pub v: Option<DMatrix<Complex64>>,
}

/// SVD with sorted singular values, phase-fixed singular vectors and,
/// optionally, `u`/`v` completed to square unitary matrices.
///
/// `real` requests a real factorization for slices known to be real
/// (the zero and Nyquist frequencies); the imaginary parts are dropped.
pub(crate) fn slice_svd(
    m: &DMatrix<Complex64>,
    want_v: bool,
    full: bool,
    real: bool,
) -> SliceSvd {
    let (rows, cols) = m.shape();
    let (mut u, sigma, mut v) = if real {
        let re = m.map(|c| c.re);
        let svd = re.svd(true, want_v);
        (
            svd.u.unwrap().map(|x| Complex64::new(x, 0.0)),
            svd.singular_values.as_slice().to_vec(),
            svd.v_t.map(|vt| vt.transpose().map(|x| Complex64::new(x, 0.0))),
        )
    } else {
        let svd = m.clone().svd(true, want_v);
        (
            svd.u.unwrap(),
            svd.singular_values.as_slice().to_vec(),
            svd.v_t.map(|vt| vt.adjoint()),
        )
    };
    for j in 0..u.ncols() {
        let phase = pivot_phase(u.column(j).as_slice());
        u.column_mut(j).scale_mut_c(phase);
        if let Some(v) = v.as_mut() {
            v.column_mut(j).scale_mut_c(phase);
        }
    }
    if full {
        u = complete_unitary(u, rows);
        v = v.map(|v| complete_unitary(v, cols));
    }
    SliceSvd { u, sigma, v }
}

trait ScaleComplex {
    fn scale_mut_c(&mut self, s: Complex64);
}

impl<S> ScaleComplex for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_c(&mut self, s: Complex64) {
        for x in self.iter_mut() {
            *x *= s;
        }
    }
}

/// Extends orthonormal columns to an `n x n` unitary matrix by
/// Gram-Schmidt on the standard basis vectors, most independent first.
pub(crate) fn complete_unitary(q: DMatrix<Complex64>, n: usize) -> DMatrix<Complex64> {
    let have = q.ncols();
    if have >= n {
        return q;
    }
    let mut cols: Vec<DVector<Complex64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let mut used = vec![false; n];
    while cols.len() < n {
        let mut best: Option<(usize, DVector<Complex64>, f64)> = None;
        for (i, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let mut e = DVector::from_element(n, Complex64::new(0.0, 0.0));
            e[i] = Complex64::new(1.0, 0.0);
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for c in &cols {
                    let proj = c.dotc(&e);
                    e.axpy(-proj, c, Complex64::new(1.0, 0.0));
                }
            }
            let norm = e.norm();
            if best.as_ref().is_none_or(|(_, _, b)| norm > *b) {
                best = Some((i, e, norm));
            }
        }
        let (i, e, norm) = best.expect("candidate basis vector");
        used[i] = true;
        let mut e = e.unscale(norm);
        let phase = pivot_phase(e.as_slice());
        e.scale_mut_c(phase);
        cols.push(e);
    }
    DMatrix::from_columns(&cols)
}
