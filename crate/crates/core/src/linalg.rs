//! Dense linear algebra helpers.
//!
//! Large nonsymmetric eigenproblems and solves go through LAPACK (OpenBLAS);
//! everything small stays in nalgebra.

use std::ffi::{c_char, c_int};
use std::sync::Once;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[link(name = "openblas")]
extern "C" {
    fn openblas_set_num_threads(num_threads: c_int);
}

static BLAS_INIT: Once = Once::new();

/// Pins OpenBLAS to one thread so factorizations are bit-reproducible
/// whatever the worker count of the caller.
fn init_blas() {
    BLAS_INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
}

/// Eigenvalues with optional left/right eigenvectors of a real matrix.
///
/// Left eigenvectors satisfy `u^H A = lambda u^H`.
#[derive(Debug, Clone)]
pub struct RealEigen {
    pub values: Vec<Complex64>,
    pub left: Option<DMatrix<Complex64>>,
    pub right: Option<DMatrix<Complex64>>,
}

pub fn eig_real(a: &DMatrix<f64>, want_left: bool, want_right: bool) -> Result<RealEigen> {
    init_blas();
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::numerical("eigenproblem needs a square matrix"));
    }
    if n == 0 {
        return Ok(RealEigen {
            values: vec![],
            left: None,
            right: None,
        });
    }
    let mut work_a = a.clone();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let ldv = n as c_int;
    let mut vl = vec![0.0; if want_left { n * n } else { 1 }];
    let mut vr = vec![0.0; if want_right { n * n } else { 1 }];
    let jobvl = if want_left { b'V' } else { b'N' } as c_char;
    let jobvr = if want_right { b'V' } else { b'N' } as c_char;
    let nn = n as c_int;
    let mut info: c_int = 0;
    let mut query = [0.0f64];
    let ldvl = if want_left { ldv } else { 1 };
    let ldvr = if want_right { ldv } else { 1 };
    unsafe {
        lapack_sys::dgeev_(
            &jobvl,
            &jobvr,
            &nn,
            work_a.as_mut_ptr(),
            &nn,
            wr.as_mut_ptr(),
            wi.as_mut_ptr(),
            vl.as_mut_ptr(),
            &ldvl,
            vr.as_mut_ptr(),
            &ldvr,
            query.as_mut_ptr(),
            &-1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::numerical(format!(
            "dgeev workspace query failed (info={info})"
        )));
    }
    let lwork = query[0] as c_int;
    let mut work = vec![0.0; lwork.max(1) as usize];
    unsafe {
        lapack_sys::dgeev_(
            &jobvl,
            &jobvr,
            &nn,
            work_a.as_mut_ptr(),
            &nn,
            wr.as_mut_ptr(),
            wi.as_mut_ptr(),
            vl.as_mut_ptr(),
            &ldvl,
            vr.as_mut_ptr(),
            &ldvr,
            work.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::numerical(format!(
            "dgeev did not converge (info={info})"
        )));
    }
    let values: Vec<Complex64> = wr
        .iter()
        .zip(&wi)
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect();
    let unpack = |packed: &[f64]| -> DMatrix<Complex64> {
        let mut out = DMatrix::<Complex64>::zeros(n, n);
        let mut j = 0;
        while j < n {
            if wi[j] == 0.0 {
                for r in 0..n {
                    out[(r, j)] = Complex64::new(packed[j * n + r], 0.0);
                }
                j += 1;
            } else {
                for r in 0..n {
                    let re = packed[j * n + r];
                    let im = packed[(j + 1) * n + r];
                    out[(r, j)] = Complex64::new(re, im);
                    out[(r, j + 1)] = Complex64::new(re, -im);
                }
                j += 2;
            }
        }
        out
    };
    Ok(RealEigen {
        values,
        left: want_left.then(|| unpack(&vl)),
        right: want_right.then(|| unpack(&vr)),
    })
}

/// Solves `A X = B` for real `A` by LU with partial pivoting.
pub fn solve_real(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    init_blas();
    let n = a.nrows();
    if n != a.ncols() || b.nrows() != n {
        return Err(Error::numerical("solve: dimension mismatch"));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut ipiv = vec![0 as c_int; n];
    let nn = n as c_int;
    let nrhs = b.ncols() as c_int;
    let mut info: c_int = 0;
    unsafe {
        lapack_sys::dgesv_(
            &nn,
            &nrhs,
            lu.as_mut_ptr(),
            &nn,
            ipiv.as_mut_ptr(),
            x.as_mut_ptr(),
            &nn,
            &mut info,
        );
    }
    if info > 0 {
        return Err(Error::numerical(format!(
            "singular matrix in solve (zero pivot at {info})"
        )));
    }
    if info < 0 {
        return Err(Error::numerical(format!(
            "dgesv argument {} invalid",
            -info
        )));
    }
    Ok(x)
}

/// Solves `A X = B` for real `A` and complex right-hand sides.
pub fn solve_real_complex(a: &DMatrix<f64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let (n, m) = b.shape();
    let mut stacked = DMatrix::<f64>::zeros(n, 2 * m);
    for j in 0..m {
        for i in 0..n {
            stacked[(i, j)] = b[(i, j)].re;
            stacked[(i, m + j)] = b[(i, j)].im;
        }
    }
    let x = solve_real(a, &stacked)?;
    Ok(DMatrix::from_fn(n, m, |i, j| {
        Complex64::new(x[(i, j)], x[(i, m + j)])
    }))
}

/// Numerical rank from the singular values.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Spectral norm of a real matrix.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Eigenvalues of a real symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig_hermitian(m: &DMatrix<Complex64>) -> f64 {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    herm.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factor of a symmetric PSD matrix, adding diagonal jitter of at
/// most `max_rel_jitter * max(diag)` before giving up.
pub fn cholesky_with_jitter(c: &DMatrix<f64>, max_rel_jitter: f64) -> Result<DMatrix<f64>> {
    let sym = (c + c.transpose()) * 0.5;
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.l());
    }
    let scale = sym
        .diagonal()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut jitter = scale * 1e-16;
    while jitter <= max_rel_jitter * scale {
        let shifted = &sym + DMatrix::<f64>::identity(sym.nrows(), sym.ncols()) * jitter;
        if let Some(ch) = shifted.cholesky() {
            return Ok(ch.l());
        }
        jitter *= 10.0;
    }
    Err(Error::numerical(
        "covariance is not positive semidefinite within jitter tolerance",
    ))
}

/// Minimum-norm solution of an underdetermined consistent system `C x = d`.
/// Returns the solution and the residual norm.
pub fn min_norm_solve(c: &DMatrix<f64>, d: &DVector<f64>) -> (DVector<f64>, f64) {
    let svd = c.clone().svd(true, true);
    let x = svd
        .solve(
            d,
            1e-12 * svd.singular_values.iter().cloned().fold(0.0, f64::max),
        )
        .unwrap_or_else(|_| DVector::zeros(c.ncols()));
    let resid = (c * &x - d).norm();
    (x, resid)
}
