//! Thin FFI onto the system LAPACK divide-and-conquer Hermitian
//! eigensolvers. Matrices are passed column-major with the lower triangle
//! referenced; on success the buffer holds w-ascending eigenvectors in its
//! columns.

use num_complex::Complex64;
use std::os::raw::c_char;

use crate::error::{GftError, Result};

extern "C" {
    fn dsyevd_(
        jobz: *const c_char,
        uplo: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        w: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
    fn zheevd_(
        jobz: *const c_char,
        uplo: *const c_char,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        w: *mut f64,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        lrwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
}

fn check(routine: &str, info: i32) -> Result<()> {
    if info == 0 {
        return Ok(());
    }
    Err(GftError::ConvergenceFailure(format!(
        "{routine} returned info = {info}"
    )))
}

/// Eigendecomposition of a real symmetric matrix (column-major, n×n).
/// Returns ascending eigenvalues; `a` is overwritten with the matching
/// eigenvectors in its columns.
pub(crate) fn eigh_real(a: &mut [f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut w = vec![0.0f64; n];
    let (jobz, uplo) = (b'V' as c_char, b'L' as c_char);
    let n_i = n as i32;
    let mut info = 0i32;
    let m1 = -1i32;
    let (mut wkopt, mut iwkopt) = (0.0f64, 0i32);
    unsafe {
        dsyevd_(
            &jobz,
            &uplo,
            &n_i,
            a.as_mut_ptr(),
            &n_i,
            w.as_mut_ptr(),
            &mut wkopt,
            &m1,
            &mut iwkopt,
            &m1,
            &mut info,
        );
    }
    check("dsyevd (workspace query)", info)?;
    let lwork = wkopt as i32;
    let liwork = iwkopt;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        dsyevd_(
            &jobz,
            &uplo,
            &n_i,
            a.as_mut_ptr(),
            &n_i,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("dsyevd", info)?;
    Ok(w)
}

/// Eigendecomposition of a complex Hermitian matrix (column-major, n×n).
/// Returns ascending eigenvalues; `a` is overwritten with the matching
/// eigenvectors in its columns.
pub(crate) fn eigh_complex(a: &mut [Complex64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut w = vec![0.0f64; n];
    let (jobz, uplo) = (b'V' as c_char, b'L' as c_char);
    let n_i = n as i32;
    let mut info = 0i32;
    let m1 = -1i32;
    let (mut wkopt, mut rwkopt, mut iwkopt) = (Complex64::new(0.0, 0.0), 0.0f64, 0i32);
    unsafe {
        zheevd_(
            &jobz,
            &uplo,
            &n_i,
            a.as_mut_ptr(),
            &n_i,
            w.as_mut_ptr(),
            &mut wkopt,
            &m1,
            &mut rwkopt,
            &m1,
            &mut iwkopt,
            &m1,
            &mut info,
        );
    }
    check("zheevd (workspace query)", info)?;
    let lwork = wkopt.re as i32;
    let lrwork = rwkopt as i32;
    let liwork = iwkopt;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1) as usize];
    let mut rwork = vec![0.0f64; lrwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        zheevd_(
            &jobz,
            &uplo,
            &n_i,
            a.as_mut_ptr(),
            &n_i,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("zheevd", info)?;
    Ok(w)
}
