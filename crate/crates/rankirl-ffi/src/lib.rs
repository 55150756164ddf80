//! C ABI for the sum-of-margins rank solver.
//!
//! The API follows the usual handle pattern: build a dataset handle by
//! adding one feature-expectation vector per demonstrator, solve it into
//! a solution handle, read the fields out through accessors, and free
//! both handles. All functions return a [`RankirlStatus`]; on failure a
//! thread-local message is available via [`rankirl_last_error`].
//!
//! Ranks use the solver convention: higher rank = better demonstrator
//! (callers translating from "1 = best" labels must invert first).
//!
//! Thread safety: handles are not synchronized; use one handle per
//! thread or provide external locking. Distinct handles are independent.

use rankirl::features::Mu;
use rankirl::ordinal::{solve_sum_of_margins, RankSolution, RankedDataset};
use rankirl::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

/// Result of every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankirlStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Invalid argument (bad dimension, rank, C, or tolerance).
    InvalidArgument = 2,
    /// The solver failed to converge.
    NonConvergence = 3,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 4,
    /// An output buffer was too small.
    BufferTooSmall = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: RankirlStatus, message: &str) -> RankirlStatus {
    set_error(message);
    status
}

fn fail_with(err: &Error) -> RankirlStatus {
    let status = match err {
        Error::NonConvergence(_) => RankirlStatus::NonConvergence,
        _ => RankirlStatus::InvalidArgument,
    };
    fail(status, &err.to_string())
}

/// Dataset under construction: ranked feature expectations plus the
/// slack weight `C`. Opaque to C.
pub struct RankirlDataset {
    mus: Vec<Mu>,
    dim: usize,
    c: f64,
}

/// Solved instance. Opaque to C.
pub struct RankirlSolution {
    inner: RankSolution,
}

/// Copy the last error message for the calling thread into `buf`
/// (NUL-terminated, truncated to `len` bytes). Returns the full message
/// length excluding the NUL, or 0 when no error has occurred.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn rankirl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Create a dataset for `dim`-dimensional feature expectations with
/// slack weight `c`. Returns null on invalid arguments.
#[no_mangle]
pub extern "C" fn rankirl_dataset_new(dim: usize, c: f64) -> *mut RankirlDataset {
    if dim == 0 {
        set_error("dimension must be positive");
        return ptr::null_mut();
    }
    if !(c > 0.0) {
        set_error("C must be positive");
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(RankirlDataset {
        mus: Vec::new(),
        dim,
        c,
    }))
}

/// Add one demonstrator: `values` is a `dim`-long vector, `rank >= 1`
/// with higher = better, `source_id` a unique NUL-terminated label.
///
/// # Safety
/// `dataset` must come from [`rankirl_dataset_new`] and not be freed;
/// `values` must point to `dim` readable doubles; `source_id` must be a
/// valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rankirl_dataset_add(
    dataset: *mut RankirlDataset,
    source_id: *const c_char,
    rank: usize,
    values: *const f64,
) -> RankirlStatus {
    let Some(dataset) = dataset.as_mut() else {
        return fail(RankirlStatus::NullPointer, "dataset is null");
    };
    if source_id.is_null() || values.is_null() {
        return fail(RankirlStatus::NullPointer, "source_id/values is null");
    }
    if rank == 0 {
        return fail(RankirlStatus::InvalidArgument, "rank must be >= 1");
    }
    let source_id = match CStr::from_ptr(source_id).to_str() {
        Ok(s) => s.to_string(),
        Err(_) => return fail(RankirlStatus::InvalidUtf8, "source_id is not UTF-8"),
    };
    let vector = std::slice::from_raw_parts(values, dataset.dim).to_vec();
    dataset.mus.push(Mu {
        vector,
        rank,
        source_id,
    });
    RankirlStatus::Ok
}

/// Solve the sum-of-margins problem. On success `*out` owns a new
/// solution handle. The dataset stays valid and reusable.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rankirl_solve(
    dataset: *const RankirlDataset,
    tol: f64,
    out: *mut *mut RankirlSolution,
) -> RankirlStatus {
    let Some(dataset) = dataset.as_ref() else {
        return fail(RankirlStatus::NullPointer, "dataset is null");
    };
    if out.is_null() {
        return fail(RankirlStatus::NullPointer, "out is null");
    }
    let data = match RankedDataset::new(dataset.mus.clone(), dataset.c) {
        Ok(data) => data,
        Err(err) => return fail_with(&err),
    };
    match solve_sum_of_margins(&data, tol) {
        Ok(solution) => {
            *out = Box::into_raw(Box::new(RankirlSolution { inner: solution }));
            RankirlStatus::Ok
        }
        Err(err) => fail_with(&err),
    }
}

/// Weight-vector dimension of a solution (0 for null).
#[no_mangle]
pub extern "C" fn rankirl_solution_dim(solution: *const RankirlSolution) -> usize {
    unsafe { solution.as_ref() }.map_or(0, |s| s.inner.w.len())
}

/// Number of rank margins (k - 1; 0 for null).
#[no_mangle]
pub extern "C" fn rankirl_solution_n_margins(solution: *const RankirlSolution) -> usize {
    unsafe { solution.as_ref() }.map_or(0, |s| s.inner.margins.len())
}

/// Objective value (NaN for null).
#[no_mangle]
pub extern "C" fn rankirl_solution_objective(solution: *const RankirlSolution) -> f64 {
    unsafe { solution.as_ref() }.map_or(f64::NAN, |s| s.inner.objective)
}

/// Max feasibility violation of the returned point (NaN for null).
#[no_mangle]
pub extern "C" fn rankirl_solution_feasibility_residual(
    solution: *const RankirlSolution,
) -> f64 {
    unsafe { solution.as_ref() }.map_or(f64::NAN, |s| s.inner.feasibility_residual)
}

/// 1 when the instance was degenerate (no separating direction), else 0.
#[no_mangle]
pub extern "C" fn rankirl_solution_degenerate(solution: *const RankirlSolution) -> i32 {
    unsafe { solution.as_ref() }.map_or(0, |s| i32::from(s.inner.degenerate))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> RankirlStatus {
    if buf.is_null() {
        return fail(RankirlStatus::NullPointer, "buffer is null");
    }
    if len < src.len() {
        return fail(
            RankirlStatus::BufferTooSmall,
            "buffer shorter than the vector",
        );
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    RankirlStatus::Ok
}

/// Copy the recovered weight vector into `buf` (`len >= dim`).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rankirl_solution_w(
    solution: *const RankirlSolution,
    buf: *mut f64,
    len: usize,
) -> RankirlStatus {
    let Some(solution) = solution.as_ref() else {
        return fail(RankirlStatus::NullPointer, "solution is null");
    };
    copy_out(&solution.inner.w, buf, len)
}

/// Copy the per-boundary margins into `buf` (`len >= n_margins`).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rankirl_solution_margins(
    solution: *const RankirlSolution,
    buf: *mut f64,
    len: usize,
) -> RankirlStatus {
    let Some(solution) = solution.as_ref() else {
        return fail(RankirlStatus::NullPointer, "solution is null");
    };
    copy_out(&solution.inner.margins, buf, len)
}

/// Free a dataset handle (null is a no-op).
///
/// # Safety
/// `dataset` must come from [`rankirl_dataset_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rankirl_dataset_free(dataset: *mut RankirlDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Free a solution handle (null is a no-op).
///
/// # Safety
/// `solution` must come from [`rankirl_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rankirl_solution_free(solution: *mut RankirlSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    unsafe fn add(
        ds: *mut RankirlDataset,
        id: &str,
        rank: usize,
        values: &[f64],
    ) -> RankirlStatus {
        let id = CString::new(id).unwrap();
        rankirl_dataset_add(ds, id.as_ptr(), rank, values.as_ptr())
    }

    #[test]
    fn solves_the_one_dimensional_example() {
        unsafe {
            let ds = rankirl_dataset_new(1, 1.0);
            assert!(!ds.is_null());
            assert_eq!(add(ds, "A", 2, &[1.0]), RankirlStatus::Ok);
            assert_eq!(add(ds, "B", 1, &[0.0]), RankirlStatus::Ok);
            let mut sol = ptr::null_mut();
            assert_eq!(rankirl_solve(ds, 1e-8, &mut sol), RankirlStatus::Ok);
            assert!((rankirl_solution_objective(sol) + 1.0).abs() < 1e-6);
            assert_eq!(rankirl_solution_dim(sol), 1);
            assert_eq!(rankirl_solution_degenerate(sol), 0);
            let mut w = [0.0];
            assert_eq!(rankirl_solution_w(sol, w.as_mut_ptr(), 1), RankirlStatus::Ok);
            assert!((w[0] - 1.0).abs() < 1e-6);
            let mut margins = [0.0];
            assert_eq!(rankirl_solution_n_margins(sol), 1);
            assert_eq!(
                rankirl_solution_margins(sol, margins.as_mut_ptr(), 1),
                RankirlStatus::Ok
            );
            assert!((margins[0] - 1.0).abs() < 1e-6);
            rankirl_solution_free(sol);
            rankirl_dataset_free(ds);
        }
    }

    #[test]
    fn rejects_bad_arguments_with_status_and_message() {
        unsafe {
            assert!(rankirl_dataset_new(0, 1.0).is_null());
            assert!(rankirl_dataset_new(2, 0.0).is_null());

            let ds = rankirl_dataset_new(1, 1.0);
            assert_eq!(
                add(ds, "A", 0, &[1.0]),
                RankirlStatus::InvalidArgument
            );
            assert_eq!(
                rankirl_dataset_add(ds, ptr::null(), 1, [0.0].as_ptr()),
                RankirlStatus::NullPointer
            );

            // A gap in the rank labels (rank 2 of 3 empty) is rejected.
            assert_eq!(add(ds, "A", 3, &[1.0]), RankirlStatus::Ok);
            assert_eq!(add(ds, "B", 1, &[0.0]), RankirlStatus::Ok);
            let mut sol = ptr::null_mut();
            assert_eq!(
                rankirl_solve(ds, 1e-8, &mut sol),
                RankirlStatus::InvalidArgument
            );
            let mut buf = [0i8; 128];
            let n = rankirl_last_error(buf.as_mut_ptr().cast(), buf.len());
            assert!(n > 0);
            let msg = CStr::from_ptr(buf.as_ptr().cast()).to_str().unwrap();
            assert!(msg.contains("rank 2"), "unexpected message: {msg}");

            rankirl_dataset_free(ds);
            rankirl_dataset_free(ptr::null_mut());
            rankirl_solution_free(ptr::null_mut());
        }
    }

    #[test]
    fn degenerate_instance_reports_flag_not_error() {
        unsafe {
            let ds = rankirl_dataset_new(1, 1.0);
            // Perfectly conflicted 1-D data: no direction separates.
            assert_eq!(add(ds, "good-lo", 2, &[0.0]), RankirlStatus::Ok);
            assert_eq!(add(ds, "good-hi", 2, &[1.0]), RankirlStatus::Ok);
            assert_eq!(add(ds, "bad-lo", 1, &[0.0]), RankirlStatus::Ok);
            assert_eq!(add(ds, "bad-hi", 1, &[1.0]), RankirlStatus::Ok);
            let mut sol = ptr::null_mut();
            assert_eq!(rankirl_solve(ds, 1e-8, &mut sol), RankirlStatus::Ok);
            assert_eq!(rankirl_solution_degenerate(sol), 1);
            rankirl_solution_free(sol);
            rankirl_dataset_free(ds);
        }
    }

    #[test]
    fn buffer_too_small_is_reported() {
        unsafe {
            let ds = rankirl_dataset_new(2, 1.0);
            assert_eq!(add(ds, "A", 2, &[1.0, 0.0]), RankirlStatus::Ok);
            assert_eq!(add(ds, "B", 1, &[0.0, 0.0]), RankirlStatus::Ok);
            let mut sol = ptr::null_mut();
            assert_eq!(rankirl_solve(ds, 1e-8, &mut sol), RankirlStatus::Ok);
            let mut w = [0.0];
            assert_eq!(
                rankirl_solution_w(sol, w.as_mut_ptr(), 1),
                RankirlStatus::BufferTooSmall
            );
            rankirl_solution_free(sol);
            rankirl_dataset_free(ds);
        }
    }
}
