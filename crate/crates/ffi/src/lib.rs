//! C ABI for the robust-sketch library.
//!
//! Handles are opaque pointers owned by Rust; every constructor has a
//! matching `_free`, every fallible call returns an [`RsStatus`], and the
//! last error message for the calling thread is available through
//! [`rs_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use robust_sketch::distance::AdeSrht;
use robust_sketch::dp::OutputGrid;
use robust_sketch::error::Error;
use robust_sketch::framework::RobustWrapper;
use robust_sketch::kde::{robust_kde_build, KdeSampleEstimator, Kernel};
use robust_sketch::regression::{exact_cost_oracle, RobustRegression, SparseUpdate};
use robust_sketch::rng::SeedRng;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    BudgetExhausted = 4,
    CapacityExceeded = 5,
    DegenerateInput = 6,
    IoError = 7,
    InternalError = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn status_of(err: &Error) -> RsStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::NotPowerOfTwo { .. } => {
            RsStatus::DimensionMismatch
        }
        Error::EmptyInput(_) | Error::InvalidParameter(_) | Error::NonFinite(_) => {
            RsStatus::InvalidArgument
        }
        Error::BudgetExhausted { .. } => RsStatus::BudgetExhausted,
        Error::CapacityExceeded { .. } => RsStatus::CapacityExceeded,
        Error::DegenerateInput(_) => RsStatus::DegenerateInput,
        Error::Io { .. } | Error::Parse { .. } => RsStatus::IoError,
    }
}

fn fail(err: Error) -> RsStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

/// Runs a closure, converting panics into `InternalError` instead of
/// unwinding across the FFI boundary.
fn guarded<F: FnOnce() -> RsStatus>(f: F) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            RsStatus::InternalError
        }
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn points_from_raw(points: *const f64, n: usize, d: usize) -> Result<Vec<Vec<f64>>, Error> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("point counts must be positive"));
    }
    let flat = std::slice::from_raw_parts(points, n * d);
    Ok(flat.chunks_exact(d).map(|c| c.to_vec()).collect())
}

// ---------------------------------------------------------------------------
// Distance estimation

/// Opaque all-points distance estimator.
pub struct RsDistanceEstimator {
    inner: AdeSrht,
}

/// Builds a distance estimator over `n` points of dimension `d` stored
/// row-major in `points`, provisioned for `query_budget` adaptive queries at
/// accuracy `eps`.
///
/// # Safety
/// `points` must reference `n * d` readable doubles and `out` a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn rs_distance_build(
    points: *const f64,
    n: usize,
    d: usize,
    query_budget: usize,
    eps: f64,
    seed: u64,
    out: *mut *mut RsDistanceEstimator,
) -> RsStatus {
    if points.is_null() || out.is_null() {
        set_error("null pointer argument");
        return RsStatus::NullPointer;
    }
    guarded(|| {
        let rows = match points_from_raw(points, n, d) {
            Ok(rows) => rows,
            Err(e) => return fail(e),
        };
        match AdeSrht::build(rows, query_budget, eps, seed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RsDistanceEstimator { inner }));
                RsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Answers one adaptive query: writes the `n` estimated distances from
/// `query` to every stored point into `out_distances`.
///
/// # Safety
/// `query` must reference `d` readable doubles and `out_distances` `n`
/// writable doubles, with `d`/`n` matching the build call.
#[no_mangle]
pub unsafe extern "C" fn rs_distance_query(
    est: *mut RsDistanceEstimator,
    query: *const f64,
    d: usize,
    out_distances: *mut f64,
    n: usize,
) -> RsStatus {
    if est.is_null() || query.is_null() || out_distances.is_null() {
        set_error("null pointer argument");
        return RsStatus::NullPointer;
    }
    guarded(|| {
        let est = &mut *est;
        if n != est.inner.len() {
            return fail(Error::DimensionMismatch {
                expected: est.inner.len(),
                got: n,
            });
        }
        let q = std::slice::from_raw_parts(query, d);
        match est.inner.query(q) {
            Ok(values) => {
                let out = std::slice::from_raw_parts_mut(out_distances, n);
                out.copy_from_slice(&values);
                RsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Retained coordinate count (`n * r * k` reals).
///
/// # Safety
/// `est` must be a live handle from [`rs_distance_build`].
#[no_mangle]
pub unsafe extern "C" fn rs_distance_stored_reals(est: *const RsDistanceEstimator) -> usize {
    if est.is_null() {
        return 0;
    }
    (*est).inner.stored_reals()
}

/// Remaining query budget.
///
/// # Safety
/// `est` must be a live handle from [`rs_distance_build`].
#[no_mangle]
pub unsafe extern "C" fn rs_distance_remaining_budget(est: *const RsDistanceEstimator) -> usize {
    if est.is_null() {
        return 0;
    }
    (*est).inner.query_budget() - (*est).inner.queries_used()
}

/// Releases a distance estimator; a null handle is a no-op.
///
/// # Safety
/// `est` must be null or a handle from [`rs_distance_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_distance_free(est: *mut RsDistanceEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

// ---------------------------------------------------------------------------
// Kernel density estimation

/// Kernel selector for the C surface.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsKernel {
    Exp = 0,
    Rational = 1,
}

/// Opaque replica-wrapped density estimator.
pub struct RsKdeEstimator {
    wrapper: RobustWrapper<KdeSampleEstimator>,
    tau: f64,
    eps: f64,
}

/// Builds a density estimator provisioned for `query_budget` adaptive
/// queries at accuracy `eps` under promise threshold `tau`.
///
/// # Safety
/// `points` must reference `n * d` readable doubles and `out` a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn rs_kde_build(
    points: *const f64,
    n: usize,
    d: usize,
    query_budget: usize,
    eps: f64,
    tau: f64,
    kernel: RsKernel,
    kernel_scale: f64,
    seed: u64,
    out: *mut *mut RsKdeEstimator,
) -> RsStatus {
    if points.is_null() || out.is_null() {
        set_error("null pointer argument");
        return RsStatus::NullPointer;
    }
    guarded(|| {
        let rows = match points_from_raw(points, n, d) {
            Ok(rows) => rows,
            Err(e) => return fail(e),
        };
        let kernel = match kernel {
            RsKernel::Exp => Kernel::exp(kernel_scale),
            RsKernel::Rational => Kernel::rational(kernel_scale),
        };
        let kernel = match kernel {
            Ok(k) => k,
            Err(e) => return fail(e),
        };
        match robust_kde_build(&rows, query_budget, eps, tau, kernel, seed) {
            Ok(wrapper) => {
                *out = Box::into_raw(Box::new(RsKdeEstimator { wrapper, tau, eps }));
                RsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Answers one adaptive density query. `out_promise_met` (optional) receives
/// 1 when the estimate clears the promise threshold.
///
/// # Safety
/// `query` must reference `d` readable doubles matching the build dimension;
/// `out_value` must be writable; `out_promise_met` may be null.
#[no_mangle]
pub unsafe extern "C" fn rs_kde_query(
    est: *mut RsKdeEstimator,
    query: *const f64,
    d: usize,
    out_value: *mut f64,
    out_promise_met: *mut i32,
) -> RsStatus {
    if est.is_null() || query.is_null() || out_value.is_null() {
        set_error("null pointer argument");
        return RsStatus::NullPointer;
    }
    guarded(|| {
        let est = &mut *est;
        let q = std::slice::from_raw_parts(query, d).to_vec();
        match est.wrapper.query(&q) {
            Ok(value) => {
                *out_value = value;
                if !out_promise_met.is_null() {
                    *out_promise_met = i32::from(value >= est.tau * (1.0 - est.eps));
                }
                RsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a density estimator; a null handle is a no-op.
///
/// # Safety
/// `est` must be null or a handle from [`rs_kde_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_kde_free(est: *mut RsKdeEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

// ---------------------------------------------------------------------------
// Dynamic regression

/// Opaque robust dynamic-regression runner.
pub struct RsRegression {
    inner: RobustRegression,
}

/// Builds the robust runner over a `rows x cols` row-major design matrix and
/// the initial label vector, for updates touching at most `sparsity` entries
/// per round.
///
/// # Safety
/// `design` must reference `rows * cols` readable doubles, `labels` `rows`
/// readable doubles, and `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn rs_regression_build(
    design: *const f64,
    rows: usize,
    cols: usize,
    labels: *const f64,
    eps: f64,
    sparsity: usize,
    seed: u64,
    out: *mut *mut RsRegression,
) -> RsStatus {
    if design.is_null() || labels.is_null() || out.is_null() {
        set_error("null pointer argument");
        return RsStatus::NullPointer;
    }
    guarded(|| {
        if rows == 0 || cols == 0 {
            return fail(Error::invalid("matrix dimensions must be positive"));
        }
        let flat = std::slice::from_raw_parts(design, rows * cols);
        let a = nalgebra::DMatrix::from_row_slice(rows, cols, flat);
        let b = std::slice::from_raw_parts(labels, rows);
        match RobustRegression::new(a, b, eps, sparsity, seed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RsRegression { inner }));
                RsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Applies one sparse update (`indices[i] <- values[i]`, absolute values)
/// and writes the released cost estimate.
///
/// # Safety
/// `indices` and `values` must reference `len` readable elements each;
/// `out_estimate` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_regression_step(
    reg: *mut RsRegression,
    indices: *const usize,
    values: *const f64,
    len: usize,
    out_estimate: *mut f64,
) -> RsStatus {
    if reg.is_null()
        || out_estimate.is_null()
        || (len > 0 && (indices.is_null() || values.is_null()))
    {
        set_error("null pointer argument");
        return RsStatus::NullPointer;
    }
    guarded(|| {
        let reg = &mut *reg;
        let entries = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(indices, len)
                .iter()
                .copied()
                .zip(std::slice::from_raw_parts(values, len).iter().copied())
                .collect()
        };
        let update = match SparseUpdate::new(entries) {
            Ok(u) => u,
            Err(e) => return fail(e),
        };
        match reg.inner.step(&update) {
            Ok(est) => {
                *out_estimate = est;
                RsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a regression runner; a null handle is a no-op.
///
/// # Safety
/// `reg` must be null or a handle from [`rs_regression_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_regression_free(reg: *mut RsRegression) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// Exact least-squares cost of `(design, labels)`; the reference oracle.
///
/// # Safety
/// `design` must reference `rows * cols` readable doubles, `labels` `rows`
/// readable doubles, and `out_cost` a writable double.
#[no_mangle]
pub unsafe extern "C" fn rs_regression_exact_cost(
    design: *const f64,
    rows: usize,
    cols: usize,
    labels: *const f64,
    out_cost: *mut f64,
) -> RsStatus {
    if design.is_null() || labels.is_null() || out_cost.is_null() {
        set_error("null pointer argument");
        return RsStatus::NullPointer;
    }
    guarded(|| {
        if rows == 0 || cols == 0 {
            return fail(Error::invalid("matrix dimensions must be positive"));
        }
        let flat = std::slice::from_raw_parts(design, rows * cols);
        let a = nalgebra::DMatrix::from_row_slice(rows, cols, flat);
        let b = std::slice::from_raw_parts(labels, rows);
        match exact_cost_oracle(&a, b) {
            Ok(cost) => {
                *out_cost = cost;
                RsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Private median utility

/// Private median of `values` over the geometric grid `[grid_lo, grid_hi]`
/// with multiplicative step `grid_ratio`.
///
/// # Safety
/// `values` must reference `len` readable doubles and `out` a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn rs_private_median(
    values: *const f64,
    len: usize,
    grid_lo: f64,
    grid_hi: f64,
    grid_ratio: f64,
    epsilon: f64,
    seed: u64,
    out: *mut f64,
) -> RsStatus {
    if values.is_null() || out.is_null() {
        set_error("null pointer argument");
        return RsStatus::NullPointer;
    }
    guarded(|| {
        let vals = std::slice::from_raw_parts(values, len);
        let grid = match OutputGrid::new(grid_lo, grid_hi, grid_ratio) {
            Ok(g) => g,
            Err(e) => return fail(e),
        };
        match robust_sketch::dp::private_median(vals, &grid, epsilon, &mut SeedRng::new(seed)) {
            Ok(v) => {
                *out = v;
                RsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
