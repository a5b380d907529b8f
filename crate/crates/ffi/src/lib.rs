//! C ABI for the `langevin-kl` sampler, planner and Gaussian oracle.
//!
//! Conventions:
//!
//! * every fallible function returns an [`LkStatus`] and writes results
//!   through out-pointers, which are left untouched on failure;
//! * objects are opaque handles created by `lk_*_new`/`lk_potential_*` and
//!   released with the matching `*_free`, which accepts `NULL`;
//! * the message of the most recent failure on the calling thread is
//!   available from [`lk_last_error_message`];
//! * matrices are dense and row-major.
//!
//! The header `include/langevin_kl.h` is generated from this file at build
//! time.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use langevin_kl::nalgebra::{DMatrix, DVector};
use langevin_kl::{gaussian_oracle, planner, Ensemble, Error, GaussianLaw, InitLaw, Potential};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidPotential = 3,
    DimensionMismatch = 4,
    Planning = 5,
    NonFinite = 6,
    Unstable = 7,
    SingularCovariance = 8,
    Unsupported = 9,
    Panic = 10,
    Internal = 11,
}

/// Opaque handle to a target potential.
pub struct LkPotential {
    inner: Arc<Potential>,
}

/// Opaque handle to an ensemble of chains.
pub struct LkEnsemble {
    inner: Ensemble,
}

/// A step-size schedule.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkPlan {
    pub h: f64,
    pub k: u64,
    pub epsilon: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> LkStatus {
    match err {
        Error::InvalidPotential(_) => LkStatus::InvalidPotential,
        Error::DimensionMismatch { .. } => LkStatus::DimensionMismatch,
        Error::Planning(_) => LkStatus::Planning,
        Error::InvalidArgument(_) | Error::Config(_) | Error::Grid(_) => LkStatus::InvalidArgument,
        Error::NonFinite { .. } => LkStatus::NonFinite,
        Error::Unstable { .. } => LkStatus::Unstable,
        Error::SingularCovariance => LkStatus::SingularCovariance,
        Error::Unsupported(_) => LkStatus::Unsupported,
        Error::Io(_) => LkStatus::Internal,
    }
}

struct Failure(LkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LkStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> LkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            LkStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn potential_ref<'a>(p: *const LkPotential) -> Result<&'a LkPotential, Failure> {
    p.as_ref().ok_or_else(|| null("potential"))
}

fn new_potential(pot: Potential, out: *mut *mut LkPotential) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let handle = Box::into_raw(Box::new(LkPotential { inner: Arc::new(pot) }));
    unsafe { out.write(handle) };
    Ok(())
}

fn checked_square(d: usize) -> Result<usize, Failure> {
    d.checked_mul(d).ok_or_else(|| Failure(LkStatus::InvalidArgument, format!("dimension {d} is too large")))
}

/// Writes the message of the calling thread's last failure into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full message length
/// without the terminator; 0 when there is no message.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn lk_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn lk_status_string(status: LkStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        LkStatus::Ok => b"ok\0",
        LkStatus::NullPointer => b"null pointer\0",
        LkStatus::InvalidArgument => b"invalid argument\0",
        LkStatus::InvalidPotential => b"invalid potential\0",
        LkStatus::DimensionMismatch => b"dimension mismatch\0",
        LkStatus::Planning => b"planning error\0",
        LkStatus::NonFinite => b"non-finite state\0",
        LkStatus::Unstable => b"unstable step size\0",
        LkStatus::SingularCovariance => b"singular covariance\0",
        LkStatus::Unsupported => b"unsupported\0",
        LkStatus::Panic => b"panic\0",
        LkStatus::Internal => b"internal error\0",
    };
    s.as_ptr().cast()
}

/// `U(x) = ½ Σ a_i x_i²`.
///
/// # Safety
/// `a` must point to `d` doubles; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn lk_potential_quadratic_diagonal(
    a: *const f64,
    d: usize,
    out: *mut *mut LkPotential,
) -> LkStatus {
    guard(|| {
        let a = slice(a, d, "a")?;
        new_potential(Potential::quadratic_diagonal(a.to_vec())?, out)
    })
}

/// `U(x) = ½ xᵀAx` with `A` symmetric positive definite, row-major `d × d`.
///
/// # Safety
/// `a` must point to `d*d` doubles; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn lk_potential_quadratic_full(
    a: *const f64,
    d: usize,
    out: *mut *mut LkPotential,
) -> LkStatus {
    guard(|| {
        let a = slice(a, checked_square(d)?, "a")?;
        new_potential(Potential::quadratic_full(DMatrix::from_row_slice(d, d, a))?, out)
    })
}

/// Coordinatewise Huber loss with threshold `delta` (`m = 0`, `L = 1`).
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn lk_potential_huber(delta: f64, d: usize, out: *mut *mut LkPotential) -> LkStatus {
    guard(|| new_potential(Potential::huber(delta, d)?, out))
}

/// # Safety
/// `p` must be null or a handle from an `lk_potential_*` constructor that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn lk_potential_free(p: *mut LkPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Curvature constants and dimension. Any out-pointer may be null.
///
/// # Safety
/// `p` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn lk_potential_constants(
    p: *const LkPotential,
    m: *mut f64,
    l: *mut f64,
    d: *mut usize,
) -> LkStatus {
    guard(|| {
        let p = &potential_ref(p)?.inner;
        if !m.is_null() {
            m.write(p.m());
        }
        if !l.is_null() {
            l.write(p.l());
        }
        if !d.is_null() {
            d.write(p.dim());
        }
        Ok(())
    })
}

/// # Safety
/// `x` must point to `d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lk_potential_value(
    p: *const LkPotential,
    x: *const f64,
    d: usize,
    out: *mut f64,
) -> LkStatus {
    guard(|| {
        let p = &potential_ref(p)?.inner;
        let v = p.value(slice(x, d, "x")?)?;
        write(out, v, "out")
    })
}

/// # Safety
/// `x` and `grad` must each point to `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn lk_potential_gradient(
    p: *const LkPotential,
    x: *const f64,
    d: usize,
    grad: *mut f64,
) -> LkStatus {
    guard(|| {
        let p = &potential_ref(p)?.inner;
        let g = p.gradient(slice(x, d, "x")?)?;
        slice_mut(grad, d, "grad")?.copy_from_slice(&g);
        Ok(())
    })
}

fn to_plan(p: planner::StepPlan) -> LkPlan {
    LkPlan { h: p.h, k: p.k, epsilon: p.epsilon }
}

/// Strongly convex schedule for `KL ≤ epsilon` from `N(0, I/m)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lk_plan_strong(m: f64, l: f64, d: usize, epsilon: f64, out: *mut LkPlan) -> LkStatus {
    guard(|| write(out, to_plan(planner::plan_strong(m, l, d, epsilon)?), "out"))
}

/// Weakly convex schedule. Pass `INFINITY` for `h_prime` when uncapped.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lk_plan_weak(
    c1: f64,
    c2: f64,
    h_prime: f64,
    kl0: f64,
    l: f64,
    d: usize,
    epsilon: f64,
    out: *mut LkPlan,
) -> LkStatus {
    guard(|| {
        let inputs = planner::WeakPlanInputs { c1, c2, h_prime, kl0 };
        write(out, to_plan(planner::plan_weak(inputs, l, d, epsilon)?), "out")
    })
}

fn new_ensemble(p: &LkPotential, init: &InitLaw, n: usize, seed: u64, out: *mut *mut LkEnsemble) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let inner = Ensemble::init(p.inner.clone(), init, n, seed)?;
    unsafe { out.write(Box::into_raw(Box::new(LkEnsemble { inner }))) };
    Ok(())
}

/// `n_chains` chains started from `N(0, I/m)`; needs `m > 0`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lk_ensemble_new(
    p: *const LkPotential,
    n_chains: usize,
    seed: u64,
    out: *mut *mut LkEnsemble,
) -> LkStatus {
    guard(|| new_ensemble(potential_ref(p)?, &InitLaw::GaussianOneOverM, n_chains, seed, out))
}

/// Chains started from independent coordinates `N(mean_i, var_i)`.
///
/// # Safety
/// `mean` and `var` must point to `d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lk_ensemble_new_gaussian(
    p: *const LkPotential,
    mean: *const f64,
    var: *const f64,
    d: usize,
    n_chains: usize,
    seed: u64,
    out: *mut *mut LkEnsemble,
) -> LkStatus {
    guard(|| {
        let init = InitLaw::Gaussian { mean: slice(mean, d, "mean")?.to_vec(), cov_diag: slice(var, d, "var")?.to_vec() };
        new_ensemble(potential_ref(p)?, &init, n_chains, seed, out)
    })
}

/// Advance every chain by `steps` transitions of size `h`.
///
/// # Safety
/// `e` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lk_ensemble_step(e: *mut LkEnsemble, h: f64, steps: u64) -> LkStatus {
    guard(|| {
        let e = e.as_mut().ok_or_else(|| null("ensemble"))?;
        for _ in 0..steps {
            e.inner.step(h)?;
        }
        Ok(())
    })
}

/// Number of chains, dimension and transitions taken so far. Any
/// out-pointer may be null.
///
/// # Safety
/// `e` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn lk_ensemble_shape(
    e: *const LkEnsemble,
    n_chains: *mut usize,
    d: *mut usize,
    step: *mut u64,
) -> LkStatus {
    guard(|| {
        let e = &e.as_ref().ok_or_else(|| null("ensemble"))?.inner;
        if !n_chains.is_null() {
            n_chains.write(e.n_chains());
        }
        if !d.is_null() {
            d.write(e.dim());
        }
        if !step.is_null() {
            step.write(e.step_index());
        }
        Ok(())
    })
}

/// Copy the row-major `n_chains × d` states into `out`, which must hold
/// exactly `len = n_chains * d` doubles.
///
/// # Safety
/// `e` must be a live handle; `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lk_ensemble_states(e: *const LkEnsemble, out: *mut f64, len: usize) -> LkStatus {
    guard(|| {
        let states = e.as_ref().ok_or_else(|| null("ensemble"))?.inner.states();
        if len != states.len() {
            return Err(Failure(
                LkStatus::DimensionMismatch,
                format!("buffer holds {len} values, ensemble has {}", states.len()),
            ));
        }
        slice_mut(out, len, "out")?.copy_from_slice(states);
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a live handle from `lk_ensemble_new*`.
#[no_mangle]
pub unsafe extern "C" fn lk_ensemble_free(e: *mut LkEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

unsafe fn law(mean: *const f64, cov: *const f64, d: usize, what: &str) -> Result<GaussianLaw, Failure> {
    let m = slice(mean, d, what)?;
    let c = slice(cov, checked_square(d)?, what)?;
    Ok(GaussianLaw::new(DVector::from_column_slice(m), DMatrix::from_row_slice(d, d, c))?)
}

/// `KL(p ‖ q)` in nats between `N(mean_p, cov_p)` and `N(mean_q, cov_q)`.
///
/// # Safety
/// Means must point to `d` doubles, covariances to `d*d`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lk_gaussian_kl(
    mean_p: *const f64,
    cov_p: *const f64,
    mean_q: *const f64,
    cov_q: *const f64,
    d: usize,
    out: *mut f64,
) -> LkStatus {
    guard(|| {
        let v = gaussian_oracle::kl_gaussian(&law(mean_p, cov_p, d, "p")?, &law(mean_q, cov_q, d, "q")?)?;
        write(out, v, "out")
    })
}

/// Wasserstein-2 distance between two Gaussians.
///
/// # Safety
/// As for [`lk_gaussian_kl`].
#[no_mangle]
pub unsafe extern "C" fn lk_gaussian_w2(
    mean_p: *const f64,
    cov_p: *const f64,
    mean_q: *const f64,
    cov_q: *const f64,
    d: usize,
    out: *mut f64,
) -> LkStatus {
    guard(|| {
        let v = gaussian_oracle::w2_gaussian(&law(mean_p, cov_p, d, "p")?, &law(mean_q, cov_q, d, "q")?)?;
        write(out, v, "out")
    })
}
