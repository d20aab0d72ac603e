//! C ABI over the core integrators.
//!
//! Conventions: handles are opaque pointers owned by the caller and released
//! with the matching `_free`; every function returns an [`LtpeStatus`] and,
//! on failure, stores a thread-local message readable through
//! [`ltpe_last_error_message`]. Output parameters are written only on
//! `LTPE_STATUS_OK`. No call unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ltpe::error::Error;
use ltpe::estimate::{endpoint_samples, expectation, TestFunction};
use ltpe::linop::ShiftedSolver;
use ltpe::model::{allen_cahn, ginzburg_landau, mean_reverting, SemiLinearModel};
use ltpe::scheme::{ltpe_step, max_stable_stepsize, SchemeParams};

/// Status of a call. Mirrors the library's error cases; anything the map
/// below does not name comes back as `INTERNAL`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtpeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    DimensionMismatch = 3,
    NotDissipative = 4,
    StepTooLarge = 5,
    StepFailure = 6,
    Internal = 7,
}

/// Test functions addressable over the ABI, in the library's order.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtpePhi {
    AtanNorm = 0,
    Gauss = 1,
    CosNorm = 2,
    SinNormSq = 3,
}

impl From<LtpePhi> for TestFunction {
    fn from(phi: LtpePhi) -> Self {
        match phi {
            LtpePhi::AtanNorm => TestFunction::AtanNorm,
            LtpePhi::Gauss => TestFunction::Gauss,
            LtpePhi::CosNorm => TestFunction::CosNorm,
            LtpePhi::SinNormSq => TestFunction::SinNormSq,
        }
    }
}

/// Opaque model handle.
pub struct LtpeModel {
    inner: SemiLinearModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn remember(msg: &str) {
    let sanitized: String = msg
        .chars()
        .map(|c| if c == '\0' { ' ' } else { c })
        .collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> LtpeStatus {
    match err {
        Error::InvalidParameter(_) | Error::Config(_) => LtpeStatus::InvalidParameter,
        Error::DimensionMismatch { .. } => LtpeStatus::DimensionMismatch,
        Error::NotDissipative(_) | Error::NoAdmissibleStep(_) => LtpeStatus::NotDissipative,
        Error::StepTooLarge { .. } => LtpeStatus::StepTooLarge,
        Error::StepFailure { .. } | Error::TrajectoryFailure { .. } => LtpeStatus::StepFailure,
        _ => LtpeStatus::Internal,
    }
}

fn fail(err: Error) -> LtpeStatus {
    remember(&err.to_string());
    status_of(&err)
}

/// Run a fallible body without letting a panic cross the ABI.
fn guarded(body: impl FnOnce() -> LtpeStatus) -> LtpeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            remember("internal panic");
            LtpeStatus::Internal
        }
    }
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn ltpe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

fn deliver_model(built: Result<SemiLinearModel, Error>, out: *mut *mut LtpeModel) -> LtpeStatus {
    if out.is_null() {
        remember("out pointer is null");
        return LtpeStatus::NullPointer;
    }
    match built {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(LtpeModel { inner })) };
            LtpeStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Scalar stochastic Ginzburg-Landau model.
#[no_mangle]
pub extern "C" fn ltpe_model_ginzburg_landau(
    alpha: f64,
    sigma: f64,
    x0: f64,
    out: *mut *mut LtpeModel,
) -> LtpeStatus {
    guarded(|| deliver_model(ginzburg_landau(alpha, sigma, x0), out))
}

/// Scalar mean-reverting model with quadratic noise.
#[no_mangle]
pub extern "C" fn ltpe_model_mean_reverting(
    b: f64,
    alpha: f64,
    beta: f64,
    sigma: f64,
    x0: f64,
    out: *mut *mut LtpeModel,
) -> LtpeStatus {
    guarded(|| deliver_model(mean_reverting(b, alpha, beta, sigma, x0), out))
}

/// Finite-difference Allen-Cahn chain on `k - 1` interior nodes.
#[no_mangle]
pub extern "C" fn ltpe_model_allen_cahn(k: usize, out: *mut *mut LtpeModel) -> LtpeStatus {
    guarded(|| deliver_model(allen_cahn(k), out))
}

/// Release a model handle. A null pointer is a no-op.
#[no_mangle]
pub extern "C" fn ltpe_model_free(model: *mut LtpeModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

unsafe fn model_ref<'a>(model: *const LtpeModel) -> Result<&'a SemiLinearModel, LtpeStatus> {
    if model.is_null() {
        remember("model handle is null");
        return Err(LtpeStatus::NullPointer);
    }
    Ok(&(*model).inner)
}

/// State dimension of the model.
#[no_mangle]
pub extern "C" fn ltpe_model_dim(model: *const LtpeModel, out: *mut usize) -> LtpeStatus {
    guarded(|| {
        let m = match unsafe { model_ref(model) } {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out.is_null() {
            remember("out pointer is null");
            return LtpeStatus::NullPointer;
        }
        unsafe { *out = m.dim() };
        LtpeStatus::Ok
    })
}

/// Largest admissible step size for the given scheme knobs. `out_binding`,
/// when non-null, receives a pointer to a static name of the binding bound;
/// it must not be freed.
#[no_mangle]
pub extern "C" fn ltpe_max_stable_stepsize(
    model: *const LtpeModel,
    theta: f64,
    p: f64,
    kappa: f64,
    out_h_max: *mut f64,
    out_binding: *mut *const c_char,
) -> LtpeStatus {
    guarded(|| {
        let m = match unsafe { model_ref(model) } {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out_h_max.is_null() {
            remember("out pointer is null");
            return LtpeStatus::NullPointer;
        }
        match max_stable_stepsize(m, theta, p, kappa) {
            Ok(bounds) => {
                unsafe { *out_h_max = bounds.h_max };
                if !out_binding.is_null() {
                    // the names are 'static NUL-free ASCII with a NUL added
                    // per name exactly once below
                    unsafe { *out_binding = static_name(bounds.binding) };
                }
                LtpeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

fn static_name(name: &'static str) -> *const c_char {
    macro_rules! table {
        ($($n:literal),* $(,)?) => {
            match name {
                $($n => concat!($n, "\0").as_ptr() as *const c_char,)*
                _ => "unknown\0".as_ptr() as *const c_char,
            }
        };
    }
    table!(
        "linear-decay",
        "moment-order",
        "stiffness-cap",
        "linear-contraction",
        "nonlinear-contraction",
        "unit-cap",
    )
}

/// One projected step: reads `y[dim]` and `dw[noise_dim]`, writes `out[dim]`.
#[no_mangle]
pub extern "C" fn ltpe_step_once(
    model: *const LtpeModel,
    theta: f64,
    h: f64,
    y: *const f64,
    dw: *const f64,
    out: *mut f64,
) -> LtpeStatus {
    guarded(|| {
        let m = match unsafe { model_ref(model) } {
            Ok(m) => m,
            Err(s) => return s,
        };
        if y.is_null() || dw.is_null() || out.is_null() {
            remember("state, noise or out pointer is null");
            return LtpeStatus::NullPointer;
        }
        let params = match SchemeParams::new(theta, h) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let solver = match ShiftedSolver::new(m.linear(), theta, h) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let y = unsafe { std::slice::from_raw_parts(y, m.dim()) };
        let dw = unsafe { std::slice::from_raw_parts(dw, m.noise_dim()) };
        match ltpe_step(m, params, &solver, y, dw) {
            Ok(next) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out, m.dim()) };
                out.copy_from_slice(&next);
                LtpeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Monte Carlo mean of a test function at the horizon, with its 95%
/// half-width. Deterministic in `seed`.
#[no_mangle]
pub extern "C" fn ltpe_expectation(
    model: *const LtpeModel,
    theta: f64,
    h: f64,
    phi: LtpePhi,
    trajectories: usize,
    t_horizon: f64,
    seed: u64,
    out_mean: *mut f64,
    out_half_width: *mut f64,
) -> LtpeStatus {
    guarded(|| {
        let m = match unsafe { model_ref(model) } {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out_mean.is_null() || out_half_width.is_null() {
            remember("out pointer is null");
            return LtpeStatus::NullPointer;
        }
        let params = match SchemeParams::new(theta, h) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match expectation(m, params, phi.into(), trajectories, t_horizon, seed) {
            Ok((mean, half_width)) => {
                unsafe {
                    *out_mean = mean;
                    *out_half_width = half_width;
                }
                LtpeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Endpoint samples of a scalar model: writes `trajectories` values into
/// `out`. Fails with `DIMENSION_MISMATCH` on multi-dimensional models.
#[no_mangle]
pub extern "C" fn ltpe_endpoint_samples(
    model: *const LtpeModel,
    theta: f64,
    h: f64,
    trajectories: usize,
    t_horizon: f64,
    seed: u64,
    out: *mut f64,
) -> LtpeStatus {
    guarded(|| {
        let m = match unsafe { model_ref(model) } {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out.is_null() {
            remember("out pointer is null");
            return LtpeStatus::NullPointer;
        }
        let params = match SchemeParams::new(theta, h) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match endpoint_samples(m, params, trajectories, t_horizon, seed) {
            Ok(values) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out, trajectories) };
                out.copy_from_slice(&values);
                LtpeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;
    use std::ptr;

    fn gl() -> *mut LtpeModel {
        let mut handle: *mut LtpeModel = ptr::null_mut();
        let status = ltpe_model_ginzburg_landau(-2.0, 0.5, 1.0, &mut handle);
        assert_eq!(status, LtpeStatus::Ok);
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn model_lifecycle_and_dim() {
        let handle = gl();
        let mut dim = 0usize;
        assert_eq!(ltpe_model_dim(handle, &mut dim), LtpeStatus::Ok);
        assert_eq!(dim, 1);
        ltpe_model_free(handle);
        ltpe_model_free(ptr::null_mut());
    }

    #[test]
    fn null_handles_are_reported_not_crashed() {
        let mut dim = 0usize;
        assert_eq!(
            ltpe_model_dim(ptr::null(), &mut dim),
            LtpeStatus::NullPointer
        );
        let msg = unsafe { CStr::from_ptr(ltpe_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("null"));
    }

    #[test]
    fn invalid_construction_sets_a_message() {
        let mut handle: *mut LtpeModel = ptr::null_mut();
        // positive linear part: not dissipative
        let status = ltpe_model_ginzburg_landau(2.0, 0.5, 1.0, &mut handle);
        assert_ne!(status, LtpeStatus::Ok);
        assert!(handle.is_null());
        let msg = unsafe { CStr::from_ptr(ltpe_last_error_message()) };
        assert!(!msg.to_bytes().is_empty());
    }

    #[test]
    fn stepsize_and_binding_name_cross_the_boundary() {
        let handle = gl();
        let mut h_max = 0.0f64;
        let mut name: *const c_char = ptr::null();
        let status = ltpe_max_stable_stepsize(handle, 1.0, 2.0, 0.5, &mut h_max, &mut name);
        assert_eq!(status, LtpeStatus::Ok);
        assert!(h_max > 0.0 && h_max <= 1.0);
        let name = unsafe { CStr::from_ptr(name) }.to_str().unwrap();
        assert_eq!(name, "nonlinear-contraction");
        ltpe_model_free(handle);
    }

    #[test]
    fn step_matches_the_library_call() {
        let handle = gl();
        let y = [0.75f64];
        let dw = [0.1f64];
        let mut out = [0.0f64];
        assert_eq!(
            ltpe_step_once(
                handle,
                1.0,
                0.03125,
                y.as_ptr(),
                dw.as_ptr(),
                out.as_mut_ptr()
            ),
            LtpeStatus::Ok
        );
        let model = ginzburg_landau(-2.0, 0.5, 1.0).unwrap();
        let params = SchemeParams::new(1.0, 0.03125).unwrap();
        let solver = ShiftedSolver::new(model.linear(), 1.0, 0.03125).unwrap();
        let want = ltpe_step(&model, params, &solver, &y, &dw).unwrap();
        assert_eq!(out[0], want[0]);
        ltpe_model_free(handle);
    }

    #[test]
    fn estimators_run_and_are_seed_deterministic() {
        let handle = gl();
        let mut mean = [0.0f64; 2];
        let mut hw = [0.0f64; 2];
        for i in 0..2 {
            let status = ltpe_expectation(
                handle,
                0.5,
                0.03125,
                LtpePhi::Gauss,
                400,
                2.0,
                99,
                &mut mean[i],
                &mut hw[i],
            );
            assert_eq!(status, LtpeStatus::Ok);
        }
        assert_eq!(mean[0], mean[1]);
        assert_eq!(hw[0], hw[1]);
        assert!(hw[0] > 0.0);

        let mut samples = vec![0.0f64; 64];
        let status = ltpe_endpoint_samples(handle, 1.0, 0.03125, 64, 1.0, 7, samples.as_mut_ptr());
        assert_eq!(status, LtpeStatus::Ok);
        assert!(samples.iter().all(|v| v.is_finite()));
        ltpe_model_free(handle);

        // multi-dimensional endpoint sampling must refuse
        let mut ac: *mut LtpeModel = ptr::null_mut();
        assert_eq!(ltpe_model_allen_cahn(4, &mut ac), LtpeStatus::Ok);
        let status = ltpe_endpoint_samples(ac, 1.0, 0.001, 4, 0.5, 7, samples.as_mut_ptr());
        assert_ne!(status, LtpeStatus::Ok);
        ltpe_model_free(ac);
    }
}
