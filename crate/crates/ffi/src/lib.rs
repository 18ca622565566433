//! C ABI over the `regime_dual` library.
//!
//! Objects cross the boundary as opaque handles (`RdModel`, `RdSurface`)
//! that the caller releases with the matching `*_free` function. Every
//! fallible call returns an [`RdStatus`]; on failure a message is available
//! from [`rd_last_error_message`] until the next call on the same thread.
//! Panics are caught and reported as [`RdStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use regime_dual::blr::check_blr;
use regime_dual::error::Error;
use regime_dual::pide::{solve_lambda, PideConfig, ValueSurface};
use regime_dual::strategy::{feedback_controls, primal_value, StrategyField};
use regime_dual::ModelConfig;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed or incomplete model JSON.
    Config = 3,
    InvalidArgument = 4,
    /// Solver or density diagnostics (bound breach, positivity, support).
    Numerical = 5,
    Panic = 6,
}

/// Parsed problem instance.
pub struct RdModel {
    model: ModelConfig,
}

/// Solved value surface.
pub struct RdSurface {
    surface: ValueSurface,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> RdStatus {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Io(_) => RdStatus::Config,
        Error::InvalidArgument(_) => RdStatus::InvalidArgument,
        _ => RdStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (RdStatus, String)>) -> RdStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside regime_dual".into());
            RdStatus::Panic
        }
    }
}

fn lib(e: Error) -> (RdStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RdStatus, String) {
    (RdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (RdStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), (RdStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Parses a model from a NUL-terminated JSON document.
///
/// # Safety
/// `json` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_model_from_json(json: *const c_char, out: *mut *mut RdModel) -> RdStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (RdStatus::InvalidUtf8, e.to_string()))?;
        let model = ModelConfig::from_json_str(text).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(RdModel { model })), "out")
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`rd_model_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rd_model_free(model: *mut RdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Solves the value surface on an `n_x × n_t` grid; `m_clamp <= 0` disables
/// the control clamp.
///
/// # Safety
/// `model` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_solve(
    model: *const RdModel,
    n_x: usize,
    n_t: usize,
    m_clamp: f64,
    out: *mut *mut RdSurface,
) -> RdStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let config = PideConfig {
            m_clamp: (m_clamp > 0.0).then_some(m_clamp),
            ..PideConfig::with_grid(n_x, n_t)
        };
        let surface = solve_lambda(&m.model, &config).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(RdSurface { surface })), "out")
    })
}

/// Releases a surface; null is ignored.
///
/// # Safety
/// `surface` must come from [`rd_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rd_surface_free(surface: *mut RdSurface) {
    if !surface.is_null() {
        drop(Box::from_raw(surface));
    }
}

fn check_point(t: f64, x: f64, s: &ValueSurface) -> Result<(), (RdStatus, String)> {
    if !(0.0..=s.horizon()).contains(&t) || !(0.0..=1.0).contains(&x) {
        return Err((
            RdStatus::InvalidArgument,
            format!("(t, x) = ({t}, {x}) outside [0, {}] × [0, 1]", s.horizon()),
        ));
    }
    Ok(())
}

/// `Λ̂(t, x)` by bilinear interpolation.
///
/// # Safety
/// `surface` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_surface_value(surface: *const RdSurface, t: f64, x: f64, out: *mut f64) -> RdStatus {
    guard(|| {
        let s = &borrow(surface, "surface")?.surface;
        check_point(t, x, s)?;
        write_out(out, s.value(t, x), "out")
    })
}

/// Optimal jump control `ν̂(t, x, z)`.
///
/// # Safety
/// `surface` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_nu_hat(surface: *const RdSurface, t: f64, x: f64, z: f64, out: *mut f64) -> RdStatus {
    guard(|| {
        let s = &borrow(surface, "surface")?.surface;
        check_point(t, x, s)?;
        let nu = s.nu_hat(t, x, z).map_err(lib)?;
        write_out(out, nu, "out")
    })
}

/// Investment `ϖ` and consumption `c` for wealth `v` at `(t, x)`.
///
/// # Safety
/// `surface` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rd_feedback_controls(
    surface: *const RdSurface,
    t: f64,
    x: f64,
    v: f64,
    out_invest: *mut f64,
    out_consume: *mut f64,
) -> RdStatus {
    guard(|| {
        let s = &borrow(surface, "surface")?.surface;
        check_point(t, x, s)?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err((RdStatus::InvalidArgument, format!("wealth must be non-negative, got {v}")));
        }
        let field = StrategyField::new(s);
        let (a, c) = feedback_controls(&field, t, x, v);
        write_out(out_invest, a, "out_invest")?;
        write_out(out_consume, c, "out_consume")
    })
}

/// Primal value `J = (1/κ) v^κ Λ̂^{1−κ}`.
///
/// # Safety
/// `surface` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_primal_value(surface: *const RdSurface, t: f64, x: f64, v: f64, out: *mut f64) -> RdStatus {
    guard(|| {
        let s = &borrow(surface, "surface")?.surface;
        check_point(t, x, s)?;
        let j = primal_value(v, s, t, x, &s.model.utility).map_err(lib)?;
        write_out(out, j, "out")
    })
}

/// Bounded-likelihood-ratio report as a JSON string; release it with
/// [`rd_string_free`]. A non-positive `budget` means no budget.
///
/// # Safety
/// `model` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rd_blr_check_json(model: *const RdModel, budget: f64, out: *mut *mut c_char) -> RdStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let report = check_blr(&m.model.signal, (budget > 0.0).then_some(budget)).map_err(lib)?;
        let text = serde_json::to_string(&report).map_err(|e| lib(e.into()))?;
        let c = CString::new(text).map_err(|e| (RdStatus::InvalidUtf8, e.to_string()))?;
        write_out(out, c.into_raw(), "out")
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn rd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}
