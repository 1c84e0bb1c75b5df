//! C ABI over the `wavekin` library.
//!
//! Conventions:
//! - every function returns a [`WkStatus`]; results go through out-pointers;
//! - objects are opaque handles created by `*_new`/producer functions and
//!   released with the matching `*_free`;
//! - the message of the last failure on the calling thread is available
//!   through [`wk_last_error`];
//! - panics never cross the boundary and are reported as `WK_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wavekin::kernels::{z_closed, GammaQuad};
use wavekin::lattice::count_resonant_pairs;
use wavekin::quadrature::c_d;
use wavekin::stochastic::{mc_spectrum, McConfig, McReport};
use wavekin::wke::{solve, Trajectory, WkeConfig};
use wavekin::{Error, ModelParams};

/// Result codes; negative values are failures grouped by category.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WkStatus {
    Ok = 0,
    NullPointer = -1,
    Usage = -2,
    Numerical = -3,
    Domain = -4,
    Io = -5,
    Internal = -70,
    Panic = -99,
}

/// Model parameters.
pub struct WkModel {
    params: ModelParams,
}

/// Monte Carlo spectrum.
pub struct WkMcReport {
    report: McReport,
}

/// Kinetic-equation trajectory.
pub struct WkTrajectory {
    traj: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> WkStatus {
    match e.category() {
        "usage" => WkStatus::Usage,
        "numerical" => WkStatus::Numerical,
        "domain" => WkStatus::Domain,
        "io" => WkStatus::Io,
        _ => WkStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> WkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            WkStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside the library".into());
            WkStatus::Panic
        }
    }
}

fn null() -> Error {
    Error::InvalidParam("null pointer".into())
}

// Null pointers get their own status rather than the generic usage code.
macro_rules! require {
    ($($p:expr),+) => {
        if $($p.is_null())||+ {
            set_error("null pointer argument".into());
            return WkStatus::NullPointer;
        }
    };
}

/// Copies `text` with a terminating NUL into `buf` when it fits; the required
/// size including the NUL is stored in `needed`.
unsafe fn write_str(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Error> {
    if !needed.is_null() {
        *needed = text.len() + 1;
    }
    if buf.is_null() || len == 0 {
        return Ok(());
    }
    if len < text.len() + 1 {
        return Err(Error::InvalidParam(format!("buffer of {len} bytes, need {}", text.len() + 1)));
    }
    ptr::copy_nonoverlapping(text.as_ptr() as *const c_char, buf, text.len());
    *buf.add(text.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread (empty after a success).
///
/// # Safety
/// `buf` must be valid for `len` bytes or null; `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn wk_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> WkStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match write_str(&msg, buf, len, needed) {
        Ok(()) => WkStatus::Ok,
        Err(_) => WkStatus::Usage,
    }
}

/// Creates a validated model.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wk_model_new(
    d: usize,
    l: f64,
    r_star: f64,
    b0: f64,
    sigma: f64,
    epsilon: f64,
    out: *mut *mut WkModel,
) -> WkStatus {
    require!(out);
    guard(|| {
        let params = ModelParams { d, l, r_star, b0, sigma, epsilon };
        params.validate()?;
        *out = Box::into_raw(Box::new(WkModel { params }));
        Ok(())
    })
}

/// Creates a model from a JSON object with keys `d, L, r_star, b0, sigma, epsilon`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wk_model_from_json(json: *const c_char, out: *mut *mut WkModel) -> WkStatus {
    require!(json, out);
    guard(|| {
        let text = CStr::from_ptr(json).to_str().map_err(|e| Error::Config(e.to_string()))?;
        let params = ModelParams::from_json_str(text)?;
        *out = Box::into_raw(Box::new(WkModel { params }));
        Ok(())
    })
}

/// Serialises a model to JSON.
///
/// # Safety
/// `model` must come from this library; see [`wk_last_error`] for buffers.
#[no_mangle]
pub unsafe extern "C" fn wk_model_to_json(model: *const WkModel, buf: *mut c_char, len: usize, needed: *mut usize) -> WkStatus {
    require!(model);
    guard(|| write_str(&(*model).params.to_json_string(), buf, len, needed))
}

/// # Safety
/// `model` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn wk_model_free(model: *mut WkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Lattice-sum constant for `d >= 3`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wk_lattice_constant(d: usize, out: *mut f64) -> WkStatus {
    require!(out);
    guard(|| {
        *out = c_d(d)?;
        Ok(())
    })
}

/// Number of ordered orthogonal pairs in the box `|m|_inf <= box_radius`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wk_count_resonant_pairs(d: usize, box_radius: i64, out: *mut u64) -> WkStatus {
    require!(out);
    guard(|| {
        *out = count_resonant_pairs(d, box_radius)?;
        Ok(())
    })
}

/// Memory kernel `j` (0..4, the last at the base frequency) at time `tau0`
/// for four damping rates, each `>= 1`.
///
/// # Safety
/// `rates` must point to four doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wk_kernel(tau0: f64, rates: *const f64, j: usize, out: *mut f64) -> WkStatus {
    require!(rates, out);
    guard(|| {
        if j >= 4 || !(tau0 >= 0.0) {
            return Err(Error::InvalidParam(format!("need j < 4 and tau0 >= 0, got j = {j}, tau0 = {tau0}")));
        }
        let g = std::slice::from_raw_parts(rates, 4);
        let quad = GammaQuad::new([g[0], g[1], g[2], g[3]])?;
        *out = z_closed(tau0, &quad, j);
        Ok(())
    })
}

/// Solves the kinetic equation from zero data with the default solver settings.
///
/// # Safety
/// `model` must come from this library; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wk_wke_solve(model: *const WkModel, eps: f64, t_end: f64, out: *mut *mut WkTrajectory) -> WkStatus {
    require!(model, out);
    guard(|| {
        let p = &(*model).params;
        let traj = solve(p, eps, t_end, &WkeConfig::new(p))?;
        *out = Box::into_raw(Box::new(WkTrajectory { traj }));
        Ok(())
    })
}

/// Number of stored times and of radii per time.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wk_trajectory_shape(traj: *const WkTrajectory, times: *mut usize, radii: *mut usize) -> WkStatus {
    require!(traj, times, radii);
    guard(|| {
        *times = (*traj).traj.times.len();
        *radii = (*traj).traj.knots.len();
        Ok(())
    })
}

/// Copies the radii, the time of step `step` and the solution at that step.
///
/// # Safety
/// `radii` and `values` must hold as many doubles as reported by
/// [`wk_trajectory_shape`]; `time` writable. Any of the three may be null.
#[no_mangle]
pub unsafe extern "C" fn wk_trajectory_step(
    traj: *const WkTrajectory,
    step: usize,
    time: *mut f64,
    radii: *mut f64,
    values: *mut f64,
) -> WkStatus {
    require!(traj);
    guard(|| {
        let t = &(*traj).traj;
        if step >= t.times.len() {
            return Err(Error::InvalidParam(format!("step {step} out of range 0..{}", t.times.len())));
        }
        if !time.is_null() {
            *time = t.times[step];
        }
        if !radii.is_null() {
            ptr::copy_nonoverlapping(t.knots.as_ptr(), radii, t.knots.len());
        }
        if !values.is_null() {
            ptr::copy_nonoverlapping(t.values[step].as_ptr(), values, t.knots.len());
        }
        Ok(())
    })
}

/// # Safety
/// `traj` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn wk_trajectory_free(traj: *mut WkTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Monte Carlo spectrum at the origin on the grid `|m|_inf <= m_cut`, in the
/// long-time regime.
///
/// # Safety
/// `model` must come from this library; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wk_simulate(
    model: *const WkModel,
    m_cut: i64,
    samples: usize,
    max_order: usize,
    seed: u64,
    out: *mut *mut WkMcReport,
) -> WkStatus {
    require!(model, out);
    guard(|| {
        let cfg = McConfig { m_cut, samples, max_order, seed, ..McConfig::default() };
        let report = mc_spectrum(&(*model).params, &cfg)?;
        *out = Box::into_raw(Box::new(WkMcReport { report }));
        Ok(())
    })
}

/// Estimate of the spectrum component of order `order` (0..=4) at the
/// origin with its standard error.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wk_mc_component(report: *const WkMcReport, order: usize, mean: *mut f64, stderr: *mut f64) -> WkStatus {
    require!(report, mean, stderr);
    guard(|| {
        let site = (*report).report.sites.first().ok_or_else(null)?;
        let c = site
            .components
            .get(order)
            .ok_or_else(|| Error::InvalidParam(format!("order {order} out of range")))?;
        *mean = c.mean;
        *stderr = c.stderr;
        Ok(())
    })
}

/// First-iterate second moment at the origin with its closed-form reference.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wk_mc_first_iterate(
    report: *const WkMcReport,
    mean: *mut f64,
    stderr: *mut f64,
    reference: *mut f64,
) -> WkStatus {
    require!(report, mean, stderr, reference);
    guard(|| {
        let site = (*report).report.sites.first().ok_or_else(null)?;
        *mean = site.a1_sq.mean;
        *stderr = site.a1_sq.stderr;
        *reference = site.a1_stationary;
        Ok(())
    })
}

/// Whole report as JSON.
///
/// # Safety
/// `report` must come from this library; see [`wk_last_error`] for buffers.
#[no_mangle]
pub unsafe extern "C" fn wk_mc_report_json(report: *const WkMcReport, buf: *mut c_char, len: usize, needed: *mut usize) -> WkStatus {
    require!(report);
    guard(|| {
        let text = serde_json::to_string(&(*report).report).map_err(Error::from)?;
        write_str(&text, buf, len, needed)
    })
}

/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn wk_mc_report_free(report: *mut WkMcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
