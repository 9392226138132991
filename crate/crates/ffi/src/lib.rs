//! C interface. Objects are handed out as opaque pointers and released with
//! the matching `*_free`. Every fallible call returns a `ReflectalStatus`; the
//! message of the last failure on the calling thread is available from
//! `reflectal_last_error`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use reflectal::action::evaluate_action;
use reflectal::cli;
use reflectal::coefficients::{preset, CoefficientSet};
use reflectal::forward::{integrate_reflected_sde, Path, ReflectedTrajectory, TimeGrid};
use reflectal::geometry::{Domain, DomainSpec};
use reflectal::rng;
use reflectal::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    OutsideDomain = 4,
    NumericalFailure = 5,
    ConfigInvalid = 6,
    Io = 7,
    Panic = 8,
    Other = 9,
}

pub struct ReflectalDomain(DomainSpec);
pub struct ReflectalCoefficients(CoefficientSet);
pub struct ReflectalTrajectory(ReflectedTrajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> ReflectalStatus {
    match err {
        Error::InvalidShape(_) => ReflectalStatus::InvalidArgument,
        Error::StartOutsideDomain | Error::InfeasiblePath { .. } | Error::OutOfLattice { .. } => {
            ReflectalStatus::OutsideDomain
        }
        Error::NumericalBlowup { .. }
        | Error::FixedPointDivergence { .. }
        | Error::SingularDiffusion { .. }
        | Error::DegenerateFit(_) => ReflectalStatus::NumericalFailure,
        Error::ConfigInvalid { .. } => ReflectalStatus::ConfigInvalid,
        Error::Io(_) => ReflectalStatus::Io,
        Error::UnknownPreset(_) | Error::InvalidParameter { .. } | Error::InvalidInput(_) => {
            ReflectalStatus::InvalidArgument
        }
        _ => ReflectalStatus::Other,
    }
}

fn fail(status: ReflectalStatus, msg: impl Into<String>) -> ReflectalStatus {
    set_error(msg.into());
    status
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), ReflectalStatus>) -> ReflectalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ReflectalStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(ReflectalStatus::Panic, "panic inside reflectal"),
    }
}

fn lift<T>(r: reflectal::Result<T>) -> Result<T, ReflectalStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn nonnull<T>(p: *const T) -> Result<(), ReflectalStatus> {
    if p.is_null() {
        Err(fail(ReflectalStatus::NullPointer, "null pointer argument"))
    } else {
        Ok(())
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Result<&'a [f64], ReflectalStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    nonnull(p)?;
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize) -> Result<&'a mut [f64], ReflectalStatus> {
    if n == 0 {
        return Ok(&mut []);
    }
    nonnull(p)?;
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, ReflectalStatus> {
    nonnull(p)?;
    CStr::from_ptr(p).to_str().map_err(|_| fail(ReflectalStatus::InvalidArgument, "string is not UTF-8"))
}

fn emit<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn reflectal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn reflectal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The closed interval `[a, b]`.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn reflectal_domain_interval(a: f64, b: f64, out: *mut *mut ReflectalDomain) -> ReflectalStatus {
    guard(|| {
        nonnull(out)?;
        emit(out, ReflectalDomain(lift(DomainSpec::interval(a, b))?));
        Ok(())
    })
}

/// The closed Euclidean ball with `dim` center coordinates.
///
/// # Safety
/// `center` must point to `dim` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reflectal_domain_ball(
    center: *const f64,
    dim: usize,
    radius: f64,
    out: *mut *mut ReflectalDomain,
) -> ReflectalStatus {
    guard(|| {
        nonnull(out)?;
        if dim == 0 {
            return Err(fail(ReflectalStatus::DimensionMismatch, "ball needs dim >= 1"));
        }
        let c = slice(center, dim)?.to_vec();
        emit(out, ReflectalDomain(lift(DomainSpec::ball(c, radius))?));
        Ok(())
    })
}

/// # Safety
/// `domain` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn reflectal_domain_free(domain: *mut ReflectalDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// # Safety
/// The handle must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn reflectal_domain_dim(domain: *const ReflectalDomain) -> usize {
    domain.as_ref().map_or(0, |d| d.0.dim())
}

/// Constraint function at `x`.
///
/// # Safety
/// `x` must point to `dim` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reflectal_domain_phi(
    domain: *const ReflectalDomain,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> ReflectalStatus {
    guard(|| {
        nonnull(domain)?;
        nonnull(out)?;
        let d = &(*domain).0;
        if dim != d.dim() {
            return Err(fail(ReflectalStatus::DimensionMismatch, format!("expected dim {}", d.dim())));
        }
        *out = d.phi(slice(x, dim)?);
        Ok(())
    })
}

/// Euclidean projection of `x` onto the closed domain.
///
/// # Safety
/// `x` and `out` must point to `dim` doubles each.
#[no_mangle]
pub unsafe extern "C" fn reflectal_domain_project(
    domain: *const ReflectalDomain,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> ReflectalStatus {
    guard(|| {
        nonnull(domain)?;
        let d = &(*domain).0;
        if dim != d.dim() {
            return Err(fail(ReflectalStatus::DimensionMismatch, format!("expected dim {}", d.dim())));
        }
        let p = slice(x, dim)?.to_vec();
        d.project(&p, slice_mut(out, dim)?);
        Ok(())
    })
}

/// Named coefficient preset. `params_json` is a JSON object of parameter
/// overrides, or NULL for the defaults.
///
/// # Safety
/// `name` and `params_json` (if non-NULL) must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn reflectal_preset_new(
    name: *const c_char,
    params_json: *const c_char,
    out: *mut *mut ReflectalCoefficients,
) -> ReflectalStatus {
    guard(|| {
        nonnull(out)?;
        let name = string(name)?;
        let params: BTreeMap<String, f64> = if params_json.is_null() {
            BTreeMap::new()
        } else {
            serde_json::from_str(string(params_json)?)
                .map_err(|e| fail(ReflectalStatus::InvalidArgument, format!("params: {e}")))?
        };
        emit(out, ReflectalCoefficients(lift(preset(name, &params))?));
        Ok(())
    })
}

/// # Safety
/// `coeffs` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn reflectal_preset_free(coeffs: *mut ReflectalCoefficients) {
    if !coeffs.is_null() {
        drop(Box::from_raw(coeffs));
    }
}

/// Simulate one reflected path on a uniform grid of `n_steps` over `[s, t]`.
/// Noise comes from the trajectory stream `(seed, index)`.
///
/// # Safety
/// Handles must be valid, `x` must point to `dim` doubles and `out` must be
/// writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn reflectal_integrate_reflected(
    coeffs: *const ReflectalCoefficients,
    domain: *const ReflectalDomain,
    x: *const f64,
    dim: usize,
    epsilon: f64,
    s: f64,
    t: f64,
    n_steps: usize,
    seed: u64,
    index: u64,
    out: *mut *mut ReflectalTrajectory,
) -> ReflectalStatus {
    guard(|| {
        nonnull(coeffs)?;
        nonnull(domain)?;
        nonnull(out)?;
        let grid = lift(TimeGrid::new(s, t, n_steps))?;
        let x = slice(x, dim)?;
        let mut r = rng::trajectory_stream(seed, index);
        let traj = lift(integrate_reflected_sde(&(*coeffs).0, &(*domain).0, x, epsilon, grid, &mut r))?;
        emit(out, ReflectalTrajectory(traj));
        Ok(())
    })
}

/// Number of grid nodes (`n_steps + 1`).
///
/// # Safety
/// The handle must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn reflectal_trajectory_len(traj: *const ReflectalTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.grid.n_nodes())
}

/// # Safety
/// The handle must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn reflectal_trajectory_dim(traj: *const ReflectalTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.dim)
}

/// Copy the state at node `i` into `out` (`dim` doubles).
///
/// # Safety
/// `out` must point to `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn reflectal_trajectory_state(
    traj: *const ReflectalTrajectory,
    i: usize,
    out: *mut f64,
    dim: usize,
) -> ReflectalStatus {
    guard(|| {
        nonnull(traj)?;
        let t = &(*traj).0;
        if dim != t.dim {
            return Err(fail(ReflectalStatus::DimensionMismatch, format!("expected dim {}", t.dim)));
        }
        if i >= t.grid.n_nodes() {
            return Err(fail(ReflectalStatus::InvalidArgument, "node index out of range"));
        }
        slice_mut(out, dim)?.copy_from_slice(t.x(i));
        Ok(())
    })
}

/// Accumulated reflection `K` at node `i`, or NaN for a bad handle or index.
///
/// # Safety
/// The handle must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn reflectal_trajectory_k(traj: *const ReflectalTrajectory, i: usize) -> f64 {
    traj.as_ref().and_then(|t| t.0.k_path.get(i).copied()).unwrap_or(f64::NAN)
}

/// # Safety
/// `traj` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn reflectal_trajectory_free(traj: *mut ReflectalTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Discrete action of a path of `n_steps + 1` points stored row-major in
/// `points` (`(n_steps + 1) * dim` doubles).
///
/// # Safety
/// Handles must be valid; `points` must hold the stated number of doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn reflectal_evaluate_action(
    coeffs: *const ReflectalCoefficients,
    domain: *const ReflectalDomain,
    points: *const f64,
    dim: usize,
    s: f64,
    t: f64,
    n_steps: usize,
    out: *mut f64,
) -> ReflectalStatus {
    guard(|| {
        nonnull(coeffs)?;
        nonnull(domain)?;
        nonnull(out)?;
        if dim == 0 {
            return Err(fail(ReflectalStatus::DimensionMismatch, "dim must be >= 1"));
        }
        let grid = lift(TimeGrid::new(s, t, n_steps))?;
        let flat = slice(points, (n_steps + 1) * dim)?;
        let pts: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let path = lift(Path::from_points(grid, &pts))?;
        *out = lift(evaluate_action(&(*coeffs).0, &(*domain).0, &path))?.action;
        Ok(())
    })
}

/// Validate and run a JSON experiment config, writing outputs to its
/// `output_dir` (or `error.json` there on failure).
///
/// # Safety
/// `config_json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn reflectal_run_config(config_json: *const c_char) -> ReflectalStatus {
    guard(|| {
        let text = string(config_json)?;
        let config = lift(cli::validate(text.as_bytes()))?;
        lift(cli::run(&config))?;
        Ok(())
    })
}
