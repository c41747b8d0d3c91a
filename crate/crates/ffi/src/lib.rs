//! C ABI for `schauder-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`SchauderStatus`]; on failure the message is kept per thread
//! and can be copied out with [`schauder_last_error`]. Panics are caught at
//! the boundary and reported as [`SchauderStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use schauder_core::field::{AnalyticFn, Builtin, BuiltinParams, Cylinder, Partial, SpaceTimePoint};
use schauder_core::heatball::{kernel_mass, mean_value, scaling_integral, HeatBall, QuadSpec};
use schauder_core::holder::{holder_seminorm, pdist_raw, Region, ScanGrid};
use schauder_core::mollify::Mollifier;
use schauder_core::verify::{Check, SweepConfig, VerifyReport};
use schauder_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchauderStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Divergent = 4,
    NonConvergent = 5,
    Numerical = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> SchauderStatus {
    match e {
        Error::Divergent { .. } => SchauderStatus::Divergent,
        Error::NonConvergent { .. } => SchauderStatus::NonConvergent,
        Error::Io(_) => SchauderStatus::Io,
        Error::DimensionMismatch { .. }
        | Error::UnsupportedDimension(_)
        | Error::InvalidParameter { .. }
        | Error::UnknownFamily(_)
        | Error::UnsupportedOrder(_)
        | Error::TauTooLarge { .. }
        | Error::OutOfDomain(_)
        | Error::Parse(_)
        | Error::Json(_) => SchauderStatus::InvalidArgument,
        _ => SchauderStatus::Numerical,
    }
}

enum Fail {
    Status(SchauderStatus, String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(SchauderStatus::NullPointer, format!("null pointer: {what}"))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SchauderStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SchauderStatus::Ok
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside schauder-core");
            SchauderStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Status(SchauderStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `text` plus a NUL into `buf`; `needed` receives the full size.
unsafe fn copy_out(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Fail> {
    let size = text.len() + 1;
    if let Some(n) = needed.as_mut() {
        *n = size;
    }
    if buf.is_null() || len < size {
        return Err(Fail::Status(
            SchauderStatus::BufferTooSmall,
            format!("buffer of {len} bytes, {size} needed"),
        ));
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
    *buf.add(text.len()) = 0;
    Ok(())
}

fn boxed<T>(value: T, slot: &mut *mut T) {
    *slot = Box::into_raw(Box::new(value));
}

/// A test function (opaque).
pub struct SchauderFunction(AnalyticFn);

/// A discrete parabolic mollifier (opaque).
pub struct SchauderMollifier(Mollifier);

/// A sweep configuration (opaque).
pub struct SchauderConfig(SweepConfig);

/// A verification report (opaque).
pub struct SchauderReport(VerifyReport);

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn schauder_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes; `needed` must be null or
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> SchauderStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match copy_out(&msg, buf, len, needed) {
        Ok(()) => SchauderStatus::Ok,
        Err(_) => SchauderStatus::BufferTooSmall,
    }
}

/// Builds a built-in test function by name (`spatial_cusp`, `caloric_poly`, ...).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_function_builtin(
    name: *const c_char,
    dim: usize,
    alpha: f64,
    out: *mut *mut SchauderFunction,
) -> SchauderStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let b: Builtin = str_arg(name, "name")?.parse()?;
        let f = b.build(&BuiltinParams::new(dim).alpha(alpha))?;
        boxed(SchauderFunction(f), slot);
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle from `schauder_function_builtin` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn schauder_function_free(f: *mut SchauderFunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Spatial dimension of `f`, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn schauder_function_dim(f: *const SchauderFunction) -> usize {
    f.as_ref().map_or(0, |f| f.0.dim())
}

/// Evaluates `f` at `(x, t)`.
///
/// # Safety
/// `x` must hold `dim` values; `value` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_function_eval(
    f: *const SchauderFunction,
    x: *const f64,
    dim: usize,
    t: f64,
    value: *mut f64,
) -> SchauderStatus {
    guard(|| {
        let f = &as_ref(f, "function")?.0;
        let x = slice_arg(x, dim, "x")?;
        if dim != f.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                got: dim,
            }
            .into());
        }
        *self::out(value, "value")? = f.value(x, t);
        Ok(())
    })
}

/// Parabolic distance `max(|x − y|, |t − s|^{1/2})`; NaN if a pointer is null.
///
/// # Safety
/// `x` and `y` must each hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn schauder_pdist(x: *const f64, t: f64, y: *const f64, s: f64, dim: usize) -> f64 {
    if dim > 0 && (x.is_null() || y.is_null()) {
        return f64::NAN;
    }
    let (x, y) = match (slice_arg(x, dim, "x"), slice_arg(y, dim, "y")) {
        (Ok(x), Ok(y)) => (x, y),
        _ => return f64::NAN,
    };
    pdist_raw(x, t, y, s)
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_mollifier_new(
    dim: usize,
    kernel_nodes: usize,
    out: *mut *mut SchauderMollifier,
) -> SchauderStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        boxed(SchauderMollifier(Mollifier::new(dim, kernel_nodes)?), slot);
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn schauder_mollifier_free(m: *mut SchauderMollifier) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// `∂_x^{axes} ∂_t^{j} u_τ(x, t)`; `axes` lists the differentiated axes
/// with repetition (e.g. `{0, 0}` for the second derivative along axis 0).
///
/// # Safety
/// `axes` must hold `n_axes` values, `x` must hold `dim` values and
/// `value` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_mollify_at(
    m: *const SchauderMollifier,
    f: *const SchauderFunction,
    tau: f64,
    axes: *const usize,
    n_axes: usize,
    j: u8,
    x: *const f64,
    dim: usize,
    t: f64,
    value: *mut f64,
) -> SchauderStatus {
    guard(|| {
        let m = &as_ref(m, "mollifier")?.0;
        let f = &as_ref(f, "function")?.0;
        let axes: &[usize] = if n_axes == 0 {
            &[]
        } else if axes.is_null() {
            return Err(null("axes"));
        } else {
            std::slice::from_raw_parts(axes, n_axes)
        };
        if let Some(&a) = axes.iter().find(|&&a| a >= dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: a }.into());
        }
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        let x = slice_arg(x, dim, "x")?;
        *self::out(value, "value")? = m.at(f, tau, Partial::from_axes(&sorted, j), x, t)?;
        Ok(())
    })
}

/// Sampled Hölder seminorm `[f]_α` on the unit cylinder `Q_1`.
///
/// # Safety
/// `value` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_holder_seminorm(
    f: *const SchauderFunction,
    alpha: f64,
    nx: usize,
    nt: usize,
    pair_budget: u64,
    value: *mut f64,
) -> SchauderStatus {
    guard(|| {
        let f = &as_ref(f, "function")?.0;
        let region = Region::from(Cylinder::unit(f.dim()));
        let rep = holder_seminorm(f, alpha, &region, &ScanGrid::new(nx, nt), pair_budget)?;
        *self::out(value, "value")? = rep.seminorm;
        Ok(())
    })
}

/// `∬_E |x−y|²/(t−s)²` over the heat ball of radius `r` (equals `4r^d`).
///
/// # Safety
/// `value` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_kernel_mass(dim: usize, r: f64, value: *mut f64) -> SchauderStatus {
    guard(|| {
        let v = self::out(value, "value")?;
        *v = kernel_mass(&HeatBall::new(SpaceTimePoint::origin(dim), r)?, &QuadSpec::default())?.value;
        Ok(())
    })
}

/// Heat-ball mean value of `f` around `(x, t)`.
///
/// # Safety
/// `x` must hold `dim` values; `value` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_mean_value(
    f: *const SchauderFunction,
    x: *const f64,
    dim: usize,
    t: f64,
    r: f64,
    value: *mut f64,
) -> SchauderStatus {
    guard(|| {
        let f = &as_ref(f, "function")?.0;
        let center = SpaceTimePoint::new(slice_arg(x, dim, "x")?.to_vec(), t)?;
        *self::out(value, "value")? = mean_value(f, &HeatBall::new(center, r)?, &QuadSpec::default())?.value;
        Ok(())
    })
}

/// `(1/r^d) ∫ R_r(σ)^α σ^{−β} dσ`; [`SchauderStatus::Divergent`] when
/// `α/2 − β + 1 ≤ 0`.
///
/// # Safety
/// `value` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_scaling_integral(
    alpha: u32,
    beta: u32,
    r: f64,
    dim: usize,
    value: *mut f64,
) -> SchauderStatus {
    guard(|| {
        let v = self::out(value, "value")?;
        *v = scaling_integral(alpha, beta, r, dim, &QuadSpec::default())?.value;
        Ok(())
    })
}

/// The acceptance configuration with the given dimension, exponent and seed.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_config_new(
    dim: usize,
    alpha: f64,
    seed: u64,
    out: *mut *mut SchauderConfig,
) -> SchauderStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let c = SweepConfig::new(dim, alpha, seed);
        c.validate()?;
        boxed(SchauderConfig(c), slot);
        Ok(())
    })
}

/// A configuration parsed from JSON (the layout written into manifests).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_config_from_json(
    json: *const c_char,
    out: *mut *mut SchauderConfig,
) -> SchauderStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let c: SweepConfig = serde_json::from_str(str_arg(json, "json")?).map_err(Error::from)?;
        c.validate()?;
        boxed(SchauderConfig(c), slot);
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn schauder_config_free(c: *mut SchauderConfig) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Runs one named check. A check that fails still yields a report and
/// [`SchauderStatus::Ok`]; inspect it with [`schauder_report_passed`].
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_check_run(
    config: *const SchauderConfig,
    name: *const c_char,
    out: *mut *mut SchauderReport,
) -> SchauderStatus {
    guard(|| {
        let cfg = &as_ref(config, "config")?.0;
        let slot = self::out(out, "out")?;
        let check: Check = str_arg(name, "name")?.parse()?;
        boxed(SchauderReport(check.run(cfg)), slot);
        Ok(())
    })
}

/// # Safety
/// `r` must be a live handle; `passed` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_report_passed(r: *const SchauderReport, passed: *mut bool) -> SchauderStatus {
    guard(|| {
        *self::out(passed, "passed")? = as_ref(r, "report")?.0.passed;
        Ok(())
    })
}

/// Copies the report as JSON into `buf`. Call with a null `buf` to learn
/// the size through `needed`.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes; `needed` must be null or
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn schauder_report_json(
    r: *const SchauderReport,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SchauderStatus {
    guard(|| {
        let json = as_ref(r, "report")?.0.to_json()?;
        copy_out(&json, buf, len, needed)
    })
}

/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn schauder_report_free(r: *mut SchauderReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
