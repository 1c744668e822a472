//! C ABI for the singletbb library.
//!
//! Conventions:
//! * Every constructor returns an opaque pointer, or NULL on failure.
//! * Functions returning `int32_t` use 0 for success and a negative
//!   `SBB_ERR_*` code on failure.
//! * After any failure, `sbb_last_error_message` returns a thread-local,
//!   NUL-terminated description valid until the next failing call on the
//!   same thread.
//! * Strings returned by the library must be released with `sbb_string_free`;
//!   handles with their matching `*_free` (all NULL-tolerant).

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_double, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use singletbb::bb::{precompute_propagators, BBSequence, PropagatorCache, SequenceFitness};
use singletbb::config::RunConfig;
use singletbb::error::Error;
use singletbb::ga::{optimize_with_cache, OptimizationProblem};
use singletbb::pulse_io::{format_pulse_table, parse_pulse_table};
use singletbb::relax::{fit_monoexponential, FitModel};
use singletbb::spin::{build_thermal_state, validate_z_commutation, SpinSystem};

pub const SBB_OK: c_int = 0;
pub const SBB_ERR_ARGUMENT: c_int = -1;
pub const SBB_ERR_PARSE: c_int = -2;
pub const SBB_ERR_NUMERIC: c_int = -3;
pub const SBB_ERR_IO: c_int = -4;
pub const SBB_ERR_PANIC: c_int = -5;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code_for(err: &Error) -> c_int {
    match err {
        Error::Config(_) | Error::PulseTable(_) => SBB_ERR_PARSE,
        Error::Io(_) => SBB_ERR_IO,
        Error::Eigensolver(_) | Error::NotHermitian { .. } | Error::NotUnitary { .. } => {
            SBB_ERR_NUMERIC
        }
        _ => SBB_ERR_ARGUMENT,
    }
}

fn fail<T>(err: &Error) -> (c_int, Option<T>) {
    set_error(&err.to_string());
    (code_for(err), None)
}

/// Run `f`, converting panics into SBB_ERR_PANIC instead of unwinding into C.
fn guarded<T>(f: impl FnOnce() -> Result<T, Error>) -> Result<T, c_int> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => {
            let (code, _) = fail::<()>(&e);
            Err(code)
        }
        Err(_) => {
            set_error("internal panic");
            Err(SBB_ERR_PANIC)
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(Error::InvalidArgument("NULL string argument".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument("string is not valid UTF-8".into()))
}

fn into_handle<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, Error> {
    p.as_ref()
        .ok_or_else(|| Error::InvalidArgument("NULL handle".into()))
}

// ---------------------------------------------------------------------------
// Opaque handle types.

pub struct SbbConfig(RunConfig);
pub struct SbbSystem {
    system: SpinSystem,
    polarizations: Vec<(String, f64)>,
}
pub struct SbbCache(PropagatorCache);
pub struct SbbSequence(BBSequence);

// ---------------------------------------------------------------------------
// Error reporting.

/// Thread-local message describing the most recent failure.
#[no_mangle]
pub extern "C" fn sbb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn sbb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Config.

#[no_mangle]
pub unsafe extern "C" fn sbb_config_parse(text: *const c_char) -> *mut SbbConfig {
    guarded(|| {
        let text = cstr(text)?;
        Ok(SbbConfig(RunConfig::parse(text)?))
    })
    .map(into_handle)
    .unwrap_or(std::ptr::null_mut())
}

#[no_mangle]
pub unsafe extern "C" fn sbb_config_load(path: *const c_char) -> *mut SbbConfig {
    guarded(|| {
        let path = cstr(path)?;
        Ok(SbbConfig(RunConfig::load(Path::new(path))?))
    })
    .map(into_handle)
    .unwrap_or(std::ptr::null_mut())
}

#[no_mangle]
pub unsafe extern "C" fn sbb_config_free(cfg: *mut SbbConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---------------------------------------------------------------------------
// Spin system.

#[no_mangle]
pub unsafe extern "C" fn sbb_system_build(cfg: *const SbbConfig) -> *mut SbbSystem {
    guarded(|| {
        let cfg = borrow(cfg)?;
        Ok(SbbSystem {
            system: cfg.0.build_system()?,
            polarizations: cfg.0.polarizations(),
        })
    })
    .map(into_handle)
    .unwrap_or(std::ptr::null_mut())
}

#[no_mangle]
pub unsafe extern "C" fn sbb_system_free(sys: *mut SbbSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Hilbert-space dimension, or a negative error code.
#[no_mangle]
pub unsafe extern "C" fn sbb_system_dim(sys: *const SbbSystem) -> i64 {
    match guarded(|| Ok(borrow(sys)?.system.dim() as i64)) {
        Ok(d) => d,
        Err(code) => code as i64,
    }
}

#[no_mangle]
pub unsafe extern "C" fn sbb_system_nspins(sys: *const SbbSystem) -> i64 {
    match guarded(|| Ok(borrow(sys)?.system.nspins() as i64)) {
        Ok(d) => d,
        Err(code) => code as i64,
    }
}

/// 1 if the internal Hamiltonian commutes with every collective z rotation,
/// 0 if not, negative error code otherwise.
#[no_mangle]
pub unsafe extern "C" fn sbb_system_z_commutes(sys: *const SbbSystem) -> c_int {
    match guarded(|| {
        let report = validate_z_commutation(&borrow(sys)?.system)?;
        Ok(report.passed() as c_int)
    }) {
        Ok(v) => v,
        Err(code) => code,
    }
}

// ---------------------------------------------------------------------------
// Propagator cache.

#[no_mangle]
pub unsafe extern "C" fn sbb_cache_new(sys: *const SbbSystem, dt_s: c_double) -> *mut SbbCache {
    guarded(|| {
        let sys = borrow(sys)?;
        Ok(SbbCache(precompute_propagators(&sys.system, dt_s)?))
    })
    .map(into_handle)
    .unwrap_or(std::ptr::null_mut())
}

#[no_mangle]
pub unsafe extern "C" fn sbb_cache_free(cache: *mut SbbCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}

// ---------------------------------------------------------------------------
// Pulse sequences.

/// Parse a pulse table in the text format produced by the optimizer.
#[no_mangle]
pub unsafe extern "C" fn sbb_sequence_parse(text: *const c_char) -> *mut SbbSequence {
    guarded(|| {
        let text = cstr(text)?;
        Ok(SbbSequence(parse_pulse_table(text)?.sequence))
    })
    .map(into_handle)
    .unwrap_or(std::ptr::null_mut())
}

#[no_mangle]
pub unsafe extern "C" fn sbb_sequence_free(seq: *mut SbbSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sbb_sequence_len(seq: *const SbbSequence) -> i64 {
    match guarded(|| Ok(borrow(seq)?.0.len() as i64)) {
        Ok(v) => v,
        Err(code) => code as i64,
    }
}

/// Serialize a sequence against a system's channel labels and amplitudes.
/// Returns a heap string (release with sbb_string_free) or NULL.
#[no_mangle]
pub unsafe extern "C" fn sbb_sequence_format(
    seq: *const SbbSequence,
    sys: *const SbbSystem,
) -> *mut c_char {
    guarded(|| {
        let seq = borrow(seq)?;
        let sys = borrow(sys)?;
        let labels: Vec<String> = sys
            .system
            .channels()
            .iter()
            .map(|c| c.label.clone())
            .collect();
        let amps: Vec<f64> = sys
            .system
            .channels()
            .iter()
            .map(|c| c.rf_amplitude_hz)
            .collect();
        let text = format_pulse_table(&seq.0, &labels, &amps)?;
        CString::new(text).map_err(|_| Error::InvalidArgument("interior NUL".into()))
    })
    .map(CString::into_raw)
    .unwrap_or(std::ptr::null_mut())
}

// ---------------------------------------------------------------------------
// Evaluation and optimization.

/// Singlet overlap Q of the thermal state propagated through `seq`;
/// written to `q_out`. Returns 0 or a negative error code.
#[no_mangle]
pub unsafe extern "C" fn sbb_evaluate_fitness(
    cache: *const SbbCache,
    sys: *const SbbSystem,
    seq: *const SbbSequence,
    q_out: *mut c_double,
) -> c_int {
    match guarded(|| {
        if q_out.is_null() {
            return Err(Error::InvalidArgument("NULL output pointer".into()));
        }
        let cache = borrow(cache)?;
        let sys = borrow(sys)?;
        let seq = borrow(seq)?;
        let rho = build_thermal_state(&sys.system, &sys.polarizations)?;
        let factor = singletbb::bb::singlet_projector_factor(&sys.system);
        let evaluator = SequenceFitness::new(&cache.0, &rho, factor)?;
        Ok(evaluator.evaluate(&seq.0)?)
    }) {
        Ok(q) => {
            *q_out = q;
            SBB_OK
        }
        Err(code) => code,
    }
}

/// Run the genetic optimizer for the config's GA settings with an explicit
/// master seed. On success returns the best sequence and writes its singlet
/// overlap to `q_out` (may be NULL).
#[no_mangle]
pub unsafe extern "C" fn sbb_optimize(
    cfg: *const SbbConfig,
    seed: u64,
    q_out: *mut c_double,
) -> *mut SbbSequence {
    guarded(|| {
        let cfg = borrow(cfg)?;
        let sys = cfg.0.build_system()?;
        let ga = cfg.0.ga_config(Some(seed))?;
        let template = cfg.0.template()?;
        let cache = precompute_propagators(&sys, template.dt())?;
        let problem = OptimizationProblem {
            system: &sys,
            polarizations: cfg.0.polarizations(),
        };
        let outcome = optimize_with_cache(&problem, &ga, &template, &cache)?;
        if !q_out.is_null() {
            *q_out = outcome.best_q;
        }
        Ok(SbbSequence(outcome.best))
    })
    .map(into_handle)
    .unwrap_or(std::ptr::null_mut())
}

// ---------------------------------------------------------------------------
// Relaxation utilities.

pub const SBB_FIT_DECAY: c_int = 0;
pub const SBB_FIT_INVERSION: c_int = 1;

/// Least-squares monoexponential fit. `model` is SBB_FIT_DECAY or
/// SBB_FIT_INVERSION. Outputs may not be NULL.
#[no_mangle]
pub unsafe extern "C" fn sbb_fit_monoexponential(
    times: *const c_double,
    values: *const c_double,
    n: usize,
    model: c_int,
    amplitude_out: *mut c_double,
    time_constant_out: *mut c_double,
    residual_rms_out: *mut c_double,
) -> c_int {
    match guarded(|| {
        if times.is_null() || values.is_null() {
            return Err(Error::InvalidArgument("NULL data pointer".into()));
        }
        if amplitude_out.is_null() || time_constant_out.is_null() || residual_rms_out.is_null() {
            return Err(Error::InvalidArgument("NULL output pointer".into()));
        }
        let model = match model {
            SBB_FIT_DECAY => FitModel::Decay,
            SBB_FIT_INVERSION => FitModel::InversionRecovery,
            _ => return Err(Error::InvalidArgument(format!("unknown model {model}"))),
        };
        let times = std::slice::from_raw_parts(times, n);
        let values = std::slice::from_raw_parts(values, n);
        Ok(fit_monoexponential(times, values, model)?)
    }) {
        Ok(fit) => {
            *amplitude_out = fit.amplitude;
            *time_constant_out = fit.time_constant;
            *residual_rms_out = fit.residual_rms;
            SBB_OK
        }
        Err(code) => code,
    }
}

/// Singlet order after a spin-lock: eps0 * exp(-tau / t_singlet).
#[no_mangle]
pub extern "C" fn sbb_spinlock_decay(eps0: c_double, tau_s: c_double, t_singlet_s: c_double) -> c_double {
    if tau_s < 0.0 || t_singlet_s <= 0.0 {
        set_error("spinlock_decay: tau >= 0 and t_singlet > 0 required");
        return f64::NAN;
    }
    singletbb::relax::spinlock_decay(eps0, tau_s, t_singlet_s)
}

/// Per-scan sensitivity gain; the time reduction is the square of the result.
#[no_mangle]
pub extern "C" fn sbb_sensitivity_gain(enhancement: c_double, recycle_ratio: c_double) -> c_double {
    match singletbb::relax::sensitivity_gain(enhancement, recycle_ratio) {
        Ok((g, _)) => g,
        Err(e) => {
            set_error(&e.to_string());
            f64::NAN
        }
    }
}
