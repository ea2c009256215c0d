//! C ABI for the tristirap simulator.
//!
//! Scenarios and trajectories are opaque handles owned by the caller and
//! released with the matching `ts_*_free`. Every fallible call returns a
//! [`TsStatus`]; on failure a message is available from
//! [`ts_last_error_message`] until the next failing call on the same thread.
//! Units follow the library: rad/us and us.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tristirap::config::{load_str, ConfigError, LoadedConfig};
use tristirap::dressed::{dressed_frame, resonance_detuning, Mode};
use tristirap::output::{timeseries_row, TIMESERIES_COLUMNS};
use tristirap::propagator::TimeSeries;
use tristirap::qcore::{DensityMatrix, Level};
use tristirap::scenarios::{
    run_full_transfer, run_optical_pumping_prep, run_partial_stirap, run_reverse_transfer, ScenarioParams,
};
use tristirap::{presets, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsStatus {
    TsOk = 0,
    /// A required pointer argument was NULL.
    TsErrNull = 1,
    /// Bad argument value (index out of range, invalid UTF-8, unknown preset).
    TsErrInvalidArg = 2,
    /// The configuration text could not be read or parsed.
    TsErrConfig = 3,
    /// The configuration parsed but violates a constraint.
    TsErrValidation = 4,
    /// The simulation itself failed (step-size underflow, invariant breach, timeout).
    TsErrIntegrator = 5,
    /// A Rust panic was caught at the boundary.
    TsErrPanic = 6,
}

/// Number of values per trajectory sample; see [`ts_column_name`].
pub const TS_SAMPLE_WIDTH: usize = 10;

/// Opaque scenario: a resolved configuration with one or more runs.
pub struct TsScenario {
    config: LoadedConfig,
}

/// Opaque sampled trajectory.
pub struct TsSeries {
    series: TimeSeries,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct TsFullTransfer {
    pub f_after_stirap: f64,
    pub p_q_final: f64,
    /// Start of the C switch-off (us).
    pub stirap_end: f64,
    /// 1 if every sample satisfied the density-matrix invariants.
    pub invariants_hold: c_int,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct TsReverseTransfer {
    pub prep_fidelity_to_qs: f64,
    pub final_rho_dd: f64,
    pub invariants_hold: c_int,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct TsPartialStirap {
    pub t_freeze: f64,
    pub min_fidelity: f64,
    pub final_fidelity: f64,
    pub invariants_hold: c_int,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct TsOpticalPumping {
    pub pump_time: f64,
    pub final_rho_dd: f64,
}

/// Dressed-state quantities of the weak S-Q coupling.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct TsDressedFrame {
    pub alpha_c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_q: f64,
    pub lambda_s: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

struct Failure(TsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::StepSizeUnderflow { .. } | Error::InvariantBreach { .. } | Error::Timeout { .. } => {
                TsStatus::TsErrIntegrator
            }
            _ => TsStatus::TsErrInvalidArg,
        };
        Failure(status, e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Validation(_) => TsStatus::TsErrValidation,
            _ => TsStatus::TsErrConfig,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(TsStatus::TsErrInvalidArg, msg.into())
}

/// Runs `f`, mapping errors and panics to a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsStatus::TsOk,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            TsStatus::TsErrPanic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(TsStatus::TsErrNull, format!("{name} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(TsStatus::TsErrNull, format!("{name} is NULL")))
}

unsafe fn scenario_params(scenario: *const TsScenario, run: usize) -> Result<ScenarioParams, Failure> {
    let s = scenario.as_ref().ok_or_else(|| Failure(TsStatus::TsErrNull, "scenario is NULL".into()))?;
    let r = s
        .config
        .runs
        .get(run)
        .ok_or_else(|| invalid(format!("run index {run} out of range (have {})", s.config.runs.len())))?;
    Ok(r.spec.params.clone())
}

fn boxed_scenario(config: LoadedConfig) -> *mut TsScenario {
    Box::into_raw(Box::new(TsScenario { config }))
}

unsafe fn emit_series(out: *mut *mut TsSeries, series: TimeSeries) {
    if let Some(slot) = out.as_mut() {
        *slot = Box::into_raw(Box::new(TsSeries { series }));
    }
}

fn flag(b: bool) -> c_int {
    c_int::from(b)
}

/// Message of the last failing call on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of built-in presets.
#[no_mangle]
pub extern "C" fn ts_preset_count() -> usize {
    presets::names().count()
}

/// Name of preset `index` as a static string, or NULL if out of range.
#[no_mangle]
pub extern "C" fn ts_preset_name(index: usize) -> *const c_char {
    static NAMES: std::sync::OnceLock<Vec<CString>> = std::sync::OnceLock::new();
    let names = NAMES.get_or_init(|| presets::names().map(|n| CString::new(n).expect("plain name")).collect());
    names.get(index).map_or(ptr::null(), |n| n.as_ptr())
}

/// Builds a scenario from a built-in preset such as `"fig3"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_scenario_from_preset(name: *const c_char, out: *mut *mut TsScenario) -> TsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let name = str_arg(name, "name")?;
        let config = presets::load(name).ok_or_else(|| invalid(format!("unknown preset {name:?}")))??;
        *out = boxed_scenario(config);
        Ok(())
    })
}

/// Builds a scenario from configuration text in the CLI's TOML format.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_scenario_from_toml(toml: *const c_char, out: *mut *mut TsScenario) -> TsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = load_str(str_arg(toml, "toml")?)?;
        *out = boxed_scenario(config);
        Ok(())
    })
}

/// Sets a numeric config key on every run, e.g. `"pulses.tau_us"` or
/// `"lasers.B.rabi_over_2pi_MHz"`, and re-validates. On failure the scenario
/// is unchanged.
///
/// # Safety
/// `scenario` must come from a `ts_scenario_from_*` call; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ts_scenario_set(scenario: *mut TsScenario, path: *const c_char, value: f64) -> TsStatus {
    guard(|| {
        let s = out_arg(scenario, "scenario")?;
        let path = str_arg(path, "path")?;
        s.config = s.config.with_override(path, toml::Value::Float(value))?;
        Ok(())
    })
}

/// Number of runs (series) in the scenario; 0 for NULL.
///
/// # Safety
/// `scenario` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_scenario_run_count(scenario: *const TsScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.config.runs.len())
}

/// Writes the resolved configuration of the scenario as TOML into `buf`
/// (NUL-terminated, truncated to `cap`). `needed` receives the full length
/// including the terminator.
///
/// # Safety
/// `buf` must point to `cap` writable bytes or be NULL with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn ts_scenario_to_toml(
    scenario: *const TsScenario,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> TsStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| Failure(TsStatus::TsErrNull, "scenario is NULL".into()))?;
        let text = s.config.to_toml();
        let bytes = text.as_bytes();
        if let Some(n) = needed.as_mut() {
            *n = bytes.len() + 1;
        }
        if cap > 0 {
            if buf.is_null() {
                return Err(Failure(TsStatus::TsErrNull, "buf is NULL".into()));
            }
            let len = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, len);
            *buf.add(len) = 0;
        }
        Ok(())
    })
}

/// # Safety
/// `scenario` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_scenario_free(scenario: *mut TsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// D-to-Q transfer with C switch-off for run `run` of the scenario.
/// `series` may be NULL; otherwise it receives a new trajectory handle.
///
/// # Safety
/// Pointers must be valid or NULL as documented.
#[no_mangle]
pub unsafe extern "C" fn ts_run_full_transfer(
    scenario: *const TsScenario,
    run: usize,
    result: *mut TsFullTransfer,
    series: *mut *mut TsSeries,
) -> TsStatus {
    guard(|| {
        let result = out_arg(result, "result")?;
        let r = run_full_transfer(&scenario_params(scenario, run)?)?;
        *result = TsFullTransfer {
            f_after_stirap: r.f_after_stirap,
            p_q_final: r.p_q_final,
            stirap_end: r.stirap_end,
            invariants_hold: flag(r.series.stats.invariants.holds()),
        };
        emit_series(series, r.series);
        Ok(())
    })
}

/// C switch-on from `|Q>` followed by the Q-to-D transfer. Either trajectory
/// pointer may be NULL.
///
/// # Safety
/// Pointers must be valid or NULL as documented.
#[no_mangle]
pub unsafe extern "C" fn ts_run_reverse_transfer(
    scenario: *const TsScenario,
    run: usize,
    result: *mut TsReverseTransfer,
    prep: *mut *mut TsSeries,
    transfer: *mut *mut TsSeries,
) -> TsStatus {
    guard(|| {
        let result = out_arg(result, "result")?;
        let r = run_reverse_transfer(&scenario_params(scenario, run)?)?;
        *result = TsReverseTransfer {
            prep_fidelity_to_qs: r.prep_fidelity_to_qs,
            final_rho_dd: r.final_rho_dd,
            invariants_hold: flag(r.prep.stats.invariants.holds() && r.transfer.stats.invariants.holds()),
        };
        emit_series(prep, r.prep);
        emit_series(transfer, r.transfer);
        Ok(())
    })
}

/// Partial STIRAP with B and R held from `t_freeze` (us) on. Pass NaN to use
/// the scenario's value or the default.
///
/// # Safety
/// Pointers must be valid or NULL as documented.
#[no_mangle]
pub unsafe extern "C" fn ts_run_partial_stirap(
    scenario: *const TsScenario,
    run: usize,
    t_freeze: f64,
    result: *mut TsPartialStirap,
    series: *mut *mut TsSeries,
) -> TsStatus {
    guard(|| {
        let result = out_arg(result, "result")?;
        let freeze = (!t_freeze.is_nan()).then_some(t_freeze);
        let r = run_partial_stirap(&scenario_params(scenario, run)?, freeze)?;
        *result = TsPartialStirap {
            t_freeze: r.t_freeze,
            min_fidelity: r.min_fidelity,
            final_fidelity: r.final_fidelity,
            invariants_hold: flag(r.series.stats.invariants.holds()),
        };
        emit_series(series, r.series);
        Ok(())
    })
}

/// B-only optical pumping from `|S>` into `|D>`.
///
/// # Safety
/// Pointers must be valid as documented.
#[no_mangle]
pub unsafe extern "C" fn ts_run_optical_pumping(
    scenario: *const TsScenario,
    run: usize,
    result: *mut TsOpticalPumping,
) -> TsStatus {
    guard(|| {
        let result = out_arg(result, "result")?;
        let r = run_optical_pumping_prep(&scenario_params(scenario, run)?, &DensityMatrix::basis(Level::S))?;
        *result = TsOpticalPumping { pump_time: r.pump_time, final_rho_dd: r.final_rho_dd };
        Ok(())
    })
}

/// Number of samples; 0 for NULL.
///
/// # Safety
/// `series` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_series_len(series: *const TsSeries) -> usize {
    series.as_ref().map_or(0, |s| s.series.len())
}

/// Column name for `column < TS_SAMPLE_WIDTH` as a static string, else NULL.
#[no_mangle]
pub extern "C" fn ts_column_name(column: usize) -> *const c_char {
    static NAMES: std::sync::OnceLock<Vec<CString>> = std::sync::OnceLock::new();
    let names = NAMES.get_or_init(|| TIMESERIES_COLUMNS.iter().map(|n| CString::new(*n).expect("plain name")).collect());
    names.get(column).map_or(ptr::null(), |n| n.as_ptr())
}

/// Copies sample `index` into `out[TS_SAMPLE_WIDTH]` in column order.
///
/// # Safety
/// `out` must point to `TS_SAMPLE_WIDTH` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_series_sample(series: *const TsSeries, index: usize, out: *mut f64) -> TsStatus {
    guard(|| {
        let s = series.as_ref().ok_or_else(|| Failure(TsStatus::TsErrNull, "series is NULL".into()))?;
        if out.is_null() {
            return Err(Failure(TsStatus::TsErrNull, "out is NULL".into()));
        }
        if index >= s.series.len() {
            return Err(invalid(format!("sample {index} out of range (have {})", s.series.len())));
        }
        let row = timeseries_row(&s.series, index);
        ptr::copy_nonoverlapping(row.as_ptr(), out, TS_SAMPLE_WIDTH);
        Ok(())
    })
}

/// Copies up to `cap` values of one column into `buf`; `written` receives the
/// number copied.
///
/// # Safety
/// `buf` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_series_column(
    series: *const TsSeries,
    column: usize,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> TsStatus {
    guard(|| {
        let s = series.as_ref().ok_or_else(|| Failure(TsStatus::TsErrNull, "series is NULL".into()))?;
        let written = out_arg(written, "written")?;
        if column >= TS_SAMPLE_WIDTH {
            return Err(invalid(format!("column {column} out of range")));
        }
        if buf.is_null() && cap > 0 {
            return Err(Failure(TsStatus::TsErrNull, "buf is NULL".into()));
        }
        let n = s.series.len().min(cap);
        for k in 0..n {
            *buf.add(k) = timeseries_row(&s.series, k)[column];
        }
        *written = n;
        Ok(())
    })
}

/// # Safety
/// `series` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_series_free(series: *mut TsSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// `Delta_R` (rad/us) on the three-photon resonance; `exact` selects the exact
/// dressed frame instead of the first-order one.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_resonance_detuning(
    delta_b: f64,
    delta_c: f64,
    omega_c: f64,
    exact: c_int,
    out: *mut f64,
) -> TsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mode = if exact != 0 { Mode::Exact } else { Mode::Weak };
        *out = resonance_detuning(delta_b, delta_c, omega_c, mode)?;
        Ok(())
    })
}

/// Dressed frame of the S-Q coupling for `Omega_C`, `Delta_C` (rad/us).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_dressed_frame(
    omega_c: f64,
    delta_c: f64,
    exact: c_int,
    out: *mut TsDressedFrame,
) -> TsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let alpha_c = tristirap::dressed::mixing_weak(omega_c, delta_c)?;
        let mode = if exact != 0 { Mode::Exact } else { Mode::Weak };
        let f = dressed_frame(alpha_c, delta_c, mode);
        *out = TsDressedFrame { alpha_c, alpha: f.alpha, beta: f.beta, lambda_q: f.lambda_q, lambda_s: f.lambda_s };
        Ok(())
    })
}
