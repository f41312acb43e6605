//! C ABI over the netadapt simulator.
//!
//! Objects cross the boundary as opaque pointers owned by the caller and released with the
//! matching `*_free`. Fallible calls return an [`NaStatus`]; on failure the message is
//! available from [`na_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use netadapt::adapt::{run_scenario, PlannerKind, RunConfig, RunOutput};
use netadapt::expr::{to_link_weight, EvalContext, WeightExpr};
use netadapt::harness::scenario_io::{load_scenario, metrics_csv, parse_scenario, MetricsRow, ScenarioIoError};
use netadapt::planner::GpConfig;
use netadapt::sim::Scenario;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidScenario = 4,
    UnknownPlanner = 5,
    RunFailed = 6,
    Io = 7,
    Panic = 8,
}

/// A loaded, validated scenario.
pub struct NaScenario {
    inner: Scenario,
}

/// A parsed link-weight expression.
pub struct NaExpr {
    inner: WeightExpr,
}

/// The outcome of one simulated run.
pub struct NaRunResult {
    planner: PlannerKind,
    seed: u64,
    output: RunOutput,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NaMetrics {
    pub congestion_occurrences: u64,
    pub congestion_duration_ticks: u64,
    pub packet_loss_ratio: f64,
    pub planner_invocations: u64,
    pub unresolved_plans: u64,
    pub routing_failures: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (NaStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((NaStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (NaStatus::InvalidUtf8, format!("{name}: {e}")))
}

fn out_arg<T>(p: *mut *mut T) -> Result<(), Failure> {
    if p.is_null() {
        Err((NaStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn io_failure(e: ScenarioIoError) -> Failure {
    let status = match e {
        ScenarioIoError::Io { .. } => NaStatus::Io,
        ScenarioIoError::Parse { .. } | ScenarioIoError::Csv(_) => NaStatus::Parse,
        ScenarioIoError::Invalid { .. } => NaStatus::InvalidScenario,
    };
    (status, e.to_string())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn na_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn na_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a scenario JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_scenario_load(path: *const c_char, out: *mut *mut NaScenario) -> NaStatus {
    guard(|| {
        out_arg(out)?;
        let path = str_arg(path, "path")?;
        let inner = load_scenario(path).map_err(io_failure)?;
        *out = Box::into_raw(Box::new(NaScenario { inner }));
        Ok(())
    })
}

/// Parses a scenario from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_scenario_from_json(json: *const c_char, out: *mut *mut NaScenario) -> NaStatus {
    guard(|| {
        out_arg(out)?;
        let text = str_arg(json, "json")?;
        let inner = parse_scenario(text, Path::new("<memory>")).map_err(io_failure)?;
        *out = Box::into_raw(Box::new(NaScenario { inner }));
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn na_scenario_duration(s: *const NaScenario) -> u64 {
    s.as_ref().map_or(0, |s| s.inner.duration_ticks)
}

/// # Safety
/// `s` must be NULL or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn na_scenario_request_count(s: *const NaScenario) -> usize {
    s.as_ref().map_or(0, |s| s.inner.requests.len())
}

/// # Safety
/// `s` must be NULL or a scenario handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn na_scenario_free(s: *mut NaScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Parses an infix weight expression over `util`, `threshold`, `bw`, `dl` and constants.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_expr_parse(text: *const c_char, out: *mut *mut NaExpr) -> NaStatus {
    guard(|| {
        out_arg(out)?;
        let inner: WeightExpr = str_arg(text, "text")?
            .parse()
            .map_err(|e: netadapt::expr::ParseError| (NaStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(NaExpr { inner }));
        Ok(())
    })
}

fn context(bandwidth_mbps: f64, delay_ms: f64, utilization: f64, threshold: f64) -> EvalContext {
    EvalContext {
        bandwidth_mbps,
        delay_ms,
        utilization,
        threshold,
    }
}

/// Raw value of the expression for one link.
///
/// # Safety
/// `e` must be a live expression handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_expr_evaluate(
    e: *const NaExpr,
    bandwidth_mbps: f64,
    delay_ms: f64,
    utilization: f64,
    threshold: f64,
    out: *mut f64,
) -> NaStatus {
    guard(|| {
        let e = e
            .as_ref()
            .ok_or((NaStatus::NullArgument, "expression is null".to_string()))?;
        let out = out
            .as_mut()
            .ok_or((NaStatus::NullArgument, "output pointer is null".to_string()))?;
        *out = e
            .inner
            .evaluate(&context(bandwidth_mbps, delay_ms, utilization, threshold));
        Ok(())
    })
}

/// Integer link weight (at least 1) the router would use. Returns 0 for a NULL handle.
///
/// # Safety
/// `e` must be NULL or a live expression handle.
#[no_mangle]
pub unsafe extern "C" fn na_expr_link_weight(
    e: *const NaExpr,
    bandwidth_mbps: f64,
    delay_ms: f64,
    utilization: f64,
    threshold: f64,
) -> u64 {
    e.as_ref().map_or(0, |e| {
        to_link_weight(&e.inner, &context(bandwidth_mbps, delay_ms, utilization, threshold))
    })
}

/// Canonical text of the expression; free with [`na_string_free`].
///
/// # Safety
/// `e` must be NULL or a live expression handle.
#[no_mangle]
pub unsafe extern "C" fn na_expr_to_string(e: *const NaExpr) -> *mut c_char {
    e.as_ref()
        .map_or(ptr::null_mut(), |e| into_c_string(e.inner.to_string()))
}

/// # Safety
/// `e` must be NULL or an expression handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn na_expr_free(e: *mut NaExpr) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Runs the scenario under `planner` (`genadapt`, `reroute`, `static-unit` or `static-invbw`).
///
/// `generations` of 0 uses the scenario's suggested budget, else the planner default.
/// `weight_expr` may be NULL; when set, the adaptive planner applies that expression instead of
/// searching. The scenario is not modified.
///
/// # Safety
/// `scenario` must be a live handle, `planner` a NUL-terminated string, `weight_expr` NULL or a
/// live handle, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn na_run(
    scenario: *const NaScenario,
    planner: *const c_char,
    seed: u64,
    generations: usize,
    weight_expr: *const NaExpr,
    out: *mut *mut NaRunResult,
) -> NaStatus {
    guard(|| {
        out_arg(out)?;
        let s = scenario
            .as_ref()
            .ok_or((NaStatus::NullArgument, "scenario is null".to_string()))?;
        let kind: PlannerKind = str_arg(planner, "planner")?
            .parse()
            .map_err(|e: String| (NaStatus::UnknownPlanner, e))?;
        let budget = if generations > 0 {
            Some(generations)
        } else {
            s.inner.max_generations
        };
        let mut gp = GpConfig::default();
        if let Some(g) = budget {
            gp.max_generations = g;
        }
        let cfg = RunConfig {
            gp,
            fixed_expr: weight_expr.as_ref().map(|e| e.inner.clone()),
            ..RunConfig::default()
        };
        let output = run_scenario(&s.inner, kind, &cfg, seed).map_err(|e| (NaStatus::RunFailed, e.to_string()))?;
        *out = Box::into_raw(Box::new(NaRunResult {
            planner: kind,
            seed,
            output,
        }));
        Ok(())
    })
}

/// # Safety
/// `r` must be a live run handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn na_run_metrics(r: *const NaRunResult, out: *mut NaMetrics) -> NaStatus {
    guard(|| {
        let r = r
            .as_ref()
            .ok_or((NaStatus::NullArgument, "run result is null".to_string()))?;
        let out = out
            .as_mut()
            .ok_or((NaStatus::NullArgument, "output pointer is null".to_string()))?;
        let m = &r.output.metrics;
        *out = NaMetrics {
            congestion_occurrences: m.congestion_occurrences,
            congestion_duration_ticks: m.congestion_duration_ticks,
            packet_loss_ratio: m.packet_loss_ratio,
            planner_invocations: m.planner_invocations,
            unresolved_plans: m.unresolved_plans,
            routing_failures: m.routing_failures,
        };
        Ok(())
    })
}

/// Tab-separated event log, one event per line; free with [`na_string_free`].
///
/// # Safety
/// `r` must be NULL or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn na_run_event_log(r: *const NaRunResult) -> *mut c_char {
    r.as_ref()
        .map_or(ptr::null_mut(), |r| into_c_string(r.output.event_log()))
}

/// Metrics CSV (header plus one row) as written by the command-line tool.
///
/// # Safety
/// `r` must be NULL or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn na_run_metrics_csv(r: *const NaRunResult) -> *mut c_char {
    let Some(r) = r.as_ref() else {
        return ptr::null_mut();
    };
    let rows = [MetricsRow {
        planner: r.planner.to_string(),
        seed: r.seed,
        metrics: r.output.metrics.clone(),
    }];
    match metrics_csv(&rows, false) {
        Ok(s) => into_c_string(s),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `r` must be NULL or a run handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn na_run_free(r: *mut NaRunResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
