//! C ABI over the il7ctl model, solver and simulator.
//!
//! Models and value tables are opaque handles owned by the caller and
//! released with the matching `*_free` function. Every function returns an
//! [`Il7Status`]; on failure [`il7_last_error`] describes the error of the
//! calling thread. Panics never cross the boundary and are reported as
//! [`Il7Status::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use il7ctl::error::Error;
use il7ctl::model::{BoundaryId, Model, State};
use il7ctl::run::{load_table_for, policy_for, run_solve, RunConfig};
use il7ctl::sim::{monte_carlo, optimal_action};
use il7ctl::solver::{save_table, Precision, ValueTable};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Il7Status {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    NoEquilibrium = 3,
    GridTooLarge = 4,
    /// The solve stopped at `max_iter`; the table is still returned.
    NotConverged = 5,
    HashMismatch = 6,
    CorruptTable = 7,
    Io = 8,
    ProtocolViolation = 9,
    NullPointer = 10,
    Panic = 11,
}

/// Boundary reached by the flow, as returned by [`il7_time_to_boundary`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Il7Boundary {
    Xi1 = 1,
    Xi2 = 2,
    Xi3 = 3,
    Xi4 = 4,
    Xi5 = 5,
    Interior = 0,
}

/// `(gamma, n, sigma, theta, p, r)`; `gamma == 0` is the absorbing state.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Il7State {
    pub gamma: u32,
    pub n: u32,
    pub sigma: f64,
    pub theta: f64,
    pub p: f64,
    pub r: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Il7McSummary {
    pub n_runs: usize,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub min_cost: f64,
    pub mean_cd4: f64,
    pub mean_days_under: f64,
    pub mean_injections: f64,
}

/// A patient and model configuration with its solver and Monte Carlo options.
pub struct Il7Model {
    config: RunConfig,
    model: Model,
}

/// A value table computed for one model.
pub struct Il7Table {
    table: ValueTable,
}

impl From<Il7State> for State {
    fn from(s: Il7State) -> State {
        State::new(s.gamma, s.n, s.sigma, s.theta, s.p, s.r)
    }
}

impl From<State> for Il7State {
    fn from(s: State) -> Il7State {
        Il7State {
            gamma: s.gamma,
            n: s.n,
            sigma: s.sigma,
            theta: s.theta,
            p: s.p,
            r: s.r,
        }
    }
}

impl From<BoundaryId> for Il7Boundary {
    fn from(b: BoundaryId) -> Il7Boundary {
        match b {
            BoundaryId::Xi1 => Il7Boundary::Xi1,
            BoundaryId::Xi2 => Il7Boundary::Xi2,
            BoundaryId::Xi3 => Il7Boundary::Xi3,
            BoundaryId::Xi4 => Il7Boundary::Xi4,
            BoundaryId::Xi5 => Il7Boundary::Xi5,
            BoundaryId::Interior => Il7Boundary::Interior,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> Il7Status {
    match e {
        Error::InvalidArgument(_) => Il7Status::InvalidArgument,
        Error::Config(_) => Il7Status::Config,
        Error::NoEquilibrium { .. } => Il7Status::NoEquilibrium,
        Error::GridTooLarge { .. } => Il7Status::GridTooLarge,
        Error::CorruptTable { .. } => Il7Status::CorruptTable,
        Error::HashMismatch { .. } => Il7Status::HashMismatch,
        Error::ProtocolViolation(_) => Il7Status::ProtocolViolation,
        Error::Io { .. } => Il7Status::Io,
    }
}

struct Failure(Il7Status, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(Il7Status::NullPointer, format!("{what} is null"))
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<Il7Status, Failure>) -> Il7Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
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
            Il7Status::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(Il7Status::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message describing the last failure on the calling thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn il7_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse a run configuration from TOML text. Relative output paths resolve
/// against the current directory.
///
/// # Safety
/// `toml` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn il7_model_from_toml(toml: *const c_char, out_model: *mut *mut Il7Model) -> Il7Status {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let config = RunConfig::from_toml(text(toml, "toml")?, Path::new("."))?;
        let model = config.build_model()?;
        *slot = Box::into_raw(Box::new(Il7Model { config, model }));
        Ok(Il7Status::Ok)
    })
}

/// Read a run configuration file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn il7_model_from_file(path: *const c_char, out_model: *mut *mut Il7Model) -> Il7Status {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let config = RunConfig::load(Path::new(text(path, "path")?))?;
        let model = config.build_model()?;
        *slot = Box::into_raw(Box::new(Il7Model { config, model }));
        Ok(Il7Status::Ok)
    })
}

/// # Safety
/// `model` must come from `il7_model_from_*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn il7_model_free(model: *mut Il7Model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Initial state of the patient.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn il7_initial_state(model: *const Il7Model, out_state: *mut Il7State) -> Il7Status {
    guard(|| {
        let m = deref(model, "model")?;
        *out(out_state, "out_state")? = State::initial(m.model.params()).into();
        Ok(Il7Status::Ok)
    })
}

/// Deterministic flow of `state` for `t` days.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn il7_flow(
    model: *const Il7Model,
    state: *const Il7State,
    t: f64,
    out_state: *mut Il7State,
) -> Il7Status {
    guard(|| {
        let m = deref(model, "model")?;
        let x: State = (*deref(state, "state")?).into();
        *out(out_state, "out_state")? = m.model.flow(&x, t)?.into();
        Ok(Il7Status::Ok)
    })
}

/// Time until the flow from `state` hits the active boundary, and which one.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn il7_time_to_boundary(
    model: *const Il7Model,
    state: *const Il7State,
    out_time: *mut f64,
    out_boundary: *mut Il7Boundary,
) -> Il7Status {
    guard(|| {
        let m = deref(model, "model")?;
        let x: State = (*deref(state, "state")?).into();
        let (t, b) = m.model.time_to_boundary(&x)?;
        *out(out_time, "out_time")? = t;
        *out(out_boundary, "out_boundary")? = b.into();
        Ok(Il7Status::Ok)
    })
}

/// Run value iteration with the solver options of the configuration.
/// Returns [`Il7Status::NotConverged`] together with the last iterate when
/// `max_iter` was reached. `out_iterations` and `out_residual` may be null.
///
/// # Safety
/// `model` and `out_table` must be valid; the others valid or null.
#[no_mangle]
pub unsafe extern "C" fn il7_solve(
    model: *const Il7Model,
    out_table: *mut *mut Il7Table,
    out_iterations: *mut usize,
    out_residual: *mut f64,
) -> Il7Status {
    guard(|| {
        let m = deref(model, "model")?;
        let slot = out(out_table, "out_table")?;
        *slot = ptr::null_mut();
        let outcome = run_solve(&m.model, &m.config.solver, |_, _| {})?;
        if let Some(it) = out_iterations.as_mut() {
            *it = outcome.report.iterations;
        }
        if let Some(res) = out_residual.as_mut() {
            *res = outcome.report.residuals.last().copied().unwrap_or(f64::NAN);
        }
        let converged = outcome.report.converged;
        *slot = Box::into_raw(Box::new(Il7Table { table: outcome.table }));
        if converged {
            Ok(Il7Status::Ok)
        } else {
            set_last_error(format!("not converged after {} iterations", outcome.report.iterations));
            Ok(Il7Status::NotConverged)
        }
    })
}

/// Load a value table computed for `model`.
///
/// # Safety
/// Pointers must be valid; `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn il7_table_load(
    model: *const Il7Model,
    path: *const c_char,
    out_table: *mut *mut Il7Table,
) -> Il7Status {
    guard(|| {
        let m = deref(model, "model")?;
        let slot = out(out_table, "out_table")?;
        *slot = ptr::null_mut();
        let table = load_table_for(&m.model, Path::new(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(Il7Table { table }));
        Ok(Il7Status::Ok)
    })
}

/// Write a value table; nonzero `single_precision` stores 32-bit values.
///
/// # Safety
/// Pointers must be valid; `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn il7_table_save(table: *const Il7Table, path: *const c_char, single_precision: c_int) -> Il7Status {
    guard(|| {
        let t = deref(table, "table")?;
        let precision = if single_precision != 0 { Precision::F32 } else { Precision::F64 };
        save_table(&t.table, Path::new(text(path, "path")?), precision)?;
        Ok(Il7Status::Ok)
    })
}

/// Interpolated value at `state`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn il7_table_value(table: *const Il7Table, state: *const Il7State, out_value: *mut f64) -> Il7Status {
    guard(|| {
        let t = deref(table, "table")?;
        let x: State = (*deref(state, "state")?).into();
        *out(out_value, "out_value")? = t.table.interpolate(&x)?;
        Ok(Il7Status::Ok)
    })
}

/// # Safety
/// `table` must come from `il7_solve` or `il7_table_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn il7_table_free(table: *mut Il7Table) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Optimal dose (µg/kg, 0 for skipping) at a decision boundary.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn il7_optimal_dose(
    model: *const Il7Model,
    table: *const Il7Table,
    state: *const Il7State,
    out_dose: *mut f64,
) -> Il7Status {
    guard(|| {
        let m = deref(model, "model")?;
        let t = deref(table, "table")?;
        let x: State = (*deref(state, "state")?).into();
        *out(out_dose, "out_dose")? = optimal_action(&m.model, &t.table, &x)?;
        Ok(Il7Status::Ok)
    })
}

/// Monte Carlo evaluation of a protocol (`"optimal"`, a named fixed protocol
/// or `"custom:..."`). `table` may be null unless the protocol is `"optimal"`.
///
/// # Safety
/// `model`, `protocol` and `out_summary` must be valid; `table` valid or null.
#[no_mangle]
pub unsafe extern "C" fn il7_monte_carlo(
    model: *const Il7Model,
    table: *const Il7Table,
    protocol: *const c_char,
    n_runs: usize,
    seed: u64,
    out_summary: *mut Il7McSummary,
) -> Il7Status {
    guard(|| {
        let m = deref(model, "model")?;
        let t = table.as_ref().map(|t| &t.table);
        let policy = policy_for(text(protocol, "protocol")?, &m.model, t)?;
        let s = monte_carlo(&m.model, &policy, n_runs, seed)?;
        *out(out_summary, "out_summary")? = Il7McSummary {
            n_runs: s.n_runs,
            mean_cost: s.mean_cost,
            std_cost: s.std_cost,
            min_cost: s.min_cost,
            mean_cd4: s.mean_cd4,
            mean_days_under: s.mean_days_under,
            mean_injections: s.mean_injections,
        };
        Ok(Il7Status::Ok)
    })
}
