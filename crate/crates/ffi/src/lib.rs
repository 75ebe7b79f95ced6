//! C ABI for `ccfair`.
//!
//! Every fallible function returns a [`CcfStatus`]. On failure the message
//! is kept per thread and can be read with [`ccf_last_error`]. Objects are
//! handed out as opaque pointers and must be released with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ccfair::partition::balanced_kmeans;
use ccfair::scenario::{generate_layout, load_scenario, save_scenario, theta_matrix};
use ccfair::solvers::solve;
use ccfair::{AlphaParam, Error, Scenario, SolverConfig, SolverReport};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Parse = 4,
    NonFinite = 5,
    IndexOutOfRange = 6,
    Infeasible = 7,
    TooLarge = 8,
    Solver = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

impl From<&Error> for CcfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => CcfStatus::InvalidArgument,
            Error::Validation { .. } => CcfStatus::Validation,
            Error::Parse { .. } => CcfStatus::Parse,
            Error::NonFinite(_) => CcfStatus::NonFinite,
            Error::IndexOutOfRange { .. } => CcfStatus::IndexOutOfRange,
            Error::Infeasible(_) => CcfStatus::Infeasible,
            Error::TooLarge { .. } => CcfStatus::TooLarge,
            Error::Solver(_) => CcfStatus::Solver,
            Error::Io(_) | Error::Csv(_) => CcfStatus::Io,
        }
    }
}

/// Opaque network layout.
pub struct CcfScenario {
    inner: Scenario,
}

/// Opaque solver result.
pub struct CcfReport {
    inner: SolverReport,
    capacities: Vec<f64>,
}

/// Summary numbers of a solver run. Capacities are in bits.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CcfMetrics {
    pub fairness_index: f64,
    pub c_sum: f64,
    pub c_min: f64,
    pub objective: f64,
    pub wall_time: f64,
    /// Solver case, 1 to 4.
    pub case_id: u32,
    pub num_users: usize,
    pub num_subnetworks: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn fail(status: CcfStatus, message: impl Into<String>) -> CcfStatus {
    set_error(message.into());
    status
}

/// Runs `f`, recording errors and turning panics into [`CcfStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), (CcfStatus, String)>) -> CcfStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CcfStatus::Ok,
        Ok(Err((status, message))) => fail(status, message),
        Err(_) => fail(CcfStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> (CcfStatus, String) {
    (CcfStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (CcfStatus, String) {
    (CcfStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (CcfStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (CcfStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null if the last
/// call succeeded. The pointer stays valid until the next call into the
/// library from the same thread.
#[no_mangle]
pub extern "C" fn ccf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ccf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Draws a random layout in the unit square.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ccf_scenario_generate(
    k_users: usize,
    l_bs: usize,
    alpha0: f64,
    snr: f64,
    seed: u64,
    out: *mut *mut CcfScenario,
) -> CcfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = generate_layout(k_users, l_bs, alpha0, snr, seed).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CcfScenario { inner }));
        Ok(())
    })
}

/// Reads a scenario file written by [`ccf_scenario_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ccf_scenario_load(path: *const c_char, out: *mut *mut CcfScenario) -> CcfStatus {
    guard(|| {
        let path = PathBuf::from(read_str(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_scenario(path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CcfScenario { inner }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ccf_scenario_save(scenario: *const CcfScenario, path: *const c_char) -> CcfStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let path = read_str(path, "path")?;
        save_scenario(&s.inner, path).map_err(lib_err)
    })
}

/// Writes the number of users and base stations.
///
/// # Safety
/// `scenario` must come from this library; the outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ccf_scenario_dims(
    scenario: *const CcfScenario,
    k_users: *mut usize,
    l_bs: *mut usize,
) -> CcfStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        if k_users.is_null() || l_bs.is_null() {
            return Err(null("output"));
        }
        *k_users = s.inner.k();
        *l_bs = s.inner.l();
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ccf_scenario_free(scenario: *mut CcfScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Case (1 to 4) of a fairness parameter such as `"3"`, `"1/2"` or `"inf"`.
///
/// # Safety
/// `alpha` must be NUL-terminated and `case_id` valid.
#[no_mangle]
pub unsafe extern "C" fn ccf_classify_alpha(alpha: *const c_char, case_id: *mut u32) -> CcfStatus {
    guard(|| {
        let a: AlphaParam = read_str(alpha, "alpha")?.parse().map_err(lib_err)?;
        if case_id.is_null() {
            return Err(null("case_id"));
        }
        *case_id = ccfair::fairness::classify_case(a).number() as u32;
        Ok(())
    })
}

/// Partitions the base stations into `m` groups and runs the solver chosen
/// by `alpha`.
///
/// `solver_toml` may be null for the default settings, or hold solver
/// fields in TOML (for example `"t_a = 500"`). The seed drives both the
/// partition and the solver.
///
/// # Safety
/// `scenario` must come from this library, `alpha` must be NUL-terminated,
/// `solver_toml` null or NUL-terminated, and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ccf_solve(
    scenario: *const CcfScenario,
    m: usize,
    alpha: *const c_char,
    solver_toml: *const c_char,
    seed: u64,
    out: *mut *mut CcfReport,
) -> CcfStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let a: AlphaParam = read_str(alpha, "alpha")?.parse().map_err(lib_err)?;
        let mut cfg: SolverConfig = if solver_toml.is_null() {
            SolverConfig::default()
        } else {
            toml::from_str(read_str(solver_toml, "solver_toml")?)
                .map_err(|e| (CcfStatus::Parse, format!("solver settings: {e}")))?
        };
        cfg.seed = seed;
        if out.is_null() {
            return Err(null("out"));
        }
        let partition = balanced_kmeans(&s.inner.bs_positions, m, seed, 100).map_err(lib_err)?;
        let inner = solve(&theta_matrix(&s.inner), &partition, a, &cfg).map_err(lib_err)?;
        let capacities = inner.metrics_de.per_subnetwork.clone();
        *out = Box::into_raw(Box::new(CcfReport { inner, capacities }));
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn ccf_report_metrics(report: *const CcfReport, out: *mut CcfMetrics) -> CcfStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = &r.inner.metrics_de;
        *out = CcfMetrics {
            fairness_index: m.fi,
            c_sum: m.c_sum,
            c_min: m.c_min,
            objective: r.inner.objective,
            wall_time: r.inner.wall_time,
            case_id: r.inner.case.number() as u32,
            num_users: r.inner.decomposition.k(),
            num_subnetworks: r.inner.decomposition.m(),
        };
        Ok(())
    })
}

/// Copies the subnetwork index (0-based) of every user into `buf`, which
/// must hold at least `num_users` entries.
///
/// # Safety
/// `report` must come from this library and `buf` point to `len` writable
/// entries.
#[no_mangle]
pub unsafe extern "C" fn ccf_report_user_assignment(report: *const CcfReport, buf: *mut usize, len: usize) -> CcfStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        copy_out(&r.inner.decomposition.user_of, buf, len)
    })
}

/// Copies the per-subnetwork capacities in bits into `buf`.
///
/// # Safety
/// `report` must come from this library and `buf` point to `len` writable
/// entries.
#[no_mangle]
pub unsafe extern "C" fn ccf_report_capacities(report: *const CcfReport, buf: *mut f64, len: usize) -> CcfStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        copy_out(&r.capacities, buf, len)
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize) -> Result<(), (CcfStatus, String)> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < src.len() {
        return Err((CcfStatus::BufferTooSmall, format!("buffer holds {len} entries, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// # Safety
/// `report` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ccf_report_free(report: *mut CcfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
