//! C ABI for the multidml estimation engine.
//!
//! Opaque handles (`MdmlDataset`, `MdmlReport`) own the Rust objects;
//! every function returns an [`MdmlStatus`] code and the last error
//! message is retrievable per thread via [`mdml_last_error`]. The
//! header `include/multidml.h` is generated by cbindgen at build time.
//!
//! Usage from C:
//!
//! ```c
//! MdmlDataset *ds = NULL;
//! if (mdml_dataset_load("data.csv", "analysis.toml", &ds) != Ok) { ... }
//! MdmlReport *rep = NULL;
//! mdml_plm_estimate(ds, 5, 1, 17, &rep);
//! double theta0;
//! mdml_report_coefficient(rep, 0, &theta0);
//! char *json = mdml_report_json(rep);
//! ...
//! mdml_string_free(json);
//! mdml_report_free(rep);
//! mdml_dataset_free(ds);
//! ```

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use multidml::config::AnalysisConfig;
use multidml::data::InteractionSpec;
use multidml::error::{Error, ErrorClass};
use multidml::io::read_dataset;
use multidml::irm::{estimate_irm, IrmOptions};
use multidml::plm::{repeat_splits, PlmOptions};
use multidml::report::EstimateReport;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdmlStatus {
    Ok = 0,
    /// Null pointer or invalid argument at the boundary.
    InvalidArgument = 1,
    /// Configuration or data-schema violation.
    ConfigError = 2,
    /// Estimation failure.
    EstimationError = 3,
    /// I/O failure.
    IoError = 4,
    /// Unexpected internal failure (panic caught at the boundary).
    InternalError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&ch| ch != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> MdmlStatus {
    match err.class() {
        ErrorClass::Config => MdmlStatus::ConfigError,
        ErrorClass::Estimation => MdmlStatus::EstimationError,
        ErrorClass::Io => MdmlStatus::IoError,
    }
}

/// Message describing the most recent failure on this thread. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mdml_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mdml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// A loaded dataset plus its analysis configuration.
pub struct MdmlDataset {
    dataset: multidml::data::Dataset,
    config: AnalysisConfig,
    interactions: Vec<InteractionSpec>,
}

/// An estimation result.
pub struct MdmlReport {
    report: EstimateReport,
    name_storage: Vec<CString>,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, MdmlStatus> {
    if ptr.is_null() {
        set_last_error(&format!("{} is NULL", what));
        return Err(MdmlStatus::InvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error(&format!("{} is not valid UTF-8", what));
        MdmlStatus::InvalidArgument
    })
}

fn guard<F: FnOnce() -> MdmlStatus>(f: F) -> MdmlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            MdmlStatus::InternalError
        }
    }
}

/// Loads a CSV dataset under the given TOML analysis config. On success
/// writes an owned handle into `out`; free it with
/// [`mdml_dataset_free`].
///
/// # Safety
/// `data_path` and `config_path` must be valid NUL-terminated strings
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdml_dataset_load(
    data_path: *const c_char,
    config_path: *const c_char,
    out: *mut *mut MdmlDataset,
) -> MdmlStatus {
    guard(|| {
        if out.is_null() {
            set_last_error("out pointer is NULL");
            return MdmlStatus::InvalidArgument;
        }
        let data_path = match cstr_arg(data_path, "data_path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let config_path = match cstr_arg(config_path, "config_path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let config = match AnalysisConfig::from_path(Path::new(config_path)) {
            Ok(c) => c,
            Err(e) => {
                set_last_error(&e.to_string());
                return status_of(&e);
            }
        };
        let need_regimen = config.regimen.is_some();
        let dataset = match read_dataset(Path::new(data_path), &config, need_regimen) {
            Ok(d) => d,
            Err(e) => {
                set_last_error(&e.to_string());
                return status_of(&e);
            }
        };
        let interactions = config
            .interactions
            .iter()
            .map(|i| InteractionSpec::new(i.factors.clone()))
            .collect();
        *out = Box::into_raw(Box::new(MdmlDataset { dataset, config, interactions }));
        MdmlStatus::Ok
    })
}

/// Number of observations in a loaded dataset.
///
/// # Safety
/// `ds` must be a live handle from [`mdml_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn mdml_dataset_n_obs(ds: *const MdmlDataset) -> u64 {
    if ds.is_null() {
        return 0;
    }
    (*ds).dataset.n_obs() as u64
}

/// Frees a dataset handle (NULL is ignored).
///
/// # Safety
/// `ds` must be NULL or a handle from [`mdml_dataset_load`], not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn mdml_dataset_free(ds: *mut MdmlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn wrap_report(report: EstimateReport, out: *mut *mut MdmlReport) -> MdmlStatus {
    let name_storage: Vec<CString> = report
        .coef_names
        .iter()
        .map(|n| CString::new(n.as_str()).unwrap_or_default())
        .collect();
    unsafe {
        *out = Box::into_raw(Box::new(MdmlReport { report, name_storage }));
    }
    MdmlStatus::Ok
}

/// Partial-linear-model estimate with the dataset's configured
/// learners. `k = 0` and `n_splits = 0` fall back to the config values.
///
/// # Safety
/// `ds` must be a live dataset handle and `out` a valid pointer; free
/// the result with [`mdml_report_free`].
#[no_mangle]
pub unsafe extern "C" fn mdml_plm_estimate(
    ds: *const MdmlDataset,
    k: u32,
    n_splits: u32,
    seed: u64,
    out: *mut *mut MdmlReport,
) -> MdmlStatus {
    guard(|| {
        if ds.is_null() || out.is_null() {
            set_last_error("NULL handle");
            return MdmlStatus::InvalidArgument;
        }
        let h = &*ds;
        let k = if k == 0 { h.config.estimate.k } else { k as usize };
        let n_splits =
            if n_splits == 0 { h.config.estimate.n_splits } else { n_splits as usize };
        let opts = match (
            h.config.learners.resolve(&h.config.estimate.treatment_learner),
            h.config.learners.resolve(&h.config.estimate.outcome_learner),
        ) {
            (Ok(t), Ok(o)) => PlmOptions {
                k,
                treatment_learner: t,
                outcome_learner: o,
                clip_eps: h.config.estimate.clip_eps,
                ..Default::default()
            },
            (Err(e), _) | (_, Err(e)) => {
                set_last_error(&e.to_string());
                return status_of(&e);
            }
        };
        match repeat_splits(&h.dataset, &h.interactions, &opts, n_splits, seed) {
            Ok(report) => wrap_report(report, out),
            Err(e) => {
                set_last_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Interactive-model AIPW estimate of the ATE between regimen
/// categories `arm_b` and `arm_c` (1-based).
///
/// # Safety
/// Same contract as [`mdml_plm_estimate`].
#[no_mangle]
pub unsafe extern "C" fn mdml_irm_estimate(
    ds: *const MdmlDataset,
    arm_b: u32,
    arm_c: u32,
    k: u32,
    n_splits: u32,
    seed: u64,
    out: *mut *mut MdmlReport,
) -> MdmlStatus {
    guard(|| {
        if ds.is_null() || out.is_null() {
            set_last_error("NULL handle");
            return MdmlStatus::InvalidArgument;
        }
        let h = &*ds;
        let k = if k == 0 { h.config.estimate.k } else { k as usize };
        let n_splits =
            if n_splits == 0 { h.config.estimate.n_splits } else { n_splits as usize };
        let prop_name = h
            .config
            .estimate
            .propensity_learner
            .clone()
            .unwrap_or_else(|| h.config.estimate.treatment_learner.clone());
        let opts = match (
            h.config.learners.resolve(&prop_name),
            h.config.learners.resolve(&h.config.estimate.outcome_learner),
        ) {
            (Ok(p), Ok(o)) => IrmOptions {
                k,
                propensity_learner: p,
                outcome_learner: o,
                clip_eps: h.config.estimate.clip_eps,
            },
            (Err(e), _) | (_, Err(e)) => {
                set_last_error(&e.to_string());
                return status_of(&e);
            }
        };
        match estimate_irm(&h.dataset, arm_b as usize, arm_c as usize, &opts, n_splits, seed) {
            Ok(report) => wrap_report(report, out),
            Err(e) => {
                set_last_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Number of coefficients in a report.
///
/// # Safety
/// `report` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn mdml_report_len(report: *const MdmlReport) -> u64 {
    if report.is_null() {
        return 0;
    }
    (*report).report.theta.len() as u64
}

unsafe fn report_field(
    report: *const MdmlReport,
    index: u64,
    out: *mut f64,
    f: impl Fn(&EstimateReport, usize) -> f64,
) -> MdmlStatus {
    if report.is_null() || out.is_null() {
        set_last_error("NULL handle");
        return MdmlStatus::InvalidArgument;
    }
    let r = &(*report).report;
    let i = index as usize;
    if i >= r.theta.len() {
        set_last_error("coefficient index out of range");
        return MdmlStatus::InvalidArgument;
    }
    *out = f(r, i);
    MdmlStatus::Ok
}

/// Point estimate of coefficient `index`.
///
/// # Safety
/// `report` must be a live report handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdml_report_coefficient(
    report: *const MdmlReport,
    index: u64,
    out: *mut f64,
) -> MdmlStatus {
    report_field(report, index, out, |r, i| r.theta[i])
}

/// Standard error of coefficient `index`.
///
/// # Safety
/// Same contract as [`mdml_report_coefficient`].
#[no_mangle]
pub unsafe extern "C" fn mdml_report_standard_error(
    report: *const MdmlReport,
    index: u64,
    out: *mut f64,
) -> MdmlStatus {
    report_field(report, index, out, |r, i| r.se[i])
}

/// 95% confidence bounds of coefficient `index`.
///
/// # Safety
/// Same contract as [`mdml_report_coefficient`].
#[no_mangle]
pub unsafe extern "C" fn mdml_report_ci95(
    report: *const MdmlReport,
    index: u64,
    low: *mut f64,
    high: *mut f64,
) -> MdmlStatus {
    let status = report_field(report, index, low, |r, i| r.ci95[i][0]);
    if status != MdmlStatus::Ok {
        return status;
    }
    report_field(report, index, high, |r, i| r.ci95[i][1])
}

/// Name of coefficient `index`; the pointer lives as long as the
/// report handle. Returns NULL on bad input.
///
/// # Safety
/// `report` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn mdml_report_coefficient_name(
    report: *const MdmlReport,
    index: u64,
) -> *const c_char {
    if report.is_null() {
        return std::ptr::null();
    }
    let r = &*report;
    match r.name_storage.get(index as usize) {
        Some(name) => name.as_ptr(),
        None => std::ptr::null(),
    }
}

/// Whole report serialized as JSON; free with [`mdml_string_free`].
///
/// # Safety
/// `report` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn mdml_report_json(report: *const MdmlReport) -> *mut c_char {
    if report.is_null() {
        return std::ptr::null_mut();
    }
    let json = (*report).report.to_json();
    match CString::new(json) {
        Ok(s) => s.into_raw(),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Frees a string returned by [`mdml_report_json`].
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library.
#[no_mangle]
pub unsafe extern "C" fn mdml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Frees a report handle (NULL is ignored).
///
/// # Safety
/// `report` must be NULL or a handle from an estimate call, not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn mdml_report_free(report: *mut MdmlReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
