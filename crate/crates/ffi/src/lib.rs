//! C ABI over the `nextloc` crate.
//!
//! Datasets and models are opaque handles created by `*_open`/`*_load` and
//! released by the matching `*_free`. Every fallible call returns an
//! [`NlStatus`]; on failure `nl_last_error` describes the most recent error
//! on the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nextloc::data::{read_dataset, Dataset, Record, Split};
use nextloc::eval::evaluate;
use nextloc::model::{Model, SeqBatch};
use nextloc::stratify::{PredictionSample, Stratum};
use nextloc::train::{in_split, samples_for};
use nextloc::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Compatibility = 5,
    OutOfRange = 6,
    EmptyInput = 7,
    Internal = 99,
}

impl From<&Error> for NlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => NlStatus::Io,
            Error::Format { .. } | Error::Json(_) => NlStatus::Format,
            Error::Compatibility(_) => NlStatus::Compatibility,
            Error::Lookup { .. } | Error::Label { .. } => NlStatus::OutOfRange,
            Error::EmptyDataset(_) | Error::UndefinedMetrics(_) => NlStatus::EmptyInput,
            Error::Usage(_) | Error::Config(_) | Error::Dimension { .. } => {
                NlStatus::InvalidArgument
            }
            _ => NlStatus::Internal,
        }
    }
}

/// Opaque dataset handle.
pub struct NlDataset(Dataset);

/// Opaque model handle.
pub struct NlModel(Model<f32>);

/// Micro-averaged metrics at one cutoff.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NlMetrics {
    pub recall: f64,
    pub mrr: f64,
    pub ndcg: f64,
    pub count: usize,
}

/// Stratum selector for [`nl_evaluate`].
pub const NL_SCOPE_ALL: i32 = 0;
pub const NL_SCOPE_T1: i32 = 1;
pub const NL_SCOPE_T2: i32 = 2;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: NlStatus, msg: impl Into<String>) -> NlStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), NlStatus>) -> NlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(NlStatus::Internal, "panic inside nextloc"),
    }
}

fn lift<T>(r: nextloc::Result<T>) -> Result<T, NlStatus> {
    r.map_err(|e| fail(NlStatus::from(&e), e.to_string()))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, NlStatus> {
    if p.is_null() {
        return Err(fail(NlStatus::NullArgument, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(NlStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, NlStatus> {
    p.as_ref()
        .ok_or_else(|| fail(NlStatus::NullArgument, format!("{what} is null")))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn nl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens a dataset directory.
#[no_mangle]
pub unsafe extern "C" fn nl_dataset_open(dir: *const c_char, out: *mut *mut NlDataset) -> NlStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(NlStatus::NullArgument, "out is null"));
        }
        let ds = lift(read_dataset(&path_arg(dir)?))?;
        *out = Box::into_raw(Box::new(NlDataset(ds)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nl_dataset_free(ds: *mut NlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of users, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn nl_dataset_n_users(ds: *const NlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_users())
}

/// Number of locations, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn nl_dataset_n_locations(ds: *const NlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_locations())
}

/// Loads a checkpoint directory.
#[no_mangle]
pub unsafe extern "C" fn nl_model_load(dir: *const c_char, out: *mut *mut NlModel) -> NlStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(NlStatus::NullArgument, "out is null"));
        }
        let m = lift(Model::<f32>::load(&path_arg(dir)?))?;
        *out = Box::into_raw(Box::new(NlModel(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nl_model_free(m: *mut NlModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Size of the logit vector, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn nl_model_n_locations(m: *const NlModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.config.n_locations)
}

/// Next-location logits for one history of `len` (location, hour) pairs.
/// `out_logits` must hold `out_len >= nl_model_n_locations(model)` floats.
#[no_mangle]
pub unsafe extern "C" fn nl_model_predict(
    model: *const NlModel,
    user: u32,
    locations: *const u32,
    hours: *const u8,
    len: usize,
    out_logits: *mut f32,
    out_len: usize,
) -> NlStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        if locations.is_null() || hours.is_null() || out_logits.is_null() {
            return Err(fail(
                NlStatus::NullArgument,
                "input or output buffer is null",
            ));
        }
        if len == 0 {
            return Err(fail(NlStatus::EmptyInput, "history is empty"));
        }
        let n = m.config.n_locations;
        if out_len < n {
            return Err(fail(
                NlStatus::InvalidArgument,
                format!("output buffer holds {out_len} values, need {n}"),
            ));
        }
        let locs = std::slice::from_raw_parts(locations, len);
        let hrs = std::slice::from_raw_parts(hours, len);
        let sample = PredictionSample {
            user,
            inputs: locs
                .iter()
                .zip(hrs)
                .map(|(&location, &hour)| Record {
                    user,
                    location,
                    hour,
                    category: None,
                    ts: 0,
                })
                .collect(),
            target: 0,
            target_hour: 0,
            target_category: None,
            stratum: Stratum::T1,
            split: Split::Test,
            trajectory: 0,
        };
        let y = lift(m.predict(&SeqBatch::from_samples(&[&sample])))?;
        std::slice::from_raw_parts_mut(out_logits, n).copy_from_slice(y.row(0));
        Ok(())
    })
}

/// Scores `model` on the test split of `ds` at cutoff `k`, with strata tagged
/// against `threshold`. `scope` is one of `NL_SCOPE_ALL`, `NL_SCOPE_T1`,
/// `NL_SCOPE_T2`; a scope without samples reports `count = 0`.
#[no_mangle]
pub unsafe extern "C" fn nl_evaluate(
    model: *const NlModel,
    ds: *const NlDataset,
    threshold: u32,
    k: usize,
    scope: i32,
    out: *mut NlMetrics,
) -> NlStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        let d = &non_null(ds, "dataset")?.0;
        if out.is_null() {
            return Err(fail(NlStatus::NullArgument, "out is null"));
        }
        if k == 0 {
            return Err(fail(NlStatus::InvalidArgument, "k must be positive"));
        }
        let stratum = match scope {
            NL_SCOPE_ALL => None,
            NL_SCOPE_T1 => Some(Stratum::T1),
            NL_SCOPE_T2 => Some(Stratum::T2),
            s => {
                return Err(fail(
                    NlStatus::InvalidArgument,
                    format!("unknown scope {s}"),
                ))
            }
        };
        let samples = samples_for(d, threshold);
        let report = lift(evaluate(m, d, &in_split(&samples, Split::Test), &[k]))?;
        let scope = match stratum {
            None => Some(&report.overall),
            Some(s) => report.stratum(s),
        };
        *out = scope.and_then(|s| s.at(k).map(|mm| (s.count, mm))).map_or(
            NlMetrics::default(),
            |(count, mm)| NlMetrics {
                recall: mm.recall,
                mrr: mm.mrr,
                ndcg: mm.ndcg,
                count,
            },
        );
        Ok(())
    })
}
