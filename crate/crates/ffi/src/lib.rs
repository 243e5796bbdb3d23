//! C ABI over the recommender.
//!
//! Every fallible function returns an [`MmStatus`]; on failure the message
//! is available from [`mm_last_error`] on the same thread. Strings handed
//! out by this library are NUL-terminated UTF-8 and must be released with
//! [`mm_string_free`]. Handles are released with [`mm_recommender_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use musical_moments::pipeline::{phase1_tag_profile, phase2_predict, run_pipeline};
use musical_moments::service::{Artifacts, ProfileResponse, PROFILE_TAGS};
use musical_moments::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    DatasetFormat = 4,
    ModelFormat = 5,
    VocabularyMismatch = 6,
    Internal = 7,
    Panic = 8,
}

/// Loaded model, dataset and library. Immutable; safe to share between
/// threads.
pub struct MmRecommender {
    artifacts: Artifacts,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(error: &Error) -> MmStatus {
    match error {
        Error::Invalid { .. } => MmStatus::InvalidArgument,
        Error::Io { .. } => MmStatus::Io,
        Error::DatasetFormat { .. } | Error::JoinMismatch(_) | Error::Csv(_) => MmStatus::DatasetFormat,
        Error::ModelFormat(_) | Error::Json(_) => MmStatus::ModelFormat,
        Error::VocabularyMismatch { .. } => MmStatus::VocabularyMismatch,
        _ => MmStatus::Internal,
    }
}

struct Failure(MmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MmStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            MmStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure(MmStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(MmStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn hour_arg(hour: i32) -> Result<u32, Failure> {
    u32::try_from(hour)
        .ok()
        .filter(|h| *h < 24)
        .ok_or_else(|| Failure(MmStatus::InvalidArgument, format!("hour {hour} outside 0..=23")))
}

unsafe fn handle<'a>(h: *const MmRecommender) -> Result<&'a MmRecommender, Failure> {
    h.as_ref().ok_or_else(|| Failure(MmStatus::NullArgument, "recommender is NULL".into()))
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure(MmStatus::Internal, e.to_string()))?;
    // SAFETY: callers check `out` before doing any work.
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn null_out<T>(out: *mut T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(MmStatus::NullArgument, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

/// Library version, a static string. Do not free.
#[no_mangle]
pub extern "C" fn mm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread. Do not free.
#[no_mangle]
pub extern "C" fn mm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a model file, a dataset directory and a library (a file or a
/// directory; NULL means the dataset directory).
///
/// # Safety
/// Path arguments must be NULL or valid NUL-terminated strings; `out` must
/// be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mm_recommender_load(
    model_path: *const c_char,
    dataset_dir: *const c_char,
    library_path: *const c_char,
    out: *mut *mut MmRecommender,
) -> MmStatus {
    guard(|| {
        null_out(out, "out")?;
        let model = path_arg(model_path, "model_path")?;
        let dataset = path_arg(dataset_dir, "dataset_dir")?;
        let library =
            if library_path.is_null() { None } else { Some(path_arg(library_path, "library_path")?) };
        let artifacts = Artifacts::load(&model, &dataset, library.as_deref())?;
        *out = Box::into_raw(Box::new(MmRecommender { artifacts }));
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a handle from [`mm_recommender_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mm_recommender_free(h: *mut MmRecommender) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Runs all four phases and writes the result as JSON (the same document
/// the HTTP API returns) to `*out_json`.
///
/// # Safety
/// `h` must be a live handle; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_recommend_json(
    h: *const MmRecommender,
    hour: i32,
    k: u32,
    epsilon: f64,
    out_json: *mut *mut c_char,
) -> MmStatus {
    guard(|| {
        null_out(out_json, "out_json")?;
        let a = &handle(h)?.artifacts;
        let hour = hour_arg(hour)?;
        let result = run_pipeline(&a.dataset, &a.model, &a.library, hour, k as usize, epsilon)?;
        out_string(out_json, serde_json::to_string(&result).map_err(Error::from)?)
    })
}

/// Writes the hour's tag profile as JSON to `*out_json`.
///
/// # Safety
/// `h` must be a live handle; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_profile_json(
    h: *const MmRecommender,
    hour: i32,
    out_json: *mut *mut c_char,
) -> MmStatus {
    guard(|| {
        null_out(out_json, "out_json")?;
        let a = &handle(h)?.artifacts;
        let hour = hour_arg(hour)?;
        let p = phase1_tag_profile(&a.dataset, hour)?;
        let response = ProfileResponse {
            hour,
            support: p.support,
            fallback: p.fallback,
            tags: p.top_tags(&a.dataset.vocabulary, PROFILE_TAGS),
        };
        out_string(out_json, serde_json::to_string(&response).map_err(Error::from)?)
    })
}

/// Predicted target feature for an hour.
///
/// # Safety
/// `h` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_predict(h: *const MmRecommender, hour: i32, out: *mut f64) -> MmStatus {
    guard(|| {
        null_out(out, "out")?;
        let a = &handle(h)?.artifacts;
        let profile = phase1_tag_profile(&a.dataset, hour_arg(hour)?)?;
        *out = phase2_predict(&a.model, &profile, &a.dataset.vocabulary)?;
        Ok(())
    })
}

/// Number of moments in the loaded dataset.
///
/// # Safety
/// `h` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_dataset_len(h: *const MmRecommender, out: *mut usize) -> MmStatus {
    guard(|| {
        null_out(out, "out")?;
        *out = handle(h)?.artifacts.dataset.len();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
