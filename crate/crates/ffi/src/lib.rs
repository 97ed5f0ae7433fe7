//! C ABI over the cmx engine.
//!
//! Datasets are opaque `CmxDataset` handles. Every fallible call returns a
//! [`CmxStatus`]; on failure `cmx_last_error` describes the problem. Strings
//! returned through out-parameters are owned by the caller and released with
//! `cmx_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cmx::engine::{evaluate, QueryError};
use cmx::spec::{parse_spec, serialize_spec};
use cmx::view::{to_csv, to_json, to_table};
use cmx::Dataset;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmxStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidDataset = 3,
    InvalidSpec = 4,
    /// The spec's conditions match no records.
    ZeroMass = 5,
    Internal = 6,
}

/// Output format of `cmx_query`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmxFormat {
    Json = 0,
    Csv = 1,
    Table = 2,
}

/// An ingested, immutable dataset.
pub struct CmxDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).expect("NUL bytes removed"));
}

fn guarded(f: impl FnOnce() -> Result<(), (CmxStatus, String)>) -> CmxStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmxStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal error");
            CmxStatus::Internal
        }
    }
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], (CmxStatus, String)> {
    if data.is_null() {
        if len == 0 {
            return Ok(&[]);
        }
        return Err((CmxStatus::NullArgument, "null buffer".into()));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a [u8], (CmxStatus, String)> {
    if s.is_null() {
        return Err((CmxStatus::NullArgument, "null string".into()));
    }
    Ok(CStr::from_ptr(s).to_bytes())
}

fn out_string(out: *mut *mut c_char, text: String) -> Result<(), (CmxStatus, String)> {
    let text = CString::new(text).map_err(|_| (CmxStatus::Internal, "output contains NUL".to_string()))?;
    unsafe { *out = text.into_raw() };
    Ok(())
}

/// Ingests a schema document and an NDJSON prediction log.
///
/// # Safety
/// `schema` and `records` point to `schema_len` and `records_len` readable
/// bytes; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cmx_dataset_new(
    schema: *const u8,
    schema_len: usize,
    records: *const u8,
    records_len: usize,
    out: *mut *mut CmxDataset,
) -> CmxStatus {
    guarded(|| {
        if out.is_null() {
            return Err((CmxStatus::NullArgument, "null out pointer".into()));
        }
        *out = ptr::null_mut();
        let ds = cmx::ingest(bytes(schema, schema_len)?, bytes(records, records_len)?)
            .map_err(|e| (CmxStatus::InvalidDataset, e.violations().join("\n")))?;
        *out = Box::into_raw(Box::new(CmxDataset { inner: ds }));
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` comes from `cmx_dataset_new` and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmx_dataset_free(ds: *mut CmxDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of records, 0 for null.
///
/// # Safety
/// `ds` is null or a live dataset.
#[no_mangle]
pub unsafe extern "C" fn cmx_dataset_len(ds: *const CmxDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Evaluates a NUL-terminated spec and writes the view in `format` to `out`.
///
/// # Safety
/// `ds` is a live dataset, `spec` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cmx_query(
    ds: *const CmxDataset,
    spec: *const c_char,
    format: CmxFormat,
    out: *mut *mut c_char,
) -> CmxStatus {
    guarded(|| {
        if out.is_null() {
            return Err((CmxStatus::NullArgument, "null out pointer".into()));
        }
        *out = ptr::null_mut();
        let ds = ds
            .as_ref()
            .ok_or((CmxStatus::NullArgument, "null dataset".to_string()))?;
        let spec = parse_spec(c_str(spec)?).map_err(|e| (CmxStatus::InvalidSpec, e.to_string()))?;
        let view = evaluate(&ds.inner, &spec).map_err(|e| match e {
            QueryError::ZeroMass => (CmxStatus::ZeroMass, e.to_string()),
            QueryError::Invalid(v) => (
                CmxStatus::InvalidSpec,
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"),
            ),
            other => (CmxStatus::InvalidSpec, other.to_string()),
        })?;
        let text = match format {
            CmxFormat::Json => to_json(&view, &spec),
            CmxFormat::Csv => to_csv(&view).map_err(|e| (CmxStatus::Internal, e.to_string()))?,
            CmxFormat::Table => to_table(&view),
        };
        out_string(out, text)
    })
}

/// Parses spec text and writes its canonical serialization to `out`.
///
/// # Safety
/// `spec` is a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cmx_spec_canonicalize(spec: *const c_char, out: *mut *mut c_char) -> CmxStatus {
    guarded(|| {
        if out.is_null() {
            return Err((CmxStatus::NullArgument, "null out pointer".into()));
        }
        *out = ptr::null_mut();
        let text = c_str(spec)?;
        if std::str::from_utf8(text).is_err() {
            return Err((CmxStatus::InvalidUtf8, "spec is not UTF-8".into()));
        }
        let spec = parse_spec(text).map_err(|e| (CmxStatus::InvalidSpec, e.to_string()))?;
        out_string(out, serialize_spec(&spec))
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread; empty after success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn cmx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn cmx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
