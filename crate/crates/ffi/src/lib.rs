//! C ABI over `modalign`.
//!
//! Models and datasets are opaque heap handles released with their
//! `_free` function. Every fallible call returns a [`MalnStatus`]; on
//! failure the message is kept per thread and read with
//! [`maln_last_error_message`]. Vectors cross the boundary as
//! `(pointer, length)` pairs of `double`, and outputs go into
//! caller-owned buffers whose length is checked.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use modalign::data::{ingest, Dataset};
use modalign::model::{convert, embed, load_checkpoint, semantic_of, Modality, ModelParams};
use modalign::numerics::Tensor;
use modalign::retrieval::{build_index, query_embeddings, Variant};
use modalign::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MalnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    ShapeMismatch = 6,
    DegenerateVector = 7,
    Checkpoint = 8,
    EmptyGallery = 9,
    BufferTooSmall = 10,
    Panic = 11,
    Internal = 12,
}

/// Modality codes, matching the record file format.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MalnModality {
    Sketch = 0,
    Photo = 1,
    Text = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MalnVariant {
    Clip = 0,
    Original = 1,
    Converted = 2,
}

/// Opaque trained model.
pub struct MalnModel {
    params: ModelParams,
}

/// Opaque record collection.
pub struct MalnDataset {
    data: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(MalnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => MalnStatus::Io,
            Error::Parse { .. } | Error::DimensionMismatch { .. } | Error::DuplicateId(_) => MalnStatus::Parse,
            Error::ShapeMismatch { .. } => MalnStatus::ShapeMismatch,
            Error::DegenerateVector { .. } | Error::DegenerateCovariance(_) => MalnStatus::DegenerateVector,
            Error::VersionMismatch(_) | Error::CorruptCheckpoint(_) => MalnStatus::Checkpoint,
            Error::EmptyGallery | Error::InvalidGallery(_) => MalnStatus::EmptyGallery,
            Error::InvalidModality(_) | Error::InvalidConfig(_) | Error::InvalidTensor(_) => MalnStatus::InvalidArgument,
            _ => MalnStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn fail<T>(status: MalnStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Outcome) -> MalnStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MalnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside modalign".into());
            MalnStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, Failure> {
    if path.is_null() {
        return fail(MalnStatus::NullPointer, "path is null");
    }
    CStr::from_ptr(path)
        .to_str()
        .or_else(|_| fail(MalnStatus::InvalidUtf8, "path is not valid UTF-8"))
}

unsafe fn input<'a>(data: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return fail(MalnStatus::NullPointer, "input buffer is null");
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn output<'a, T>(data: *mut T, len: usize, needed: usize) -> Result<&'a mut [T], Failure> {
    if len < needed {
        return fail(MalnStatus::BufferTooSmall, format!("output buffer holds {len}, {needed} needed"));
    }
    if needed == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return fail(MalnStatus::NullPointer, "output buffer is null");
    }
    Ok(slice::from_raw_parts_mut(data, needed))
}

unsafe fn model_ref<'a>(model: *const MalnModel) -> Result<&'a ModelParams, Failure> {
    match model.as_ref() {
        Some(m) => Ok(&m.params),
        None => fail(MalnStatus::NullPointer, "model handle is null"),
    }
}

fn modality(m: MalnModality) -> Modality {
    match m {
        MalnModality::Sketch => Modality::Sketch,
        MalnModality::Photo => Modality::Photo,
        MalnModality::Text => Modality::Text,
    }
}

fn vector(values: &[f64]) -> Result<Tensor, Failure> {
    Ok(Tensor::vector(values.to_vec())?)
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn maln_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn maln_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint into `*out`.
#[no_mangle]
pub unsafe extern "C" fn maln_model_load(path: *const c_char, out: *mut *mut MalnModel) -> MalnStatus {
    guard(|| {
        if out.is_null() {
            return fail(MalnStatus::NullPointer, "out is null");
        }
        let params = load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MalnModel { params }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn maln_model_free(model: *mut MalnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn maln_model_dim(model: *const MalnModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.dim())
}

/// Encoder input dimension for `m`, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn maln_model_input_dim(model: *const MalnModel, m: MalnModality) -> usize {
    model.as_ref().map_or(0, |h| h.params.encoder(modality(m)).input_dim())
}

/// Raw embedding `z` of one feature vector; writes `dim` values.
#[no_mangle]
pub unsafe extern "C" fn maln_embed(
    model: *const MalnModel,
    m: MalnModality,
    features: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> MalnStatus {
    guard(|| {
        let params = model_ref(model)?;
        let z = embed(params, &vector(input(features, len)?)?, modality(m))?;
        output(out, out_len, z.len())?.copy_from_slice(z.data());
        Ok(())
    })
}

/// `z − m_src + m_trg`.
#[no_mangle]
pub unsafe extern "C" fn maln_convert(
    model: *const MalnModel,
    src: MalnModality,
    trg: MalnModality,
    z: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> MalnStatus {
    guard(|| {
        let params = model_ref(model)?;
        let v = convert(&vector(input(z, len)?)?, modality(src), modality(trg), &params.table)?;
        output(out, out_len, v.len())?.copy_from_slice(v.data());
        Ok(())
    })
}

/// Unit semantic vector `N(z − m)`.
#[no_mangle]
pub unsafe extern "C" fn maln_semantic(
    model: *const MalnModel,
    m: MalnModality,
    z: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> MalnStatus {
    guard(|| {
        let params = model_ref(model)?;
        let s = semantic_of(&vector(input(z, len)?)?, modality(m), &params.table)?;
        output(out, out_len, s.len())?.copy_from_slice(s.data());
        Ok(())
    })
}

/// Copies the learned encoding `m` of a modality.
#[no_mangle]
pub unsafe extern "C" fn maln_modality_encoding(
    model: *const MalnModel,
    m: MalnModality,
    out: *mut f64,
    out_len: usize,
) -> MalnStatus {
    guard(|| {
        let enc = model_ref(model)?.table.encoding(modality(m));
        output(out, out_len, enc.len())?.copy_from_slice(enc);
        Ok(())
    })
}

/// Loads a `#MAEB v1` record file into `*out`.
#[no_mangle]
pub unsafe extern "C" fn maln_dataset_load(path: *const c_char, out: *mut *mut MalnDataset) -> MalnStatus {
    guard(|| {
        if out.is_null() {
            return fail(MalnStatus::NullPointer, "out is null");
        }
        let data = ingest(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MalnDataset { data }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn maln_dataset_free(dataset: *mut MalnDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Record count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn maln_dataset_len(dataset: *const MalnDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.len())
}

/// Feature dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn maln_dataset_dim(dataset: *const MalnDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.dim())
}

/// Ranks every record of `gallery` (all photos) for one sketch feature
/// vector. Writes gallery record positions, best first; ties go to the
/// smaller record id.
#[no_mangle]
pub unsafe extern "C" fn maln_rank(
    model: *const MalnModel,
    gallery: *const MalnDataset,
    sketch: *const f64,
    len: usize,
    variant: MalnVariant,
    out: *mut usize,
    out_len: usize,
) -> MalnStatus {
    guard(|| {
        let params = model_ref(model)?;
        let Some(gallery) = gallery.as_ref() else {
            return fail(MalnStatus::NullPointer, "gallery handle is null");
        };
        let variant = match variant {
            MalnVariant::Clip => Variant::Clip,
            MalnVariant::Original => Variant::Original,
            MalnVariant::Converted => Variant::Converted,
        };
        let index = build_index(&gallery.data, params, variant)?;
        let features = input(sketch, len)?;
        let record = modalign::data::EmbeddingRecord {
            id: "query".into(),
            class_id: 0,
            modality: Modality::Sketch,
            features: features.to_vec(),
            pair_id: None,
        };
        let q = query_embeddings(&[&record], len, params, variant)?;
        let order = index.rank(q.row(0))?;
        output(out, out_len, order.len())?.copy_from_slice(&order);
        Ok(())
    })
}
