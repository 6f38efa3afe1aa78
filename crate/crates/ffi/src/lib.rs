//! C ABI over `remixer`.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`RemixerStatus`]; results go through
//!   out-pointers, which are written only on success.
//! * After a non-OK status, [`remixer_last_error`] returns a message for the
//!   calling thread. The pointer stays valid until the next call into this
//!   library from the same thread.
//! * Models and separations are opaque handles owned by the caller and
//!   released with their `_free` function; passing NULL to `_free` is a no-op.
//! * Audio is mono `double` samples at the model's sample rate.
//! * Panics are caught at the boundary and reported as `REMIXER_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use remixer::metrics;
use remixer::model::{decode_cached, forward_separate, remix_from_estimates, Checkpoint, SeparationOutput, Variant};
use remixer::signal::{db_to_linear, GainVector, Waveform};
use remixer::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemixerStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Io = 4,
    Format = 5,
    Degenerate = 6,
    Numerical = 7,
    Panic = 8,
}

/// A loaded checkpoint.
pub struct RemixerModel {
    checkpoint: Checkpoint,
    labels: Vec<CString>,
}

/// Cached separation of one mixture: source estimates plus the latent
/// representation used for decoder-only re-renders.
pub struct RemixerSeparation {
    output: SeparationOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &Error) -> RemixerStatus {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => RemixerStatus::InvalidArgument,
        Error::Domain(_) => RemixerStatus::Domain,
        Error::Degenerate(_) => RemixerStatus::Degenerate,
        Error::Io { .. } => RemixerStatus::Io,
        Error::Parse { .. } | Error::UnsupportedAudio { .. } | Error::Format(_) => RemixerStatus::Format,
        Error::Numerical(_) => RemixerStatus::Numerical,
    }
}

/// Runs `f`, recording the error message and mapping panics.
fn guard(f: impl FnOnce() -> Result<(), RemixerStatus>) -> RemixerStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RemixerStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RemixerStatus::Panic
        }
    }
}

fn fail(e: Error) -> RemixerStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> RemixerStatus {
    set_error(format!("{what} is NULL"));
    RemixerStatus::NullPointer
}

/// Borrows `len` doubles; NULL is allowed only for `len == 0`.
unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], RemixerStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], RemixerStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn model_ref<'a>(model: *const RemixerModel) -> Result<&'a RemixerModel, RemixerStatus> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn sep_ref<'a>(sep: *const RemixerSeparation) -> Result<&'a RemixerSeparation, RemixerStatus> {
    sep.as_ref().ok_or_else(|| null("separation"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn remixer_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty if none.
#[no_mangle]
pub extern "C" fn remixer_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Converts decibels to a linear amplitude ratio.
///
/// # Safety
/// `out` must be NULL or point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn remixer_db_to_linear(db: f64, out: *mut f64) -> RemixerStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = db_to_linear(db).map_err(fail)?;
        Ok(())
    })
}

unsafe fn metric(
    reference: *const f64,
    estimate: *const f64,
    len: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> remixer::Result<f64>,
) -> RemixerStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = slice(reference, len, "reference")?;
        let e = slice(estimate, len, "estimate")?;
        *out = f(r, e).map_err(fail)?;
        Ok(())
    })
}

/// Scale-sensitive SNR in dB.
///
/// # Safety
/// `reference` and `estimate` must point to `len` doubles; `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn remixer_snr(reference: *const f64, estimate: *const f64, len: usize, out: *mut f64) -> RemixerStatus {
    metric(reference, estimate, len, out, |r, e| metrics::snr(r, e))
}

/// Remix quality: min(SNR, SD-SDR) in dB.
///
/// # Safety
/// As [`remixer_snr`].
#[no_mangle]
pub unsafe extern "C" fn remixer_min_sdr(reference: *const f64, estimate: *const f64, len: usize, out: *mut f64) -> RemixerStatus {
    metric(reference, estimate, len, out, |r, e| metrics::min_sdr(r, e))
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must point to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn remixer_model_load(path: *const c_char, out: *mut *mut RemixerModel) -> RemixerStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let path = CStr::from_ptr(path).to_str().map_err(|_| {
            set_error("path is not valid UTF-8");
            RemixerStatus::InvalidArgument
        })?;
        let checkpoint = Checkpoint::load(path).map_err(fail)?;
        let labels = checkpoint
            .labels
            .iter()
            .map(|l| CString::new(l.replace('\0', " ")).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(RemixerModel { checkpoint, labels }));
        Ok(())
    })
}

/// Releases a model.
///
/// # Safety
/// `model` must be NULL or a handle from [`remixer_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn remixer_model_free(model: *mut RemixerModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of sources the model separates; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn remixer_model_num_sources(model: *const RemixerModel) -> usize {
    model.as_ref().map_or(0, |m| m.checkpoint.k())
}

/// Sample rate the model expects; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn remixer_model_sample_rate(model: *const RemixerModel) -> u32 {
    model.as_ref().map_or(0, |m| m.checkpoint.params.config.sample_rate)
}

/// Label of source `k`, owned by the model; NULL when out of range.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn remixer_model_label(model: *const RemixerModel, k: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.labels.get(k))
        .map_or(std::ptr::null(), |l| l.as_ptr())
}

/// Separates a mixture of `len` samples.
///
/// # Safety
/// `model` must be a live handle, `samples` must point to `len` doubles and
/// `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn remixer_separate(
    model: *const RemixerModel,
    samples: *const f64,
    len: usize,
    out: *mut *mut RemixerSeparation,
) -> RemixerStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let x = slice(samples, len, "samples")?;
        if x.is_empty() {
            set_error("mixture is empty");
            return Err(RemixerStatus::InvalidArgument);
        }
        let w = Waveform::new(x.to_vec(), m.checkpoint.params.config.sample_rate);
        let output = forward_separate(&m.checkpoint.params, &w).map_err(fail)?;
        *out = Box::into_raw(Box::new(RemixerSeparation { output }));
        Ok(())
    })
}

/// Releases a separation.
///
/// # Safety
/// `sep` must be NULL or a handle from [`remixer_separate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn remixer_separation_free(sep: *mut RemixerSeparation) {
    if !sep.is_null() {
        drop(Box::from_raw(sep));
    }
}

/// Samples per stem; 0 for NULL.
///
/// # Safety
/// `sep` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn remixer_separation_len(sep: *const RemixerSeparation) -> usize {
    sep.as_ref()
        .and_then(|s| s.output.estimates.first())
        .map_or(0, Waveform::len)
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), RemixerStatus> {
    if src.len() != dst.len() {
        set_error(format!("output buffer holds {} samples, {} required", dst.len(), src.len()));
        return Err(RemixerStatus::InvalidArgument);
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Copies source estimate `k` into `out`, which must hold exactly
/// [`remixer_separation_len`] samples.
///
/// # Safety
/// `sep` must be a live handle and `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn remixer_separation_stem(
    sep: *const RemixerSeparation,
    k: usize,
    out: *mut f64,
    out_len: usize,
) -> RemixerStatus {
    guard(|| {
        let s = sep_ref(sep)?;
        let stem = s.output.estimates.get(k).ok_or_else(|| {
            set_error(format!("source index {k} out of range for {} sources", s.output.estimates.len()));
            RemixerStatus::InvalidArgument
        })?;
        copy_out(&stem.samples, slice_mut(out, out_len, "out")?)
    })
}

/// Renders a remix with per-source gains in dB. Latent-gain checkpoints
/// re-run only the decoder; others scale and sum the cached estimates.
///
/// # Safety
/// `model` and `sep` must be live handles, `gains_db` must point to `k`
/// doubles and `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn remixer_separation_remix(
    model: *const RemixerModel,
    sep: *const RemixerSeparation,
    gains_db: *const f64,
    k: usize,
    out: *mut f64,
    out_len: usize,
) -> RemixerStatus {
    guard(|| {
        let m = model_ref(model)?;
        let s = sep_ref(sep)?;
        let db = slice(gains_db, k, "gains_db")?;
        if k != m.checkpoint.k() || k != s.output.estimates.len() {
            set_error(format!("{k} gains for a {}-source model", m.checkpoint.k()));
            return Err(RemixerStatus::InvalidArgument);
        }
        let gains = GainVector::from_db(db.to_vec()).map_err(fail)?;
        let remix = match m.checkpoint.variant {
            Variant::Model2 => {
                let stems = decode_cached(&m.checkpoint.params, &s.output, Some(&gains)).map_err(fail)?;
                let mut acc = vec![0.0; stems[0].len()];
                for st in &stems {
                    for (a, v) in acc.iter_mut().zip(&st.samples) {
                        *a += v;
                    }
                }
                acc
            }
            Variant::Baseline | Variant::Model1 => remix_from_estimates(&s.output, &gains).map_err(fail)?.samples,
        };
        copy_out(&remix, slice_mut(out, out_len, "out")?)
    })
}
