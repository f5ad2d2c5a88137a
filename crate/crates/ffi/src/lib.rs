//! C ABI over the separation toolkit.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or an
//! operation's out-parameter and released with the matching `*_free`.
//! Every fallible call returns a [`UasepStatus`]; on failure the message is
//! available from [`uasep_last_error_message`] on the same thread. Panics
//! never unwind into C: they surface as `UASEP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use uasep::metrics::similarity;
use uasep::pipeline::{evaluate, PipelineConfig, Separation, Separator};
use uasep::signals::TimeSignal;
use uasep::tfr::{istft, stft, Spectrogram, StftConfig, WindowKind};
use uasep::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UasepStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Format = 4,
    Degenerate = 5,
    UndefinedMetric = 6,
    Diverged = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Time signal handle.
pub struct UasepSignal(TimeSignal);

/// Complex spectrogram handle.
pub struct UasepSpectrogram(Spectrogram);

/// Configured separator handle; holds the network for the deep method.
pub struct UasepSeparator(Separator);

/// Result of one separation: estimates and their binary masks.
pub struct UasepSeparation(Separation);

/// Aggregate scores against references, means over aligned pairs.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UasepScores {
    pub mean_xi: f64,
    pub mean_psr: f64,
    /// `INFINITY` when no interference energy survives any mask.
    pub mean_sir_m: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(UasepStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parameter { .. } => UasepStatus::InvalidArgument,
            Error::Config(_) => UasepStatus::Config,
            Error::Format { .. } | Error::Json(_) => UasepStatus::Format,
            Error::Degenerate(_) => UasepStatus::Degenerate,
            Error::UndefinedMetric { .. } => UasepStatus::UndefinedMetric,
            Error::Diverged { .. } => UasepStatus::Diverged,
            Error::Io { .. } => UasepStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(UasepStatus::NullPointer, format!("`{name}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(UasepStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording its failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UasepStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UasepStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            UasepStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or points to a live `T`.
unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| null(name))
}

/// # Safety
/// `out` is null or valid for one pointer write.
unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// # Safety
/// `p` is null or was produced by `Box::into_raw` and not yet freed.
unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// # Safety
/// `data` is null only when `len` is 0, otherwise valid for `len` reads.
unsafe fn slice<'a, T>(data: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(name));
    }
    Ok(unsafe { std::slice::from_raw_parts(data, len) })
}

/// # Safety
/// `handles` points to `count` live signal handles.
unsafe fn signals(handles: *const *const UasepSignal, count: usize, name: &str) -> Result<Vec<TimeSignal>, Failure> {
    unsafe { slice(handles, count, name)? }
        .iter()
        .map(|&h| unsafe { get(h, name) }.map(|s| s.0.clone()))
        .collect()
}

/// Message of the most recent failed call on this thread, or null. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn uasep_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn uasep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `len` samples into a new signal.
///
/// # Safety
/// `samples` is valid for `len` reads; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn uasep_signal_new(
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out: *mut *mut UasepSignal,
) -> UasepStatus {
    guard(|| {
        let data = unsafe { slice(samples, len, "samples")? }.to_vec();
        let signal = TimeSignal::new(data, sample_rate)?;
        unsafe { put(out, UasepSignal(signal)) }
    })
}

/// # Safety
/// `signal` is a live handle; `len` and `sample_rate` are null or writable.
#[no_mangle]
pub unsafe extern "C" fn uasep_signal_info(
    signal: *const UasepSignal,
    len: *mut usize,
    sample_rate: *mut u32,
) -> UasepStatus {
    guard(|| {
        let s = unsafe { get(signal, "signal")? };
        if let Some(l) = unsafe { len.as_mut() } {
            *l = s.0.len();
        }
        if let Some(r) = unsafe { sample_rate.as_mut() } {
            *r = s.0.sample_rate();
        }
        Ok(())
    })
}

/// Copies the samples into `buf`, which must hold the full signal.
///
/// # Safety
/// `signal` is a live handle; `buf` is valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn uasep_signal_copy(signal: *const UasepSignal, buf: *mut f64, capacity: usize) -> UasepStatus {
    guard(|| {
        let s = unsafe { get(signal, "signal")? }.0.samples();
        if capacity < s.len() {
            return Err(Failure(
                UasepStatus::BufferTooSmall,
                format!("buffer holds {capacity} samples, signal has {}", s.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        unsafe { ptr::copy_nonoverlapping(s.as_ptr(), buf, s.len()) };
        Ok(())
    })
}

/// # Safety
/// `signal` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uasep_signal_free(signal: *mut UasepSignal) {
    unsafe { free(signal) }
}

/// Short-time Fourier transform. `window`: 0 Hann, 1 sqrt-Hann, 2 Hamming,
/// 3 rectangular.
///
/// # Safety
/// `signal` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn uasep_stft(
    signal: *const UasepSignal,
    frame_ms: f64,
    hop_ms: f64,
    window: u8,
    out: *mut *mut UasepSpectrogram,
) -> UasepStatus {
    guard(|| {
        let s = unsafe { get(signal, "signal")? };
        let window = WindowKind::from_code(window).ok_or_else(|| invalid(format!("unknown window code {window}")))?;
        let spec = stft(&s.0, &StftConfig::new(frame_ms, hop_ms, window))?;
        unsafe { put(out, UasepSpectrogram(spec)) }
    })
}

/// # Safety
/// `spec` is a live handle; `frames` and `bins` are null or writable.
#[no_mangle]
pub unsafe extern "C" fn uasep_spectrogram_shape(
    spec: *const UasepSpectrogram,
    frames: *mut usize,
    bins: *mut usize,
) -> UasepStatus {
    guard(|| {
        let (t, f) = unsafe { get(spec, "spec")? }.0.shape();
        if let Some(p) = unsafe { frames.as_mut() } {
            *p = t;
        }
        if let Some(p) = unsafe { bins.as_mut() } {
            *p = f;
        }
        Ok(())
    })
}

/// Resynthesizes a signal of the analyzed length.
///
/// # Safety
/// `spec` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn uasep_istft(spec: *const UasepSpectrogram, out: *mut *mut UasepSignal) -> UasepStatus {
    guard(|| {
        let signal = istft(&unsafe { get(spec, "spec")? }.0)?;
        unsafe { put(out, UasepSignal(signal)) }
    })
}

/// # Safety
/// `spec` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uasep_spectrogram_free(spec: *mut UasepSpectrogram) {
    unsafe { free(spec) }
}

/// Builds a separator from a JSON pipeline configuration; null or an empty
/// string selects the defaults. The deep method loads its checkpoint here.
///
/// # Safety
/// `config_json` is null or a NUL-terminated string; `out` is valid for one
/// write.
#[no_mangle]
pub unsafe extern "C" fn uasep_separator_new(config_json: *const c_char, out: *mut *mut UasepSeparator) -> UasepStatus {
    guard(|| {
        let text = if config_json.is_null() {
            ""
        } else {
            unsafe { CStr::from_ptr(config_json) }
                .to_str()
                .map_err(|e| invalid(format!("config is not UTF-8: {e}")))?
        };
        let cfg: PipelineConfig = if text.trim().is_empty() {
            PipelineConfig::default()
        } else {
            serde_json::from_str(text).map_err(Error::from)?
        };
        let sep = Separator::new(cfg)?;
        unsafe { put(out, UasepSeparator(sep)) }
    })
}

/// # Safety
/// `separator` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uasep_separator_free(separator: *mut UasepSeparator) {
    unsafe { free(separator) }
}

/// Separates `count` observations of the same scene into `sources` estimates
/// (or the configured fixed cluster count).
///
/// # Safety
/// `separator` is a live handle; `observations` points to `count` live
/// signal handles; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn uasep_separate(
    separator: *const UasepSeparator,
    observations: *const *const UasepSignal,
    count: usize,
    sources: usize,
    out: *mut *mut UasepSeparation,
) -> UasepStatus {
    guard(|| {
        let sep = unsafe { get(separator, "separator")? };
        let obs = unsafe { signals(observations, count, "observations")? };
        let result = sep.0.separate(&obs, sources)?;
        unsafe { put(out, UasepSeparation(result)) }
    })
}

/// Number of estimates, one per cluster.
///
/// # Safety
/// `separation` is a live handle; `count` is writable.
#[no_mangle]
pub unsafe extern "C" fn uasep_separation_count(separation: *const UasepSeparation, count: *mut usize) -> UasepStatus {
    guard(|| {
        let n = unsafe { get(separation, "separation")? }.0.estimates.len();
        *unsafe { count.as_mut() }.ok_or_else(|| null("count"))? = n;
        Ok(())
    })
}

/// Copies estimate `index` into a new signal handle.
///
/// # Safety
/// `separation` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn uasep_separation_estimate(
    separation: *const UasepSeparation,
    index: usize,
    out: *mut *mut UasepSignal,
) -> UasepStatus {
    guard(|| {
        let sep = &unsafe { get(separation, "separation")? }.0;
        let est = sep
            .estimates
            .get(index)
            .ok_or_else(|| invalid(format!("estimate {index} of {}", sep.estimates.len())))?;
        unsafe { put(out, UasepSignal(est.clone())) }
    })
}

/// Copies mask `index` as row-major `frames x bins` bytes of 0 or 1; the
/// shape matches the mixture spectrogram.
///
/// # Safety
/// `separation` is a live handle; `buf` is valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn uasep_separation_mask(
    separation: *const UasepSeparation,
    index: usize,
    buf: *mut u8,
    capacity: usize,
) -> UasepStatus {
    guard(|| {
        let sep = &unsafe { get(separation, "separation")? }.0;
        let mask = sep
            .masks
            .get(index)
            .ok_or_else(|| invalid(format!("mask {index} of {}", sep.masks.len())))?;
        let cells = mask.cells();
        if capacity < cells.len() {
            return Err(Failure(
                UasepStatus::BufferTooSmall,
                format!("buffer holds {capacity} cells, mask has {}", cells.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let out = unsafe { std::slice::from_raw_parts_mut(buf, cells.len()) };
        for (o, &c) in out.iter_mut().zip(cells.iter()) {
            *o = c;
        }
        Ok(())
    })
}

/// Mixture spectrogram shape, which is also every mask's shape.
///
/// # Safety
/// `separation` is a live handle; `frames` and `bins` are null or writable.
#[no_mangle]
pub unsafe extern "C" fn uasep_separation_shape(
    separation: *const UasepSeparation,
    frames: *mut usize,
    bins: *mut usize,
) -> UasepStatus {
    guard(|| {
        let (t, f) = unsafe { get(separation, "separation")? }.0.mixture.shape();
        if let Some(p) = unsafe { frames.as_mut() } {
            *p = t;
        }
        if let Some(p) = unsafe { bins.as_mut() } {
            *p = f;
        }
        Ok(())
    })
}

/// Scores the estimates against `count` clean references after aligning
/// each reference to its best estimate.
///
/// # Safety
/// `separation` is a live handle; `references` points to `count` live
/// signal handles; `scores` is writable.
#[no_mangle]
pub unsafe extern "C" fn uasep_separation_evaluate(
    separation: *const UasepSeparation,
    references: *const *const UasepSignal,
    count: usize,
    scores: *mut UasepScores,
) -> UasepStatus {
    guard(|| {
        let sep = unsafe { get(separation, "separation")? };
        let refs = unsafe { signals(references, count, "references")? };
        let out = unsafe { scores.as_mut() }.ok_or_else(|| null("scores"))?;
        let report = evaluate(&sep.0, &refs)?;
        *out = UasepScores {
            mean_xi: report.mean_xi,
            mean_psr: report.mean_psr,
            mean_sir_m: report.mean_sir_m,
        };
        Ok(())
    })
}

/// # Safety
/// `separation` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uasep_separation_free(separation: *mut UasepSeparation) {
    unsafe { free(separation) }
}

/// Similarity coefficient of an estimate against a reference, in [0, 1].
///
/// # Safety
/// Both signals are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn uasep_similarity(
    estimate: *const UasepSignal,
    reference: *const UasepSignal,
    out: *mut f64,
) -> UasepStatus {
    guard(|| {
        let y = unsafe { get(estimate, "estimate")? };
        let x = unsafe { get(reference, "reference")? };
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = similarity(&y.0, &x.0)?;
        Ok(())
    })
}
