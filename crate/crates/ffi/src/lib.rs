//! C ABI over the innovguard detector and waveform codec.
//!
//! Every fallible call returns an `IgStatus`. On failure the message is kept
//! per thread and read back with `ig_last_error_message`. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Variable-length outputs use a caller buffer plus a
//! `written` count; a short buffer yields `IG_STATUS_BUFFER_TOO_SMALL` with the
//! required length stored in `written`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use innovguard::compression::{
    compress_pipeline, decompress_pipeline, train_subband_models, CompressedBlob, SubbandPlan,
};
use innovguard::innovation::model::{estimate_ar_model_with, ArEstimator, ArInnovationModel, StreamingEncoder};
use innovguard::isfd::{isfd_detect, run_isfd_on_waveform, IsfdConfig, IsfdOutcome, IsfdSession};
use innovguard::nst::Decision;
use innovguard::{Error, WaveformSeries};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Degenerate = 5,
    TruncatedStream = 6,
    MalformedBlob = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
    Failed = 11,
}

impl From<&Error> for IgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::TomlDe(_) | Error::TomlSer(_) => IgStatus::Config,
            Error::Argument(_) => IgStatus::InvalidArgument,
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => IgStatus::Parse,
            Error::Degenerate(_) => IgStatus::Degenerate,
            Error::TruncatedStream { .. } => IgStatus::TruncatedStream,
            Error::Blob(_) => IgStatus::MalformedBlob,
            Error::Io { .. } => IgStatus::Io,
            _ => IgStatus::Failed,
        }
    }
}

/// Decision codes reported in `IgIsfdResult.decision`.
pub const IG_DECISION_H0: i32 = 0;
pub const IG_DECISION_H1: i32 = 1;

/// Detector parameters. `bonferroni` is 0 or 1.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IgIsfdConfig {
    pub k: u32,
    pub epsilon: f64,
    pub c: f64,
    pub lambda_sep: f64,
    pub bonferroni: u8,
}

impl From<IsfdConfig> for IgIsfdConfig {
    fn from(c: IsfdConfig) -> Self {
        Self {
            k: c.k as u32,
            epsilon: c.epsilon,
            c: c.c,
            lambda_sep: c.lambda_sep,
            bonferroni: c.bonferroni as u8,
        }
    }
}

impl IgIsfdConfig {
    fn to_core(self) -> IsfdConfig {
        IsfdConfig {
            k: self.k as usize,
            epsilon: self.epsilon,
            c: self.c,
            lambda_sep: self.lambda_sep,
            bonferroni: self.bonferroni != 0,
            ceil_iterations: false,
        }
    }
}

/// Summary of one detector run. `delay_seconds` is NaN for H0.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IgIsfdResult {
    pub decision: i32,
    pub samples_consumed: u64,
    pub iterations_run: u32,
    pub final_statistic: f64,
    pub threshold: f64,
    pub delay_seconds: f64,
}

impl From<&IsfdOutcome> for IgIsfdResult {
    fn from(o: &IsfdOutcome) -> Self {
        let last = o.statistic_trace.last();
        Self {
            decision: match o.decision {
                Decision::H0 => IG_DECISION_H0,
                Decision::H1 => IG_DECISION_H1,
            },
            samples_consumed: o.samples_consumed as u64,
            iterations_run: o.iterations_run as u32,
            final_statistic: last.map_or(f64::NAN, |t| t.statistic),
            threshold: last.map_or(f64::NAN, |t| t.threshold),
            delay_seconds: o.delay_seconds.unwrap_or(f64::NAN),
        }
    }
}

/// Fitted AR whitening model.
pub struct IgArModel {
    inner: ArInnovationModel,
}

/// Online detector: raw samples in, decision out.
pub struct IgDetector {
    encoder: StreamingEncoder<'static>,
    session: IsfdSession,
    sample_rate: f64,
    config: IsfdConfig,
}

/// Compressed waveform.
pub struct IgBlob {
    inner: CompressedBlob,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Fail {
    Status(IgStatus, String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn fail(status: IgStatus, msg: impl Into<String>) -> Fail {
    Fail::Status(status, msg.into())
}

/// Runs `f`, records its error and turns panics into `IG_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            IgStatus::Ok
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            IgStatus::from(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            IgStatus::Panic
        }
    }
}

unsafe fn slice<'a>(data: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(IgStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(data, n))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| fail(IgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| fail(IgStatus::NullPointer, format!("{what} is null")))
}

/// Copies `src` into `(out, cap)` and reports its length in `written`.
unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, cap: usize, written: *mut usize) -> Result<(), Fail> {
    let written = as_mut(written, "written")?;
    *written = src.len();
    if src.len() > cap {
        return Err(fail(
            IgStatus::BufferTooSmall,
            format!("buffer holds {cap}, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(fail(IgStatus::NullPointer, "output buffer is null"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

fn series(samples: &[f64], fs: f64) -> Result<WaveformSeries, Fail> {
    Ok(WaveformSeries::new(samples.to_vec(), fs, 0.0)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ig_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `cap`. Returns the full message length without the NUL.
#[no_mangle]
pub unsafe extern "C" fn ig_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Fits an AR(order) whitening model to anomaly-free samples by Burg's method.
#[no_mangle]
pub unsafe extern "C" fn ig_ar_model_fit(
    samples: *const f64,
    n: usize,
    sample_rate: f64,
    order: usize,
    out: *mut *mut IgArModel,
) -> IgStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        let x = series(slice(samples, n, "samples")?, sample_rate)?;
        let inner = estimate_ar_model_with(&x, order, None, ArEstimator::Burg)?;
        *out = Box::into_raw(Box::new(IgArModel { inner }));
        Ok(())
    })
}

/// Loads a model from its JSON form.
#[no_mangle]
pub unsafe extern "C" fn ig_ar_model_from_json(json: *const c_char, out: *mut *mut IgArModel) -> IgStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(fail(IgStatus::NullPointer, "json is null"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| fail(IgStatus::Parse, format!("json is not UTF-8: {e}")))?;
        let inner = ArInnovationModel::from_json(text)?;
        *out = Box::into_raw(Box::new(IgArModel { inner }));
        Ok(())
    })
}

/// Writes the model as NUL-terminated JSON. `written` counts the NUL.
#[no_mangle]
pub unsafe extern "C" fn ig_ar_model_to_json(
    model: *const IgArModel,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> IgStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let mut bytes = m.inner.to_json()?.into_bytes();
        bytes.push(0);
        copy_out(&bytes, buf.cast::<u8>(), cap, written)
    })
}

/// AR order, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ig_ar_model_order(model: *const IgArModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.order)
}

/// Samples of history consumed before the first innovation, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn ig_ar_model_warmup(model: *const IgArModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.warmup())
}

/// Encodes samples to uniform innovations; the output has `n - warmup` values.
#[no_mangle]
pub unsafe extern "C" fn ig_ar_model_encode(
    model: *const IgArModel,
    samples: *const f64,
    n: usize,
    sample_rate: f64,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> IgStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let x = series(slice(samples, n, "samples")?, sample_rate)?;
        let v = m.inner.encode(&x)?;
        copy_out(&v.values, out, cap, written)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ig_ar_model_free(model: *mut IgArModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fills `out` with the default detector parameters.
#[no_mangle]
pub unsafe extern "C" fn ig_isfd_config_default(out: *mut IgIsfdConfig) -> IgStatus {
    guard(|| {
        *as_mut(out, "out")? = IsfdConfig::default().into();
        Ok(())
    })
}

/// Runs the detector on uniform innovations that start at the test origin.
#[no_mangle]
pub unsafe extern "C" fn ig_isfd_detect(
    innovations: *const f64,
    n: usize,
    sample_rate: f64,
    config: *const IgIsfdConfig,
    out: *mut IgIsfdResult,
) -> IgStatus {
    guard(|| {
        let cfg = as_ref(config, "config")?.to_core();
        let out = as_mut(out, "out")?;
        let v = slice(innovations, n, "innovations")?;
        let o = isfd_detect(v.iter().copied(), sample_rate, &cfg)?;
        *out = (&o).into();
        Ok(())
    })
}

/// Encodes raw samples with `model` and tests from `start_index` on.
#[no_mangle]
pub unsafe extern "C" fn ig_isfd_run_waveform(
    model: *const IgArModel,
    samples: *const f64,
    n: usize,
    sample_rate: f64,
    start_index: usize,
    config: *const IgIsfdConfig,
    out: *mut IgIsfdResult,
) -> IgStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let cfg = as_ref(config, "config")?.to_core();
        let out = as_mut(out, "out")?;
        let x = series(slice(samples, n, "samples")?, sample_rate)?;
        if start_index > n {
            return Err(fail(IgStatus::InvalidArgument, format!("start {start_index} beyond {n} samples")));
        }
        let o = run_isfd_on_waveform(&m.inner, &x, x.time_at(start_index), &cfg, sample_rate)?;
        *out = (&o).into();
        Ok(())
    })
}

/// Creates an online detector. The model is copied; the first `order`
/// samples pushed only fill the predictor history.
#[no_mangle]
pub unsafe extern "C" fn ig_detector_new(
    model: *const IgArModel,
    sample_rate: f64,
    config: *const IgIsfdConfig,
    out: *mut *mut IgDetector,
) -> IgStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        let m = as_ref(model, "model")?;
        let config = as_ref(config, "config")?.to_core();
        let session = IsfdSession::new(sample_rate, &config)?;
        let encoder = m.inner.clone().into_streaming()?;
        *out = Box::into_raw(Box::new(IgDetector { encoder, session, sample_rate, config }));
        Ok(())
    })
}

/// Pushes raw samples. `decided` is set to 1 once a decision is reached;
/// later samples only update the predictor history until `ig_detector_reset`.
#[no_mangle]
pub unsafe extern "C" fn ig_detector_push(
    detector: *mut IgDetector,
    samples: *const f64,
    n: usize,
    decided: *mut u8,
) -> IgStatus {
    guard(|| {
        let d = as_mut(detector, "detector")?;
        let decided = as_mut(decided, "decided")?;
        for &x in slice(samples, n, "samples")? {
            // The encoder tracks every sample so a reset resumes with current history.
            if let Some(v) = d.encoder.push(x) {
                if d.session.outcome().is_none() {
                    d.session.push(v)?;
                }
            }
        }
        *decided = d.session.outcome().is_some() as u8;
        Ok(())
    })
}

/// Outcome of a decided detector; `IG_STATUS_TRUNCATED_STREAM` before that.
#[no_mangle]
pub unsafe extern "C" fn ig_detector_result(detector: *const IgDetector, out: *mut IgIsfdResult) -> IgStatus {
    guard(|| {
        let d = as_ref(detector, "detector")?;
        let out = as_mut(out, "out")?;
        match d.session.outcome() {
            Some(o) => {
                *out = o.into();
                Ok(())
            }
            None => Err(Fail::Core(d.session.truncated())),
        }
    })
}

/// Starts a new test origin at the next innovation, keeping the predictor history.
#[no_mangle]
pub unsafe extern "C" fn ig_detector_reset(detector: *mut IgDetector) -> IgStatus {
    guard(|| {
        let d = as_mut(detector, "detector")?;
        d.session = IsfdSession::new(d.sample_rate, &d.config)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ig_detector_free(detector: *mut IgDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Compresses `samples` to mean-square error `relative_distortion` times the
/// signal power. Subband AR models of order `ar_order` are fitted on
/// `train` (which may alias `samples`).
#[no_mangle]
pub unsafe extern "C" fn ig_compress(
    samples: *const f64,
    n: usize,
    train: *const f64,
    n_train: usize,
    sample_rate: f64,
    fundamental_freq: f64,
    harmonics: usize,
    ar_order: usize,
    relative_distortion: f64,
    out: *mut *mut IgBlob,
) -> IgStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        let x = series(slice(samples, n, "samples")?, sample_rate)?;
        let t = series(slice(train, n_train, "train")?, sample_rate)?;
        if fundamental_freq.is_nan() || fundamental_freq <= 0.0 || harmonics == 0 {
            return Err(fail(IgStatus::InvalidArgument, "need a positive fundamental and at least one band"));
        }
        let plan = SubbandPlan::for_rate(fundamental_freq, sample_rate, harmonics);
        let models = train_subband_models(&t, &plan, ar_order)?;
        let inner = compress_pipeline(&x, &plan, relative_distortion * x.power(), &models)?;
        *out = Box::into_raw(Box::new(IgBlob { inner }));
        Ok(())
    })
}

/// Parses a serialized blob.
#[no_mangle]
pub unsafe extern "C" fn ig_blob_from_bytes(bytes: *const u8, n: usize, out: *mut *mut IgBlob) -> IgStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = ptr::null_mut();
        if bytes.is_null() && n > 0 {
            return Err(fail(IgStatus::NullPointer, "bytes is null"));
        }
        let data = if n == 0 { &[][..] } else { std::slice::from_raw_parts(bytes, n) };
        let inner = CompressedBlob::from_bytes(data)?;
        *out = Box::into_raw(Box::new(IgBlob { inner }));
        Ok(())
    })
}

/// Serializes the blob.
#[no_mangle]
pub unsafe extern "C" fn ig_blob_to_bytes(blob: *const IgBlob, out: *mut u8, cap: usize, written: *mut usize) -> IgStatus {
    guard(|| copy_out(&as_ref(blob, "blob")?.inner.to_bytes(), out, cap, written))
}

/// Number of samples the blob decodes to, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn ig_blob_sample_count(blob: *const IgBlob) -> u64 {
    blob.as_ref().map_or(0, |b| b.inner.header.n_samples as u64)
}

/// Reconstructs the waveform.
#[no_mangle]
pub unsafe extern "C" fn ig_blob_decompress(blob: *const IgBlob, out: *mut f64, cap: usize, written: *mut usize) -> IgStatus {
    guard(|| {
        let y = decompress_pipeline(&as_ref(blob, "blob")?.inner)?;
        copy_out(y.samples(), out, cap, written)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ig_blob_free(blob: *mut IgBlob) {
    if !blob.is_null() {
        drop(Box::from_raw(blob));
    }
}
