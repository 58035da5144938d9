//! C ABI over `havok_core`.
//!
//! Every function returns an [`HvkStatus`]; on failure a message is kept per
//! thread and can be read with [`hvk_last_error_message`]. Detectors are
//! opaque handles created by `hvk_detector_fit` or `hvk_detector_from_json`
//! and released with `hvk_detector_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use havok_core::anomaly::{DetectionConfig, StatsMode};
use havok_core::embedding::RankPolicy;
use havok_core::havok::HavokOptions;
use havok_core::metrics::{self, ConfusionMatrix};
use havok_core::pipeline::{self, EmbeddingConfig};
use havok_core::stream::{DetectorSpec, StreamingDetector};
use havok_core::timeseries_io::{self, Timestamp};
use havok_core::ErrorKind;

/// Status codes. Values 2 to 5 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HvkStatus {
    Ok = 0,
    Config = 2,
    Data = 3,
    Numerical = 4,
    Diverged = 5,
    NullPointer = 10,
    InvalidArgument = 11,
    BufferTooSmall = 12,
    Panic = 99,
}

impl From<ErrorKind> for HvkStatus {
    fn from(k: ErrorKind) -> Self {
        match k {
            ErrorKind::Config => Self::Config,
            ErrorKind::Data => Self::Data,
            ErrorKind::Numerical => Self::Numerical,
            ErrorKind::Diverged => Self::Diverged,
        }
    }
}

/// Streaming detector handle.
pub struct HvkDetector {
    inner: StreamingDetector,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HvkConfusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HvkDetectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mcc: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HvkRegressionReport {
    pub r2: f64,
    pub rmse: f64,
    pub explained_variance: f64,
    pub mae: f64,
}

/// Detector fitting parameters. Zero `rank` selects the hard-threshold rank;
/// zero `rolling_window` selects global statistics.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HvkDetectorParams {
    pub rows: usize,
    pub delay: usize,
    pub rank: usize,
    pub sigma_multiplier: f64,
    pub rolling_window: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(HvkStatus, String);

impl From<havok_core::Error> for Failure {
    fn from(e: havok_core::Error) -> Self {
        Failure(e.kind().into(), e.to_string())
    }
}

fn fail(status: HvkStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HvkStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure(HvkStatus::Panic, msg))
    });
    match outcome {
        Ok(()) => HvkStatus::Ok,
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(HvkStatus::NullPointer, "null input buffer"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(HvkStatus::NullPointer, "null output pointer"))
}

fn clock(len: usize, dt: f64) -> Vec<Timestamp> {
    let step = (dt * 1e9).round() as i64;
    (0..len as i64).map(|k| Timestamp::from_nanos(k * step)).collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hvk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Defaults used by the detection pipeline.
#[no_mangle]
pub extern "C" fn hvk_detector_params_default() -> HvkDetectorParams {
    let e = EmbeddingConfig::default();
    HvkDetectorParams {
        rows: e.rows,
        delay: e.delay,
        rank: 0,
        sigma_multiplier: DetectionConfig::default().sigma_multiplier,
        rolling_window: 0,
    }
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hvk_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

fn configs(p: &HvkDetectorParams) -> Result<(EmbeddingConfig, DetectionConfig), Failure> {
    let emb = EmbeddingConfig {
        rows: p.rows,
        delay: p.delay,
        rank: if p.rank == 0 {
            RankPolicy::HardThreshold
        } else {
            RankPolicy::Fixed { rank: p.rank }
        },
        standardize: true,
    };
    emb.validate().map_err(|m| fail(HvkStatus::Config, m))?;
    let stats = if p.rolling_window == 0 {
        StatsMode::Global
    } else {
        StatsMode::Rolling(p.rolling_window)
    };
    let det = DetectionConfig {
        sigma_multiplier: p.sigma_multiplier,
        stats,
        ..DetectionConfig::default()
    };
    det.validate().map_err(|e| fail(HvkStatus::Config, e.to_string()))?;
    Ok((emb, det))
}

/// Fits a detector on `len` samples spaced `dt` seconds apart.
///
/// # Safety
/// `values` must point to `len` doubles, `params` to a valid struct and `out`
/// to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hvk_detector_fit(
    values: *const f64,
    len: usize,
    dt: f64,
    params: *const HvkDetectorParams,
    out: *mut *mut HvkDetector,
) -> HvkStatus {
    guard(|| {
        let values = slice(values, len)?;
        let params = params
            .as_ref()
            .ok_or_else(|| fail(HvkStatus::NullPointer, "null params"))?;
        let out = out_ref(out)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(fail(
                HvkStatus::InvalidArgument,
                format!("dt must be positive, got {dt}"),
            ));
        }
        let (emb, det_cfg) = configs(params)?;
        let det = pipeline::detect_channel(
            "ffi",
            values,
            &clock(len, dt),
            dt,
            &emb,
            &HavokOptions::default(),
            &det_cfg,
        )?;
        let inner = StreamingDetector::new(DetectorSpec::from_detection(&det, &det_cfg))
            .map_err(|e| fail(HvkStatus::Data, e.to_string()))?;
        *out = Box::into_raw(Box::new(HvkDetector { inner }));
        Ok(())
    })
}

/// Restores a detector from the JSON written by `hvk_detector_to_json` or the
/// CLI's `detector.json`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hvk_detector_from_json(json: *const c_char, out: *mut *mut HvkDetector) -> HvkStatus {
    guard(|| {
        if json.is_null() {
            return Err(fail(HvkStatus::NullPointer, "null json"));
        }
        let out = out_ref(out)?;
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| fail(HvkStatus::InvalidArgument, e.to_string()))?;
        let inner = StreamingDetector::from_json(text).map_err(|e| fail(HvkStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(HvkDetector { inner }));
        Ok(())
    })
}

/// Writes the detector's JSON form into `buf`. `written` receives the length
/// needed excluding the NUL; `BufferTooSmall` is returned if it does not fit.
///
/// # Safety
/// `det` must be a live handle, `buf` null or `len` writable bytes, `written` writable.
#[no_mangle]
pub unsafe extern "C" fn hvk_detector_to_json(
    det: *const HvkDetector,
    buf: *mut c_char,
    len: usize,
    written: *mut usize,
) -> HvkStatus {
    guard(|| {
        let det = det
            .as_ref()
            .ok_or_else(|| fail(HvkStatus::NullPointer, "null detector"))?;
        let written = out_ref(written)?;
        let text = det.inner.to_json();
        *written = text.len();
        if buf.is_null() || len <= text.len() {
            return Err(fail(
                HvkStatus::BufferTooSmall,
                format!("need {} bytes", text.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// Samples required before the first output.
///
/// # Safety
/// `det` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hvk_detector_warmup(det: *const HvkDetector) -> usize {
    det.as_ref().map_or(0, |d| d.inner.warmup())
}

/// Feeds one sample. `ready` is set to 1 when a full window produced
/// `forcing` and `flag`, else 0.
///
/// # Safety
/// `det` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hvk_detector_push(
    det: *mut HvkDetector,
    value: f64,
    ready: *mut i32,
    forcing: *mut f64,
    flag: *mut i32,
) -> HvkStatus {
    guard(|| {
        let det = det
            .as_mut()
            .ok_or_else(|| fail(HvkStatus::NullPointer, "null detector"))?;
        let (ready, forcing, flag) = (out_ref(ready)?, out_ref(forcing)?, out_ref(flag)?);
        let t = Timestamp::from_nanos(det.inner.samples_seen() as i64);
        match det
            .inner
            .push(t, value)
            .map_err(|e| fail(HvkStatus::Data, e.to_string()))?
        {
            Some(o) => {
                *ready = 1;
                *forcing = o.forcing;
                *flag = i32::from(o.flag);
            }
            None => {
                *ready = 0;
                *forcing = f64::NAN;
                *flag = 0;
            }
        }
        Ok(())
    })
}

/// Releases a detector. Null is ignored.
///
/// # Safety
/// `det` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hvk_detector_free(det: *mut HvkDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Computes the forcing series of `values` and its flags. Output index j
/// corresponds to input sample `j + (rows - 1) * delay`; `written` receives
/// the number of outputs.
///
/// # Safety
/// `values` must point to `len` doubles; `forcing` and `flags` to `capacity`
/// writable elements; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hvk_forcing(
    values: *const f64,
    len: usize,
    dt: f64,
    params: *const HvkDetectorParams,
    forcing: *mut f64,
    flags: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> HvkStatus {
    guard(|| {
        let values = slice(values, len)?;
        let params = params
            .as_ref()
            .ok_or_else(|| fail(HvkStatus::NullPointer, "null params"))?;
        let written = out_ref(written)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(fail(
                HvkStatus::InvalidArgument,
                format!("dt must be positive, got {dt}"),
            ));
        }
        let (emb, det_cfg) = configs(params)?;
        let det = pipeline::detect_channel(
            "ffi",
            values,
            &clock(len, dt),
            dt,
            &emb,
            &HavokOptions::default(),
            &det_cfg,
        )?;
        let n = det.forcing.len();
        *written = n;
        if capacity < n {
            return Err(fail(HvkStatus::BufferTooSmall, format!("need {n} elements")));
        }
        if n > 0 && (forcing.is_null() || flags.is_null()) {
            return Err(fail(HvkStatus::NullPointer, "null output buffer"));
        }
        for j in 0..n {
            *forcing.add(j) = det.forcing.values()[j];
            *flags.add(j) = u8::from(det.forcing_flags[j]);
        }
        Ok(())
    })
}

/// Scores from a confusion matrix.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hvk_detection_metrics(cm: HvkConfusion, out: *mut HvkDetectionReport) -> HvkStatus {
    guard(|| {
        let out = out_ref(out)?;
        let r = metrics::detection_metrics(&ConfusionMatrix::new(cm.tp, cm.tn, cm.fp, cm.fn_));
        *out = HvkDetectionReport {
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            accuracy: r.accuracy,
            mcc: r.mcc,
        };
        Ok(())
    })
}

/// Matches predicted against true flags (nonzero bytes are positive) within
/// `tolerance` samples.
///
/// # Safety
/// `predicted` and `truth` must point to `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hvk_match_events(
    predicted: *const u8,
    truth: *const u8,
    len: usize,
    tolerance: usize,
    out: *mut HvkConfusion,
) -> HvkStatus {
    guard(|| {
        let p: Vec<bool> = slice(predicted, len)?.iter().map(|&b| b != 0).collect();
        let t: Vec<bool> = slice(truth, len)?.iter().map(|&b| b != 0).collect();
        let out = out_ref(out)?;
        let cm = metrics::match_events(&p, &t, tolerance).map_err(|e| fail(HvkStatus::Data, e.to_string()))?;
        *out = HvkConfusion {
            tp: cm.tp,
            tn: cm.tn,
            fp: cm.fp,
            fn_: cm.fn_,
        };
        Ok(())
    })
}

/// R², RMSE, explained variance and MAE of `predicted` against `actual`.
///
/// # Safety
/// Both arrays must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hvk_regression_metrics(
    actual: *const f64,
    predicted: *const f64,
    len: usize,
    out: *mut HvkRegressionReport,
) -> HvkStatus {
    guard(|| {
        let (a, p) = (slice(actual, len)?, slice(predicted, len)?);
        let out = out_ref(out)?;
        let r = metrics::regression_metrics(a, p).map_err(|e| fail(HvkStatus::Data, e.to_string()))?;
        *out = HvkRegressionReport {
            r2: r.r2,
            rmse: r.rmse,
            explained_variance: r.explained_variance,
            mae: r.mae,
        };
        Ok(())
    })
}

/// cos(θ_V − θ_I) per sample, angles in degrees.
///
/// # Safety
/// Inputs must hold `len` doubles and `out` must have room for `len`.
#[no_mangle]
pub unsafe extern "C" fn hvk_power_factor(
    v_angle: *const f64,
    i_angle: *const f64,
    len: usize,
    out: *mut f64,
) -> HvkStatus {
    guard(|| {
        let (v, i) = (slice(v_angle, len)?, slice(i_angle, len)?);
        if len > 0 && out.is_null() {
            return Err(fail(HvkStatus::NullPointer, "null output buffer"));
        }
        let pf = timeseries_io::compute_power_factor(v, i).map_err(|e| fail(HvkStatus::Data, e.to_string()))?;
        ptr::copy_nonoverlapping(pf.as_ptr(), out, len);
        Ok(())
    })
}
