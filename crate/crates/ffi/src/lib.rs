//! C ABI over the `fibercavity` library.
//!
//! Configurations live behind an opaque [`FcConfig`] handle created by one of
//! the `fc_config_*` constructors and released with [`fc_config_free`].
//! Every fallible call returns an [`FcStatus`]; on failure the message is
//! kept per thread and can be copied out with [`fc_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fibercavity::error::Error;
use fibercavity::io::{self, RecordFormat, RecordWriter};
use fibercavity::multiplex::{self, MultiplexPlan};
use fibercavity::trialsim::{self, RunMode};
use fibercavity::{model, presets, readout, ExperimentConfig, ValidatedConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigInvalid = 3,
    EnergyConservationViolated = 4,
    NonPhysicalParameter = 5,
    GridTooCoarse = 6,
    TruncationTooTight = 7,
    DivisionByZeroRate = 8,
    NoConvergence = 9,
    CurveRangeExceeded = 10,
    EmptyInput = 11,
    IoError = 12,
    RuntimeFailure = 13,
    Panic = 14,
}

impl From<&Error> for FcStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::EnergyConservationViolated { .. } => FcStatus::EnergyConservationViolated,
            Error::NonPhysicalParameter(_) => FcStatus::NonPhysicalParameter,
            Error::GridTooCoarse { .. } => FcStatus::GridTooCoarse,
            Error::TruncationTooTight { .. } => FcStatus::TruncationTooTight,
            Error::DivisionByZeroRate(_) => FcStatus::DivisionByZeroRate,
            Error::NoConvergence { .. } => FcStatus::NoConvergence,
            Error::CurveRangeExceeded { .. } => FcStatus::CurveRangeExceeded,
            Error::EmptyInput => FcStatus::EmptyInput,
            Error::Io(_) => FcStatus::IoError,
            Error::Config(_) | Error::Json(_) => FcStatus::ConfigInvalid,
            _ => FcStatus::RuntimeFailure,
        }
    }
}

/// Opaque validated configuration.
pub struct FcConfig {
    inner: ValidatedConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FcReadoutPoint {
    pub delay_cycles: f64,
    pub survival: f64,
    pub eta_conv: f64,
    pub total: f64,
}

/// Model observables at one readout delay. Undefined ratios are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FcObservables {
    pub rate_h_cps: f64,
    pub rate_s_cps: f64,
    pub rate_r_cps: f64,
    pub rate_hr_cps: f64,
    pub rate_hr1r2_cps: f64,
    pub g2_xc_hs_raw: f64,
    pub g2_xc_hs_subtracted: f64,
    pub g2_xc_hr: f64,
    pub g2_ac_heralded: f64,
    pub g2_noise: f64,
    pub heralding_probability: f64,
    pub heralding_efficiency_subtracted: f64,
    pub klyshko_eta_h: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FcMultiplexResult {
    pub p_out: f64,
    pub enhancement: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F>(f: F) -> FcStatus
where
    F: FnOnce() -> Result<(), FcStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FcStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            FcStatus::Panic
        }
    }
}

fn fail(e: Error) -> FcStatus {
    let status = FcStatus::from(&e);
    set_error(format!("{}: {}", e.kind(), e));
    status
}

fn null(what: &str) -> FcStatus {
    set_error(format!("null pointer: {what}"));
    FcStatus::NullPointer
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, FcStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        FcStatus::InvalidUtf8
    })
}

unsafe fn config_ref<'a>(cfg: *const FcConfig) -> Result<&'a ValidatedConfig, FcStatus> {
    cfg.as_ref().map(|c| &c.inner).ok_or_else(|| null("config"))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), FcStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_handle(cfg: ExperimentConfig) -> Result<*mut FcConfig, FcStatus> {
    let inner = cfg.validate().map_err(fail)?;
    Ok(Box::into_raw(Box::new(FcConfig { inner })))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// excluding the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Built-in primary cavity parameters.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn fc_config_primary(out: *mut *mut FcConfig) -> FcStatus {
    guard(|| {
        let h = into_handle(presets::primary())?;
        put(out, h, "out")
    })
}

/// Built-in alternate (12-cycle) cavity parameters.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn fc_config_alternate(out: *mut *mut FcConfig) -> FcStatus {
    guard(|| {
        let h = into_handle(presets::alternate())?;
        put(out, h, "out")
    })
}

/// Parses and validates a JSON configuration document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_config_from_json(json: *const c_char, out: *mut *mut FcConfig) -> FcStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let cfg = ExperimentConfig::from_json_str(text).map_err(fail)?;
        let h = into_handle(cfg)?;
        put(out, h, "out")
    })
}

/// Loads and validates a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_config_load(path: *const c_char, out: *mut *mut FcConfig) -> FcStatus {
    guard(|| {
        let p = c_str(path, "path")?;
        let cfg = ExperimentConfig::load(p).map_err(fail)?;
        let h = into_handle(cfg)?;
        put(out, h, "out")
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `cfg` must come from an `fc_config_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn fc_config_free(cfg: *mut FcConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets one dotted entry (e.g. `pulses.energy_p_nj`, value `5.0`) and
/// revalidates. On failure the handle is left unchanged.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fc_config_set(cfg: *mut FcConfig, key: *const c_char, value: *const c_char) -> FcStatus {
    guard(|| {
        let handle = cfg.as_mut().ok_or_else(|| null("config"))?;
        let key = c_str(key, "key")?;
        let value = c_str(value, "value")?;
        let updated = handle
            .inner
            .config()
            .with_overrides(&[format!("{key}={value}")])
            .and_then(|c| c.validate())
            .map_err(fail)?;
        handle.inner = updated;
        Ok(())
    })
}

/// Serialized configuration. Free the result with [`fc_string_free`].
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_config_to_json(cfg: *const FcConfig, out: *mut *mut c_char) -> FcStatus {
    guard(|| {
        let c = config_ref(cfg)?;
        let s = CString::new(c.config().to_json_string()).map_err(|e| fail(Error::Format(e.to_string())))?;
        put(out, s.into_raw(), "out")
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn fc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Walk-off parameter ζ and per-cycle ring-down survival.
///
/// # Safety
/// `cfg` must be a live handle; outputs may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn fc_config_derived(cfg: *const FcConfig, zeta: *mut f64, survival: *mut f64, lambda_r_nm: *mut f64) -> FcStatus {
    guard(|| {
        let d = config_ref(cfg)?.derived();
        for (p, v) in [(zeta, d.zeta), (survival, d.ringdown_survival), (lambda_r_nm, d.lambda_r_nm)] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Conversion angle ξ(t) of the configured control pulses, in radians.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_xi(cfg: *const FcConfig, t_ps: f64, out: *mut f64) -> FcStatus {
    guard(|| {
        let w = readout::ControlWindow::from_config(config_ref(cfg)?).map_err(fail)?;
        put(out, w.xi(t_ps), "out")
    })
}

/// Survival, conversion efficiency and total readout probability at delay ≥ 1.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_readout_probability(cfg: *const FcConfig, delay: u32, out: *mut FcReadoutPoint) -> FcStatus {
    guard(|| {
        let p = readout::readout_probability(delay, config_ref(cfg)?).map_err(fail)?;
        put(
            out,
            FcReadoutPoint { delay_cycles: p.delay_cycles, survival: p.survival, eta_conv: p.eta_conv, total: p.total },
            "out",
        )
    })
}

/// Analytic rates and correlations at a readout delay.
///
/// # Safety
/// `cfg` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_predict(cfg: *const FcConfig, delay: u32, out: *mut FcObservables) -> FcStatus {
    guard(|| {
        let o = model::predict(config_ref(cfg)?, delay).map_err(fail)?.observables;
        put(
            out,
            FcObservables {
                rate_h_cps: o.rate_h_cps,
                rate_s_cps: o.rate_s_cps,
                rate_r_cps: o.rate_r_cps,
                rate_hr_cps: o.rate_hr_cps,
                rate_hr1r2_cps: o.rate_hr1r2_cps,
                g2_xc_hs_raw: o.g2_xc_hs_raw,
                g2_xc_hs_subtracted: o.g2_xc_hs_subtracted,
                g2_xc_hr: o.g2_xc_hr,
                g2_ac_heralded: o.g2_ac_heralded,
                g2_noise: o.g2_noise,
                heralding_probability: o.heralding_probability,
                heralding_efficiency_subtracted: o.heralding_efficiency_subtracted,
                klyshko_eta_h: o.klyshko_eta_h,
            },
            "out",
        )
    })
}

/// Simulates a readout run (`controls_only` = 0) or a controls-only run and
/// writes the records to `path` (binary for a `.bin` path, CSV otherwise)
/// with its manifest sidecar.
///
/// # Safety
/// `cfg` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fc_simulate_to_file(
    cfg: *const FcConfig,
    seed: u64,
    n_triggers: u64,
    delay: u16,
    controls_only: i32,
    path: *const c_char,
) -> FcStatus {
    guard(|| {
        let c = config_ref(cfg)?;
        let path = Path::new(c_str(path, "path")?);
        let mode = if controls_only != 0 { RunMode::ControlsOnly { delay } } else { RunMode::Readout { delay } };
        let mut manifest = None;
        io::write_atomic(path, |w| {
            let mut writer = RecordWriter::new(w, RecordFormat::from_path(path))?;
            manifest = Some(trialsim::simulate_with(c, seed, n_triggers, &mode, |b| writer.write(b))?);
            Ok(())
        })
        .map_err(fail)?;
        io::write_manifest(path, manifest.as_ref().expect("simulated")).map_err(fail)
    })
}

/// First-success multiplexing over `k` bins with readout efficiencies
/// `curve[T-1]` for T = 1..=`curve_len`.
///
/// # Safety
/// `curve` must point to `curve_len` doubles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_multiplex(
    p_herald: f64,
    curve: *const f64,
    curve_len: usize,
    k: u32,
    bin_spacing: u32,
    switch_latency: u32,
    out: *mut FcMultiplexResult,
) -> FcStatus {
    guard(|| {
        if curve.is_null() && curve_len > 0 {
            return Err(null("curve"));
        }
        let readout_curve = if curve_len == 0 { Vec::new() } else { std::slice::from_raw_parts(curve, curve_len).to_vec() };
        let plan = MultiplexPlan { k, bin_spacing, p_herald, readout_curve, switch_latency };
        let o = multiplex::multiplex_success(&plan).map_err(fail)?;
        put(out, FcMultiplexResult { p_out: o.p_out, enhancement: o.enhancement }, "out")
    })
}
