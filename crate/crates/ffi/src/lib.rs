//! C ABI over `tapsim`.
//!
//! Every fallible call returns a [`TapsimStatus`]; on failure the message is
//! available from [`tapsim_last_error_message`] on the same thread. Handles
//! are opaque, created by `*_new`/`*_load`/`*_fit` and released by the
//! matching `*_free`. Vectors cross the boundary as row-major `double`
//! arrays with explicit lengths.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tapsim::ar::{fit_ar, ArModel};
use tapsim::engine::{compute_mu, Engine, EngineConfig, Source, Strategy};
use tapsim::gru::{load_weights, save_weights, GenerationHandle, GruNetwork, GruShape};
use tapsim::sim::{report_json, ScenarioConfig, Simulation};
use tapsim::trace::CommandMatrix;
use tapsim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    InvalidData = 4,
    Numeric = 5,
    InvalidState = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapsimStrategy {
    NonPredictive = 0,
    SinglePredictive = 1,
    Tap = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapsimSource {
    Actual = 0,
    ShortTerm = 1,
    LongTerm = 2,
    HoldLast = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TapsimGruShape {
    pub layers: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub window: usize,
    pub horizon: usize,
}

pub struct TapsimGru(GruNetwork);

pub struct TapsimAr(ArModel);

pub struct TapsimEngine {
    engine: Engine,
    dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(TapsimStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => TapsimStatus::Io,
            Error::Singular { .. } | Error::NonFinite(_) | Error::Divergence => TapsimStatus::Numeric,
            Error::Unfitted | Error::AlreadyDecided(_) | Error::NonMonotonicClock { .. } => TapsimStatus::InvalidState,
            Error::LengthMismatch { .. } | Error::DimensionMismatch { .. } | Error::InvalidRate { .. } => {
                TapsimStatus::InvalidArgument
            }
            _ => TapsimStatus::InvalidData,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(TapsimStatus::InvalidArgument, message.into())
}

fn null(what: &str) -> Failure {
    Failure(TapsimStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> TapsimStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TapsimStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TapsimStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

fn rows(values: &[f64], dim: usize, what: &str) -> Result<Vec<Vec<f64>>, Failure> {
    if dim == 0 || values.len() % dim != 0 {
        return Err(invalid(format!("{what}: {} values do not split into rows of {dim}", values.len())));
    }
    Ok(values.chunks(dim).map(<[f64]>::to_vec).collect())
}

fn write_rows(out: &mut [f64], block: &[Vec<f64>]) -> Result<(), Failure> {
    let needed: usize = block.iter().map(Vec::len).sum();
    if out.len() != needed {
        return Err(invalid(format!("output holds {} values, expected {needed}", out.len())));
    }
    for (dst, src) in out.iter_mut().zip(block.iter().flatten()) {
        *dst = *src;
    }
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn tapsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Commands per packet, `ceil(sample_rate / transmit_rate)`.
///
/// # Safety
/// `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn tapsim_compute_mu(sample_rate_hz: f64, transmit_rate_hz: f64, out: *mut usize) -> TapsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = compute_mu(sample_rate_hz, transmit_rate_hz)?;
        Ok(())
    })
}

/// A randomly initialised network.
///
/// # Safety
/// `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn tapsim_gru_new(
    layers: usize,
    input_dim: usize,
    hidden: usize,
    window: usize,
    horizon: usize,
    seed: u64,
    out: *mut *mut TapsimGru,
) -> TapsimStatus {
    guard(|| {
        let net = GruNetwork::new(GruShape::new(layers, input_dim, hidden, window, horizon), seed)?;
        store(out, TapsimGru(net))
    })
}

/// # Safety
/// `path` must be null or a NUL-terminated string; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tapsim_gru_load(path: *const c_char, out: *mut *mut TapsimGru) -> TapsimStatus {
    guard(|| {
        let net = load_weights(string(path, "path")?)?;
        store(out, TapsimGru(net))
    })
}

/// # Safety
/// `gru` must come from this library; `path` as in [`tapsim_gru_load`].
#[no_mangle]
pub unsafe extern "C" fn tapsim_gru_save(gru: *const TapsimGru, path: *const c_char) -> TapsimStatus {
    guard(|| {
        let gru = gru.as_ref().ok_or_else(|| null("gru"))?;
        save_weights(&gru.0, string(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `gru` must come from this library; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tapsim_gru_shape(gru: *const TapsimGru, out: *mut TapsimGruShape) -> TapsimStatus {
    guard(|| {
        let gru = gru.as_ref().ok_or_else(|| null("gru"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = gru.0.shape();
        *out = TapsimGruShape {
            layers: s.layers,
            input_dim: s.input_dim,
            hidden: s.hidden,
            window: s.window,
            horizon: s.horizon,
        };
        Ok(())
    })
}

/// Predicts `horizon` vectors from a window of `window + 1` vectors.
/// `window_values` holds `(window + 1) * input_dim` values, `out` holds
/// `horizon * input_dim`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tapsim_gru_forward(
    gru: *const TapsimGru,
    window_values: *const f64,
    window_len: usize,
    out: *mut f64,
    out_len: usize,
) -> TapsimStatus {
    guard(|| {
        let gru = gru.as_ref().ok_or_else(|| null("gru"))?;
        let shape = *gru.0.shape();
        let window = rows(slice(window_values, window_len, "window")?, shape.input_dim, "window")?;
        let block = gru.0.forward(&window, shape.horizon)?;
        write_rows(slice_mut(out, out_len, "out")?, &block)
    })
}

/// # Safety
/// `gru` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tapsim_gru_free(gru: *mut TapsimGru) {
    if !gru.is_null() {
        drop(Box::from_raw(gru));
    }
}

/// Ridge AR fit over a window of `rows` vectors of `dim` values.
///
/// # Safety
/// `window_values` must hold `rows * dim` values; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tapsim_ar_fit(
    window_values: *const f64,
    rows_count: usize,
    dim: usize,
    order: usize,
    ridge: f64,
    out: *mut *mut TapsimAr,
) -> TapsimStatus {
    guard(|| {
        let len = rows_count.checked_mul(dim).ok_or_else(|| invalid("rows * dim overflows"))?;
        let window = rows(slice(window_values, len, "window")?, dim, "window")?;
        store(out, TapsimAr(fit_ar(&window, order, ridge)?))
    })
}

/// Recursive forecast of `steps` vectors from the last `order` rows of the
/// given window. `out` holds `steps * dim` values.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tapsim_ar_predict(
    ar: *const TapsimAr,
    window_values: *const f64,
    rows_count: usize,
    steps: usize,
    out: *mut f64,
    out_len: usize,
) -> TapsimStatus {
    guard(|| {
        let ar = ar.as_ref().ok_or_else(|| null("ar"))?;
        let dim = ar.0.dim();
        let len = rows_count.checked_mul(dim).ok_or_else(|| invalid("rows * dim overflows"))?;
        let window = rows(slice(window_values, len, "window")?, dim, "window")?;
        let block = ar.0.predict_from_window(&window, steps)?;
        write_rows(slice_mut(out, out_len, "out")?, &block)
    })
}

/// # Safety
/// `ar` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tapsim_ar_free(ar: *mut TapsimAr) {
    if !ar.is_null() {
        drop(Box::from_raw(ar));
    }
}

/// A support engine. `config_json` is an engine config object (null or
/// `"{}"` for defaults). `gru` is required for the TAP strategy and is
/// copied, so it may be freed afterwards.
///
/// # Safety
/// `initial` must hold `dim` values; other pointers null or valid.
#[no_mangle]
pub unsafe extern "C" fn tapsim_engine_new(
    config_json: *const c_char,
    strategy: TapsimStrategy,
    initial: *const f64,
    dim: usize,
    gru: *const TapsimGru,
    out: *mut *mut TapsimEngine,
) -> TapsimStatus {
    guard(|| {
        let config: EngineConfig = if config_json.is_null() {
            EngineConfig::default()
        } else {
            serde_json::from_str(string(config_json, "config_json")?).map_err(|e| {
                Failure(TapsimStatus::InvalidData, format!("engine config: {e}"))
            })?
        };
        let strategy = match strategy {
            TapsimStrategy::NonPredictive => Strategy::NonPredictive,
            TapsimStrategy::SinglePredictive => Strategy::SinglePredictive,
            TapsimStrategy::Tap => Strategy::Tap,
        };
        let initial = slice(initial, dim, "initial")?.to_vec();
        let generation = gru.as_ref().map(|g| GenerationHandle::new(g.0.clone()));
        let engine = Engine::new(config, strategy, initial, generation)?;
        store(out, TapsimEngine { engine, dim })
    })
}

/// Delivers a payload of `count` commands for slots `slots[i]`, with
/// `count * dim` values; the last command is the actuation candidate when
/// `on_time`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tapsim_engine_ingest(
    engine: *mut TapsimEngine,
    slots: *const usize,
    values: *const f64,
    count: usize,
    on_time: bool,
    now: usize,
) -> TapsimStatus {
    guard(|| {
        let e = engine.as_mut().ok_or_else(|| null("engine"))?;
        if count == 0 {
            return Err(invalid("payload is empty"));
        }
        if slots.is_null() {
            return Err(null("slots"));
        }
        let slots = std::slice::from_raw_parts(slots, count);
        let vectors = rows(slice(values, count * e.dim, "values")?, e.dim, "values")?;
        let payload: Vec<CommandMatrix> = slots
            .iter()
            .zip(vectors)
            .map(|(&slot, v)| CommandMatrix::new(slot, v))
            .collect();
        e.engine.ingest_delivery(&payload, on_time, now)?;
        Ok(())
    })
}

/// Chooses the command for slot `now` into `command` (`dim` values) and its
/// origin into `source`.
///
/// # Safety
/// `command` must hold `dim` values; `source` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tapsim_engine_decide(
    engine: *mut TapsimEngine,
    now: usize,
    command: *mut f64,
    dim: usize,
    source: *mut TapsimSource,
) -> TapsimStatus {
    guard(|| {
        let e = engine.as_mut().ok_or_else(|| null("engine"))?;
        if dim != e.dim {
            return Err(invalid(format!("command holds {dim} values, engine dimension is {}", e.dim)));
        }
        let out = slice_mut(command, dim, "command")?;
        let decision = e.engine.decide_actuation(now)?;
        out.copy_from_slice(&decision.command);
        if let Some(s) = source.as_mut() {
            *s = match decision.source {
                Source::Actual => TapsimSource::Actual,
                Source::ShortTerm => TapsimSource::ShortTerm,
                Source::LongTerm => TapsimSource::LongTerm,
                Source::HoldLast => TapsimSource::HoldLast,
            };
        }
        Ok(())
    })
}

/// # Safety
/// `engine` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tapsim_engine_free(engine: *mut TapsimEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Runs a whole scenario (JSON text) and returns the report as JSON in
/// `*report_out`, to be released with [`tapsim_string_free`]. Relative paths
/// in the scenario resolve against the working directory.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string; `report_out` writable.
#[no_mangle]
pub unsafe extern "C" fn tapsim_run_experiment_json(
    scenario_json: *const c_char,
    report_out: *mut *mut c_char,
) -> TapsimStatus {
    guard(|| {
        if report_out.is_null() {
            return Err(null("report_out"));
        }
        let config = ScenarioConfig::from_json(string(scenario_json, "scenario_json")?)?;
        let mut sim = Simulation::new(config)?;
        sim.prepare_network(None)?;
        let json = report_json(&sim.run_experiment()?)?;
        *report_out = CString::new(json).map_err(|_| invalid("report contains a NUL byte"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn tapsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_split_and_reject_ragged_input() {
        assert_eq!(rows(&[1.0, 2.0, 3.0, 4.0], 2, "w").ok().unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(rows(&[1.0, 2.0, 3.0], 2, "w").is_err());
        assert!(rows(&[1.0], 0, "w").is_err());
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), TapsimStatus::Panic);
        assert!(!tapsim_last_error_message().is_null());
        assert_eq!(guard(|| Ok(())), TapsimStatus::Ok);
        assert!(tapsim_last_error_message().is_null());
    }
}
