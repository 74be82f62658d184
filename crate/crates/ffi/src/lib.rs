//! C ABI for the semcast simulator.
//!
//! Conventions:
//! - every fallible call returns a [`SemcastStatus`]; on failure the message
//!   is available from [`semcast_last_error`] on the same thread;
//! - objects are opaque handles created by `*_new`/`*_load` and released by
//!   the matching `*_free` (passing NULL to a free function is a no-op);
//! - output arrays are caller-allocated with an explicit capacity; the
//!   number of elements needed is always written, so a call with capacity 0
//!   can be used to size the buffer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use semcast::importance::ImportanceVector;
use semcast::keys;
use semcast::pipeline::{self, RunConfig, Session};
use semcast::selector;
use semcast::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemcastStatus {
    Ok = 0,
    NullPointer = 1,
    /// Argument out of range, including invalid UTF-8.
    InvalidArgument = 2,
    Config = 3,
    Format = 4,
    Data = 5,
    Io = 6,
    /// Output buffer too small; the required size was still written.
    BufferTooSmall = 7,
    /// An internal panic was caught at the boundary.
    Internal = 8,
}

/// Run configuration handle.
pub struct SemcastConfig(RunConfig);

/// Prepared dataset, head and importance scores.
pub struct SemcastSession(Session);

/// One SNR point of a BER sweep.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SemcastBerPoint {
    pub snr_db: f64,
    pub trials: usize,
    pub payload_bits: usize,
    pub legit_ber_encrypted: f64,
    pub legit_ber_plaintext: f64,
    pub eve_ber: f64,
    pub mean_l_cha: f64,
}

/// One budget of a latency sweep.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SemcastLatencyPoint {
    pub epsilon: f64,
    pub items: usize,
    pub mean_lambda: f64,
    pub mean_symbols: f64,
    pub latency_us: f64,
    pub symbol_fraction: f64,
    pub accuracy: f64,
    pub accuracy_fraction: f64,
}

/// Per-trial measurements.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SemcastTrial {
    pub item: usize,
    pub lambda: usize,
    pub symbols: usize,
    pub payload_bits: usize,
    pub legit_errors: usize,
    pub eve_errors: usize,
    pub latency_us: f64,
    pub l_cha: f64,
    pub correct: bool,
    pub perm_digest: u64,
}

/// Search-space size `multiplier * 2^log2`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SemcastSearchSpace {
    pub multiplier: u64,
    pub log2: u64,
}

/// Which search-space formula to evaluate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemcastSearchKind {
    /// `(2^bits)^n` over weights.
    Weights = 0,
    /// `(2^bits)^n` over semantic keys.
    SemanticKeys = 1,
    /// `2^bits`; `n` is ignored.
    SeedKey = 2,
    /// `n * 2^(bits*n)`.
    WithAllocation = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SemcastStatus {
    match e {
        Error::Parameter(_) => SemcastStatus::InvalidArgument,
        Error::Config(_) => SemcastStatus::Config,
        Error::Format(_) => SemcastStatus::Format,
        Error::Data(_) => SemcastStatus::Data,
        Error::Io { .. } => SemcastStatus::Io,
    }
}

struct Failure(SemcastStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: SemcastStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SemcastStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SemcastStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SemcastStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(SemcastStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SemcastStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(SemcastStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(SemcastStatus::NullPointer, format!("{what} is NULL")))
}

/// Copies `items` into a caller buffer, always reporting the needed length.
unsafe fn write_array<T: Copy>(items: &[T], out: *mut T, capacity: usize, written: *mut usize) -> Result<(), Failure> {
    *out_arg(written, "length output")? = items.len();
    if items.len() > capacity {
        return Err(fail(
            SemcastStatus::BufferTooSmall,
            format!("need {} elements, buffer holds {capacity}", items.len()),
        ));
    }
    if !items.is_empty() {
        if out.is_null() {
            return Err(fail(SemcastStatus::NullPointer, "output buffer is NULL"));
        }
        ptr::copy_nonoverlapping(items.as_ptr(), out, items.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn semcast_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn semcast_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New configuration with default values. Never NULL.
#[no_mangle]
pub extern "C" fn semcast_config_new() -> *mut SemcastConfig {
    Box::into_raw(Box::new(SemcastConfig(RunConfig::default())))
}

/// Parses a config file into a new handle stored in `*out`.
#[no_mangle]
pub unsafe extern "C" fn semcast_config_load(path: *const c_char, out: *mut *mut SemcastConfig) -> SemcastStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = RunConfig::load(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(SemcastConfig(cfg)));
        Ok(())
    })
}

/// Sets one configuration key from its textual value.
#[no_mangle]
pub unsafe extern "C" fn semcast_config_set(
    cfg: *mut SemcastConfig,
    key: *const c_char,
    value: *const c_char,
) -> SemcastStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        let mut next = cfg.0.clone();
        next.set(str_arg(key, "key")?, str_arg(value, "value")?)?;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn semcast_config_free(cfg: *mut SemcastConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Builds the dataset and head described by `cfg`.
#[no_mangle]
pub unsafe extern "C" fn semcast_session_new(cfg: *const SemcastConfig, out: *mut *mut SemcastSession) -> SemcastStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let session = Session::prepare(&ref_arg(cfg, "cfg")?.0)?;
        *out = Box::into_raw(Box::new(SemcastSession(session)));
        Ok(())
    })
}

/// Number of dataset items in the session.
#[no_mangle]
pub unsafe extern "C" fn semcast_session_items(session: *const SemcastSession) -> usize {
    session.as_ref().map_or(0, |s| s.0.dataset.len())
}

#[no_mangle]
pub unsafe extern "C" fn semcast_session_free(session: *mut SemcastSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Runs trial `trial` at one SNR and budget.
#[no_mangle]
pub unsafe extern "C" fn semcast_run_trial(
    session: *const SemcastSession,
    trial: usize,
    snr_db: f64,
    epsilon: f64,
    out: *mut SemcastTrial,
) -> SemcastStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let out = out_arg(out, "out")?;
        if !snr_db.is_finite() || !(epsilon >= 0.0) {
            return Err(fail(SemcastStatus::InvalidArgument, "snr_db must be finite and epsilon nonnegative"));
        }
        let (r, _) = pipeline::run_trial(&s.0, trial, snr_db, epsilon, false)?;
        *out = SemcastTrial {
            item: r.item,
            lambda: r.lambda,
            symbols: r.symbols,
            payload_bits: r.payload_bits,
            legit_errors: r.legit_errors,
            eve_errors: r.eve_errors,
            latency_us: r.latency_us,
            l_cha: r.l_cha,
            correct: r.correct,
            perm_digest: r.perm_digest,
        };
        Ok(())
    })
}

/// BER sweep over the configured SNRs. When `out_dir` is not NULL the CSV
/// outputs are also written there.
#[no_mangle]
pub unsafe extern "C" fn semcast_ber_sweep(
    session: *const SemcastSession,
    out_dir: *const c_char,
    points: *mut SemcastBerPoint,
    capacity: usize,
    written: *mut usize,
) -> SemcastStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let dir = if out_dir.is_null() { None } else { Some(PathBuf::from(str_arg(out_dir, "out_dir")?)) };
        let sweep = pipeline::run_ber_sweep(&s.0)?;
        if let Some(dir) = dir {
            pipeline::write_output(&dir, "ber_sweep.csv", sweep.to_csv().as_bytes())?;
            pipeline::write_output(&dir, "constellation.csv", sweep.constellation_csv().as_bytes())?;
        }
        let flat: Vec<SemcastBerPoint> = sweep
            .points
            .iter()
            .map(|p| SemcastBerPoint {
                snr_db: p.snr_db,
                trials: p.trials,
                payload_bits: p.payload_bits,
                legit_ber_encrypted: p.legit_ber_encrypted,
                legit_ber_plaintext: p.legit_ber_plaintext,
                eve_ber: p.eve_ber,
                mean_l_cha: p.mean_l_cha,
            })
            .collect();
        write_array(&flat, points, capacity, written)
    })
}

/// Latency sweep over the configured budget grid at the first SNR.
#[no_mangle]
pub unsafe extern "C" fn semcast_latency_sweep(
    session: *const SemcastSession,
    out_dir: *const c_char,
    points: *mut SemcastLatencyPoint,
    capacity: usize,
    written: *mut usize,
) -> SemcastStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let dir = if out_dir.is_null() { None } else { Some(PathBuf::from(str_arg(out_dir, "out_dir")?)) };
        let sweep = pipeline::run_latency_sweep(&s.0)?;
        if let Some(dir) = dir {
            pipeline::write_output(&dir, "latency_sweep.csv", sweep.to_csv().as_bytes())?;
        }
        let flat: Vec<SemcastLatencyPoint> = sweep
            .points
            .iter()
            .map(|p| SemcastLatencyPoint {
                epsilon: p.epsilon,
                items: p.items,
                mean_lambda: p.mean_lambda,
                mean_symbols: p.mean_symbols,
                latency_us: p.latency_us,
                symbol_fraction: p.symbol_fraction,
                accuracy: p.accuracy,
                accuracy_fraction: p.accuracy_fraction,
            })
            .collect();
        write_array(&flat, points, capacity, written)
    })
}

/// Greedy entropy-budget selection over `n` normalized scores summing to
/// `confidence`. Selected indices are written best first.
#[no_mangle]
pub unsafe extern "C" fn semcast_select_maps(
    scores: *const f64,
    n: usize,
    confidence: f64,
    epsilon: f64,
    indices: *mut usize,
    capacity: usize,
    written: *mut usize,
) -> SemcastStatus {
    guard(|| {
        if scores.is_null() {
            return Err(fail(SemcastStatus::NullPointer, "scores is NULL"));
        }
        let scores = std::slice::from_raw_parts(scores, n).to_vec();
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(fail(SemcastStatus::InvalidArgument, "scores must be finite and nonnegative"));
        }
        let iv = ImportanceVector {
            raw: scores.clone(),
            scores,
            confidence,
            class: 0,
        };
        let sel = selector::select_maps(&iv, epsilon)?;
        write_array(&sel.indices, indices, capacity, written)
    })
}

/// Evaluates one search-space formula exactly.
#[no_mangle]
pub unsafe extern "C" fn semcast_search_space(
    kind: SemcastSearchKind,
    bits: u64,
    n: u64,
    out: *mut SemcastSearchSpace,
) -> SemcastStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = match kind {
            SemcastSearchKind::Weights => keys::search_space_scores(bits, n),
            SemcastSearchKind::SemanticKeys => keys::search_space_skey(bits, n),
            SemcastSearchKind::SeedKey => keys::search_space_seed(bits),
            SemcastSearchKind::WithAllocation => keys::search_space_total(bits, n),
        }?;
        *out = SemcastSearchSpace {
            multiplier: s.multiplier,
            log2: s.log2,
        };
        Ok(())
    })
}

/// The per-map lightweight keyed hash.
#[no_mangle]
pub extern "C" fn semcast_lightweight_hash(input: u64, tag: u64) -> u64 {
    keys::lightweight_hash(input, tag)
}
