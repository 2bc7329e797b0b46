//! C ABI over `shardagg`.
//!
//! Every fallible call returns a [`ShardaggStatus`]; on failure the message
//! is kept per thread and read with [`shardagg_last_error_message`]. Handles
//! are opaque, created by `*_new` calls and released by the matching
//! `*_free`. Output buffers are caller-allocated.
//!
//! No call unwinds across the boundary: panics are caught and reported as
//! `SHARDAGG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use shardagg::field::{FieldElement, PrimeField};
use shardagg::params::{self, AvailabilityFormula, SecurityConfig};
use shardagg::shamir::PackedScheme;
use shardagg::sim::{self, SimulationConfig, SimulationReport, Verdict};
use shardagg::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShardaggStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Infeasible = 3,
    Abort = 4,
    Domain = 5,
    FieldTooSmall = 6,
    ThresholdNotMet = 7,
    TamperDetected = 8,
    BufferTooSmall = 9,
    InvalidUtf8 = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShardaggVerdict {
    Match = 0,
    Mismatch = 1,
    Abort = 2,
    Unavailable = 3,
}

/// Targets and threat model for parameter planning.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ShardaggSecurityConfig {
    pub sigma: f64,
    pub eta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub n: u64,
    pub k: usize,
    pub m: usize,
    pub malicious: bool,
}

/// Planned protocol parameters.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct ShardaggParams {
    pub g: usize,
    pub t: usize,
    pub k: usize,
    pub m: usize,
    pub n: u64,
    pub malicious: bool,
    pub neighbors: usize,
    pub achieved_sigma: f64,
    pub achieved_eta: f64,
}

/// Opaque packed-sharing scheme.
pub struct ShardaggScheme {
    inner: PackedScheme,
}

/// Opaque simulation report.
pub struct ShardaggReport {
    inner: SimulationReport,
    json: String,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> ShardaggStatus {
    match err {
        Error::Config(_) => ShardaggStatus::Config,
        Error::Domain(_) => ShardaggStatus::Domain,
        Error::Infeasible(_) => ShardaggStatus::Infeasible,
        Error::FieldTooSmall { .. } => ShardaggStatus::FieldTooSmall,
        Error::ThresholdNotMet { .. } => ShardaggStatus::ThresholdNotMet,
        Error::TamperDetected => ShardaggStatus::TamperDetected,
        Error::Protocol(_) => ShardaggStatus::Abort,
    }
}

fn fail(status: ShardaggStatus, msg: impl Into<String>) -> ShardaggStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics onto status codes.
fn guard(f: impl FnOnce() -> Result<(), ShardaggStatus>) -> ShardaggStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            ShardaggStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(ShardaggStatus::Panic, "internal panic"),
    }
}

fn lib(err: Error) -> ShardaggStatus {
    fail(status_of(&err), err.to_string())
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), ShardaggStatus> {
    if p.is_null() {
        Err(fail(ShardaggStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn shardagg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Smallest group size and balanced threshold meeting the targets.
///
/// # Safety
/// `cfg` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn shardagg_find_params(
    cfg: *const ShardaggSecurityConfig,
    out: *mut ShardaggParams,
) -> ShardaggStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        let c = &*cfg;
        let sc = SecurityConfig {
            sigma: c.sigma,
            eta: c.eta,
            gamma: c.gamma,
            delta: c.delta,
            n: c.n,
            k: c.k,
            m: c.m,
            malicious: c.malicious,
            availability_formula: AvailabilityFormula::Described,
        };
        let p = params::find_params(&sc).map_err(lib)?;
        *out = ShardaggParams {
            g: p.g,
            t: p.t,
            k: p.k,
            m: p.m,
            n: p.n,
            malicious: p.malicious,
            neighbors: p.neighbors(),
            achieved_sigma: p.achieved_sigma,
            achieved_eta: p.achieved_eta,
        };
        Ok(())
    })
}

/// Security bits for equally sized groups; NaN on invalid input.
#[no_mangle]
pub extern "C" fn shardagg_achieved_security(g: usize, t: usize, n: u64, gamma: f64, m: usize) -> f64 {
    if g == 0 || t == 0 || n < 2 || !(0.0..1.0).contains(&gamma) {
        return f64::NAN;
    }
    catch_unwind(|| params::achieved_security(g, t, n, gamma, m)).unwrap_or(f64::NAN)
}

/// Availability bits for equally sized groups; NaN on invalid input.
#[no_mangle]
pub extern "C" fn shardagg_achieved_availability(
    g: usize,
    t: usize,
    k: usize,
    n: u64,
    delta: f64,
    m: usize,
    malicious: bool,
) -> f64 {
    if g == 0 || t == 0 || k == 0 || n < 2 || !(0.0..1.0).contains(&delta) {
        return f64::NAN;
    }
    catch_unwind(|| params::achieved_availability(g, t, k, n, delta, m, malicious)).unwrap_or(f64::NAN)
}

/// `(2g / k) * field_bits`; NaN when `k` is zero.
#[no_mangle]
pub extern "C" fn shardagg_expansion_factor(g: usize, k: usize, field_bits: u32) -> f64 {
    if k == 0 {
        return f64::NAN;
    }
    params::expansion_factor(g, k, field_bits)
}

/// Natural log of the hypergeometric CDF `P[X <= x]`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shardagg_hypergeom_log_cdf(
    x: u64,
    population: u64,
    successes: u64,
    draws: u64,
    out: *mut f64,
) -> ShardaggStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = shardagg::hypergeom::hg_log_cdf(x, population, successes, draws).map_err(lib)?.ln();
        Ok(())
    })
}

/// Natural log of the hypergeometric survival function `P[X > x]`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shardagg_hypergeom_log_sf(
    x: u64,
    population: u64,
    successes: u64,
    draws: u64,
    out: *mut f64,
) -> ShardaggStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = shardagg::hypergeom::hg_log_sf(x, population, successes, draws).map_err(lib)?.ln();
        Ok(())
    })
}

/// Creates a `(threshold, share_count, pack)` packed-sharing scheme over
/// the prime field of the given modulus.
///
/// # Safety
/// `out` must be a valid pointer; on success `*out` owns a handle to be
/// released with [`shardagg_scheme_free`].
#[no_mangle]
pub unsafe extern "C" fn shardagg_scheme_new(
    modulus: u64,
    threshold: usize,
    share_count: usize,
    pack: usize,
    out: *mut *mut ShardaggScheme,
) -> ShardaggStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let field = PrimeField::new(modulus).map_err(lib)?;
        let inner = PackedScheme::new(field, threshold, share_count, pack).map_err(lib)?;
        *out = Box::into_raw(Box::new(ShardaggScheme { inner }));
        Ok(())
    })
}

/// # Safety
/// `scheme` must be null or a handle from [`shardagg_scheme_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shardagg_scheme_free(scheme: *mut ShardaggScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

fn elements(field: &PrimeField, raw: &[u64]) -> Result<Vec<FieldElement>, ShardaggStatus> {
    raw.iter().map(|&v| field.try_element(v).map_err(lib)).collect()
}

/// Shares `pack` secrets; writes `share_count` share values, the value for
/// share point `i + 1` at index `i`. Randomness comes from `seed`.
///
/// # Safety
/// `secrets` must point to `secrets_len` values and `shares_out` to
/// `shares_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn shardagg_scheme_share(
    scheme: *const ShardaggScheme,
    secrets: *const u64,
    secrets_len: usize,
    seed: u64,
    shares_out: *mut u64,
    shares_len: usize,
) -> ShardaggStatus {
    guard(|| {
        non_null(scheme, "scheme")?;
        non_null(secrets, "secrets")?;
        non_null(shares_out, "shares_out")?;
        let s = &(*scheme).inner;
        if shares_len < s.share_count() {
            return Err(fail(
                ShardaggStatus::BufferTooSmall,
                format!("need {} share slots, got {shares_len}", s.share_count()),
            ));
        }
        let field = s.field();
        let secrets = elements(&field, std::slice::from_raw_parts(secrets, secrets_len))?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let set = s.share(&secrets, &mut rng).map_err(lib)?;
        let out = std::slice::from_raw_parts_mut(shares_out, shares_len);
        for (slot, share) in out.iter_mut().zip(&set.shares) {
            *slot = share.value.value();
        }
        Ok(())
    })
}

/// Reconstructs `pack` secrets from `count` shares, given as 1-based share
/// points and values. With `verified`, needs `t + k` shares and reports
/// `SHARDAGG_STATUS_TAMPER_DETECTED` on inconsistency.
///
/// # Safety
/// `points` and `values` must point to `count` values each, and
/// `secrets_out` to `secrets_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn shardagg_scheme_reconstruct(
    scheme: *const ShardaggScheme,
    points: *const u64,
    values: *const u64,
    count: usize,
    verified: bool,
    secrets_out: *mut u64,
    secrets_len: usize,
) -> ShardaggStatus {
    guard(|| {
        non_null(scheme, "scheme")?;
        non_null(points, "points")?;
        non_null(values, "values")?;
        non_null(secrets_out, "secrets_out")?;
        let s = &(*scheme).inner;
        if secrets_len < s.pack() {
            return Err(fail(ShardaggStatus::BufferTooSmall, format!("need {} secret slots, got {secrets_len}", s.pack())));
        }
        let field = s.field();
        let pts = elements(&field, std::slice::from_raw_parts(points, count))?;
        let vals = elements(&field, std::slice::from_raw_parts(values, count))?;
        let rec = s.reconstructor(&pts, verified).map_err(lib)?;
        let secrets = rec.secrets(&vals).map_err(lib)?;
        let out = std::slice::from_raw_parts_mut(secrets_out, secrets_len);
        for (slot, v) in out.iter_mut().zip(secrets) {
            *slot = v.value();
        }
        Ok(())
    })
}

/// Runs a simulation described by a JSON `SimulationConfig`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid
/// pointer; on success `*out` owns a handle to be released with
/// [`shardagg_report_free`].
#[no_mangle]
pub unsafe extern "C" fn shardagg_simulate(config_json: *const c_char, out: *mut *mut ShardaggReport) -> ShardaggStatus {
    guard(|| {
        non_null(config_json, "config_json")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| fail(ShardaggStatus::InvalidUtf8, e.to_string()))?;
        let cfg: SimulationConfig =
            serde_json::from_str(text).map_err(|e| fail(ShardaggStatus::Config, format!("config JSON: {e}")))?;
        let inner = sim::run_simulation(&cfg).map_err(lib)?;
        let json = serde_json::to_string(&inner).expect("report serializes");
        *out = Box::into_raw(Box::new(ShardaggReport { inner, json }));
        Ok(())
    })
}

/// # Safety
/// `report` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shardagg_report_verdict(
    report: *const ShardaggReport,
    out: *mut ShardaggVerdict,
) -> ShardaggStatus {
    guard(|| {
        non_null(report, "report")?;
        non_null(out, "out")?;
        *out = match (*report).inner.verdict {
            Verdict::Match => ShardaggVerdict::Match,
            Verdict::Mismatch => ShardaggVerdict::Mismatch,
            Verdict::Abort => ShardaggVerdict::Abort,
            Verdict::Unavailable => ShardaggVerdict::Unavailable,
        };
        Ok(())
    })
}

/// Copies the report's output vector into `out`. `*written` receives the
/// vector length; fails with `SHARDAGG_STATUS_ABORT` when there is no output.
///
/// # Safety
/// `report` must be a valid handle, `out` must point to `len` writable
/// values and `written` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shardagg_report_output(
    report: *const ShardaggReport,
    out: *mut u64,
    len: usize,
    written: *mut usize,
) -> ShardaggStatus {
    guard(|| {
        non_null(report, "report")?;
        non_null(out, "out")?;
        non_null(written, "written")?;
        let Some(v) = &(*report).inner.output else {
            return Err(fail(ShardaggStatus::Abort, "the run produced no output"));
        };
        *written = v.len();
        if len < v.len() {
            return Err(fail(ShardaggStatus::BufferTooSmall, format!("need {} slots, got {len}", v.len())));
        }
        std::slice::from_raw_parts_mut(out, v.len()).copy_from_slice(v);
        Ok(())
    })
}

/// Copies the report as NUL-terminated JSON. `*needed` receives the size
/// including the terminator; a short buffer yields
/// `SHARDAGG_STATUS_BUFFER_TOO_SMALL` and leaves `buf` untouched.
///
/// # Safety
/// `report` must be a valid handle, `buf` null or `len` writable bytes,
/// and `needed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shardagg_report_json(
    report: *const ShardaggReport,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> ShardaggStatus {
    guard(|| {
        non_null(report, "report")?;
        non_null(needed, "needed")?;
        let json = &(*report).json;
        *needed = json.len() + 1;
        if buf.is_null() || len < json.len() + 1 {
            return Err(fail(ShardaggStatus::BufferTooSmall, format!("need {} bytes", json.len() + 1)));
        }
        ptr::copy_nonoverlapping(json.as_ptr(), buf.cast::<u8>(), json.len());
        *buf.add(json.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from [`shardagg_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shardagg_report_free(report: *mut ShardaggReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
