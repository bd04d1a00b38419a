//! C ABI over `kedge-core`.
//!
//! Every fallible function returns a [`KedgeStatus`]. On failure a message is
//! available from [`kedge_last_error`] on the same thread until the next call.
//! Strings returned through `out` parameters are owned by the caller and must
//! be released with [`kedge_string_free`]; handles are released with their
//! matching `*_free` function. Passing NULL to a free function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kedge_core::chain::{self, EvidenceChain, VerificationReport};
use kedge_core::harness::{run_scenario, Scenario};
use kedge_core::policy::{EvaluationRequest, Outcome, PolicySet};
use kedge_core::state::replay_at;
use kedge_core::IntentId;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KedgeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    ChainBroken = 6,
    NotFound = 7,
    Evaluation = 8,
    Panic = 99,
}

/// Decision of a policy evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KedgeOutcome {
    Approve = 0,
    Reject = 1,
    Escalate = 2,
}

/// Opaque handle to a loaded evidence chain.
pub struct KedgeChain {
    inner: EvidenceChain,
}

/// Opaque handle to a parsed policy set.
pub struct KedgePolicySet {
    inner: PolicySet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(KedgeStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: KedgeStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> KedgeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KedgeStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            KedgeStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(KedgeStatus::NullPointer, format!("{what} is NULL"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(KedgeStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> FfiResult<()> {
    if out.is_null() {
        return fail(KedgeStatus::NullPointer, format!("{what} is NULL"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    let c = CString::new(s).or_else(|_| fail(KedgeStatus::InvalidArgument, "output contains NUL"))?;
    write_out(out, c.into_raw(), "out")
}

unsafe fn chain_ref<'a>(h: *const KedgeChain) -> FfiResult<&'a KedgeChain> {
    h.as_ref().map_or_else(|| fail(KedgeStatus::NullPointer, "chain handle is NULL"), Ok)
}

fn to_json<T: serde::Serialize>(v: &T) -> FfiResult<String> {
    serde_json::to_string(v).or_else(|e| fail(KedgeStatus::InvalidArgument, e.to_string()))
}

/// Message for the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn kedge_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kedge_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn kedge_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Verifies a serialized log. Returns `Ok` for an intact chain and
/// `ChainBroken` otherwise; `out_index` receives the first broken entry index
/// or -1.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kedge_verify_bytes(data: *const u8, len: usize, out_index: *mut i64) -> KedgeStatus {
    guard(|| {
        if data.is_null() && len > 0 {
            return fail(KedgeStatus::NullPointer, "data is NULL");
        }
        let bytes = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        report_to_status(chain::verify_bytes(bytes), out_index)
    })
}

unsafe fn report_to_status(report: VerificationReport, out_index: *mut i64) -> FfiResult<()> {
    match report {
        VerificationReport::Ok { .. } => write_out(out_index, -1, "out_index"),
        VerificationReport::Broken { index, kind } => {
            write_out(out_index, index as i64, "out_index")?;
            fail(KedgeStatus::ChainBroken, format!("broken at index {index}: {kind:?}"))
        }
    }
}

/// Loads a JSONL log from disk without verifying it.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kedge_chain_load(path: *const c_char, out: *mut *mut KedgeChain) -> KedgeStatus {
    guard(|| {
        let path = text(path, "path")?;
        let raw = std::fs::read_to_string(path).or_else(|e| fail(KedgeStatus::Io, format!("{path}: {e}")))?;
        let entries = chain::parse_jsonl(&raw).or_else(|e| fail(KedgeStatus::Parse, e.to_string()))?;
        let handle = Box::new(KedgeChain { inner: EvidenceChain::from_entries(entries) });
        write_out(out, Box::into_raw(handle), "out")
    })
}

/// Parses JSONL text into a chain handle without verifying it.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kedge_chain_parse(jsonl: *const c_char, out: *mut *mut KedgeChain) -> KedgeStatus {
    guard(|| {
        let entries = chain::parse_jsonl(text(jsonl, "jsonl")?).or_else(|e| fail(KedgeStatus::Parse, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(KedgeChain { inner: EvidenceChain::from_entries(entries) })), "out")
    })
}

/// # Safety
/// `chain` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kedge_chain_free(chain: *mut KedgeChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of entries, or 0 for a NULL handle.
///
/// # Safety
/// `chain` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kedge_chain_len(chain: *const KedgeChain) -> usize {
    chain.as_ref().map_or(0, |c| c.inner.len())
}

/// Same contract as [`kedge_verify_bytes`], over a loaded chain.
///
/// # Safety
/// `chain` must be a live handle; `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kedge_chain_verify(chain: *const KedgeChain, out_index: *mut i64) -> KedgeStatus {
    guard(|| report_to_status(chain_ref(chain)?.inner.verify(), out_index))
}

/// Derived state after the first `at` entries, as JSON.
///
/// # Safety
/// `chain` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kedge_chain_replay_json(
    chain: *const KedgeChain,
    at: usize,
    out: *mut *mut c_char,
) -> KedgeStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        let state = replay_at(c.inner.entries(), at).or_else(|e| fail(KedgeStatus::InvalidArgument, e.to_string()))?;
        write_string(out, to_json(&state.dump())?)
    })
}

/// Every entry recorded for one intent, as a JSON array.
///
/// # Safety
/// `chain` must be a live handle; `intent_id` a NUL-terminated string; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn kedge_chain_lineage_json(
    chain: *const KedgeChain,
    intent_id: *const c_char,
    out: *mut *mut c_char,
) -> KedgeStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        let id = IntentId::new(text(intent_id, "intent_id")?);
        let lineage = c.inner.lineage(&id).or_else(|e| fail(KedgeStatus::NotFound, e.to_string()))?;
        write_string(out, to_json(&lineage)?)
    })
}

/// Parses policy source text.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kedge_policy_parse(source: *const c_char, out: *mut *mut KedgePolicySet) -> KedgeStatus {
    guard(|| {
        let set = PolicySet::parse(text(source, "source")?).or_else(|e| fail(KedgeStatus::Parse, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(KedgePolicySet { inner: set })), "out")
    })
}

/// # Safety
/// `set` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kedge_policy_free(set: *mut KedgePolicySet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of rules, or 0 for a NULL handle.
///
/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kedge_policy_len(set: *const KedgePolicySet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.rules.len())
}

/// Evaluates one JSON request. `out_outcome` receives the decision; when
/// `out_trace` is not NULL it receives the decision trace as JSON. An
/// evaluation error yields `Evaluation` with `out_outcome` set to Escalate.
///
/// # Safety
/// `set` must be a live handle; `request_json` a NUL-terminated string;
/// `out_outcome` writable; `out_trace` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn kedge_policy_evaluate(
    set: *const KedgePolicySet,
    request_json: *const c_char,
    out_outcome: *mut KedgeOutcome,
    out_trace: *mut *mut c_char,
) -> KedgeStatus {
    guard(|| {
        let set = set.as_ref().map_or_else(|| fail(KedgeStatus::NullPointer, "policy handle is NULL"), Ok)?;
        let request: EvaluationRequest = serde_json::from_str(text(request_json, "request_json")?)
            .or_else(|e| fail(KedgeStatus::Parse, e.to_string()))?;
        match set.inner.evaluate(&request) {
            Ok(d) => {
                let outcome = match d.outcome {
                    Outcome::Approve => KedgeOutcome::Approve,
                    Outcome::Reject => KedgeOutcome::Reject,
                    Outcome::Escalate => KedgeOutcome::Escalate,
                };
                write_out(out_outcome, outcome, "out_outcome")?;
                if !out_trace.is_null() {
                    write_string(out_trace, to_json(&d)?)?;
                }
                Ok(())
            }
            Err(e) => {
                write_out(out_outcome, KedgeOutcome::Escalate, "out_outcome")?;
                fail(KedgeStatus::Evaluation, e.to_string())
            }
        }
    })
}

/// Runs a scenario given as JSON and returns the run report as JSON. A
/// negative `seed` keeps the scenario's own seed.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string; `out_report` writable.
#[no_mangle]
pub unsafe extern "C" fn kedge_scenario_run(
    scenario_json: *const c_char,
    seed: i64,
    out_report: *mut *mut c_char,
) -> KedgeStatus {
    guard(|| {
        let seed = u64::try_from(seed).ok();
        let s = Scenario::from_json(text(scenario_json, "scenario_json")?, seed)
            .or_else(|e| fail(KedgeStatus::Parse, e.to_string()))?;
        let report = run_scenario(&s).or_else(|e| fail(KedgeStatus::InvalidArgument, e.to_string()))?;
        write_string(out_report, to_json(&report)?)
    })
}
