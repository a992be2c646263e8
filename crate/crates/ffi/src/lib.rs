//! C ABI over the synthesis pipeline.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns an
//! [`EffsynthStatus`] and, on failure, leaves a message retrievable with
//! [`effsynth_last_error_message`] on the same thread. Strings handed out by
//! the library must be released with [`effsynth_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use effsynth::model::{build_product, ProductMdp, UtilityFn};
use effsynth::parsers::{parse_dra, parse_model, parse_utility_table, write_policy};
use effsynth::synthesis::{synth_general, Method, SynthOptions, SynthesisReport};
use effsynth::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffsynthStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    InvalidParameter = 5,
    Unsatisfiable = 6,
    Solver = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffsynthMethod {
    Estimated = 0,
    Exact = 1,
}

/// A product of a model and an automaton with its reward and cost.
pub struct EffsynthProblem {
    pm: ProductMdp,
    reward: UtilityFn,
    cost: UtilityFn,
}

/// Result of a synthesis run.
pub struct EffsynthReport {
    report: SynthesisReport,
    policy_text: String,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> EffsynthStatus {
    match e {
        Error::Parse { .. } => EffsynthStatus::Parse,
        Error::Validation(_)
        | Error::Nondeterminism { .. }
        | Error::Incompleteness { .. }
        | Error::AlphabetMismatch { .. }
        | Error::PolicyMismatch(_) => EffsynthStatus::Validation,
        Error::Param(_) | Error::Io(_) => EffsynthStatus::InvalidParameter,
        Error::TaskUnsatisfiable | Error::NoMaec | Error::Unreachable { .. } => EffsynthStatus::Unsatisfiable,
        _ => EffsynthStatus::Solver,
    }
}

struct Fail(EffsynthStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording failures and turning panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EffsynthStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EffsynthStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EffsynthStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(EffsynthStatus::NullArgument, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(EffsynthStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn out_string(s: &str, out: *mut *mut c_char) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(EffsynthStatus::Solver, "string contains NUL".into()))?;
    // SAFETY: caller guarantees `out` is valid; checked non-null by callers.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn effsynth_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn effsynth_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a problem from model text, automaton text and an optional
/// utility table (null to use the model's inline blocks).
///
/// # Safety
/// String arguments must be null or valid NUL-terminated strings; `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn effsynth_problem_from_text(
    model: *const c_char,
    dra: *const c_char,
    table: *const c_char,
    out: *mut *mut EffsynthProblem,
) -> EffsynthStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let parsed = parse_model(text(model, "model")?)?;
        let d = parse_dra(text(dra, "dra")?)?;
        let (r, c) = if table.is_null() {
            parsed
                .reward
                .clone()
                .zip(parsed.cost.clone())
                .ok_or_else(|| Fail(EffsynthStatus::InvalidParameter, "model has no reward and cost blocks".into()))?
        } else {
            parse_utility_table(text(table, "table")?, &parsed.mdp)?
        };
        let pm = build_product(&parsed.mdp, &d)?;
        let (reward, cost) = (pm.lift_utility(&r), pm.lift_utility(&c));
        *out = Box::into_raw(Box::new(EffsynthProblem { pm, reward, cost }));
        Ok(())
    })
}

/// Number of product states.
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn effsynth_problem_state_count(p: *const EffsynthProblem, out: *mut usize) -> EffsynthStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("problem"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = p.pm.n_states();
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`effsynth_problem_from_text`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn effsynth_problem_free(p: *mut EffsynthProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Synthesizes an `epsilon`-optimal policy with default tolerances.
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn effsynth_synthesize(
    p: *const EffsynthProblem,
    epsilon: f64,
    method: EffsynthMethod,
    out: *mut *mut EffsynthReport,
) -> EffsynthStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let p = p.as_ref().ok_or_else(|| null("problem"))?;
        let method = match method {
            EffsynthMethod::Estimated => Method::Es,
            EffsynthMethod::Exact => Method::Ex,
        };
        let opts = SynthOptions { method, ..SynthOptions::default() };
        let report = synth_general(&p.pm, &p.reward, &p.cost, epsilon, &opts)?;
        let policy_text = write_policy(&p.pm, &report.policy, &[("epsilon", epsilon.to_string())]);
        *out = Box::into_raw(Box::new(EffsynthReport { report, policy_text }));
        Ok(())
    })
}

/// # Safety
/// `r` must be a live report handle and `out` a valid pointer.
unsafe fn report_field(r: *const EffsynthReport, out: *mut f64, f: impl FnOnce(&SynthesisReport) -> f64) -> EffsynthStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("report"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = f(&r.report);
        Ok(())
    })
}

/// Optimal efficiency over accepting policies.
///
/// # Safety
/// `r` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn effsynth_report_value(r: *const EffsynthReport, out: *mut f64) -> EffsynthStatus {
    report_field(r, out, |x| x.value)
}

/// Efficiency of the synthesized policy.
///
/// # Safety
/// `r` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn effsynth_report_efficiency(r: *const EffsynthReport, out: *mut f64) -> EffsynthStatus {
    report_field(r, out, |x| x.efficiency)
}

/// Perturbation degree applied, or NaN if no perturbation was needed.
///
/// # Safety
/// `r` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn effsynth_report_delta(r: *const EffsynthReport, out: *mut f64) -> EffsynthStatus {
    report_field(r, out, |x| x.delta().unwrap_or(f64::NAN))
}

/// Whether every reachable recurrent class accepts.
///
/// # Safety
/// `r` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn effsynth_report_accepted(r: *const EffsynthReport, out: *mut bool) -> EffsynthStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("report"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = r.report.certificate.accepted;
        Ok(())
    })
}

/// The full report as JSON. Free the string with [`effsynth_string_free`].
///
/// # Safety
/// `r` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn effsynth_report_json(r: *const EffsynthReport, out: *mut *mut c_char) -> EffsynthStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = serde_json::to_string(&r.report).map_err(|e| Fail(EffsynthStatus::Solver, e.to_string()))?;
        out_string(&s, out)
    })
}

/// Canonical policy text over product states. Free with [`effsynth_string_free`].
///
/// # Safety
/// `r` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn effsynth_report_policy_text(
    r: *const EffsynthReport,
    out: *mut *mut c_char,
) -> EffsynthStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(&r.policy_text, out)
    })
}

/// # Safety
/// `r` must be null or a handle from [`effsynth_synthesize`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn effsynth_report_free(r: *mut EffsynthReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn effsynth_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
