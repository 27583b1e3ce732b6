//! C interface to the reserve-match engine.
//!
//! Instances are opaque handles created from JSON instance text or files
//! and released with `rm_instance_free`. Every fallible call returns an
//! `RmStatus`; on failure `rm_last_error` describes what went wrong on the
//! calling thread. Strings handed out by the library are owned by the
//! caller and released with `rm_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use reserve_match::choice::slot::convert_instance;
use reserve_match::cop::cop_outcome;
use reserve_match::harness::audit::{run_audit, AuditConfig};
use reserve_match::harness::generate::{generate_batch, GeneratorParams};
use reserve_match::harness::io::{load_any, parse_allocation, parse_instance, LoadedInstance};
use reserve_match::harness::report::{match_report, to_machine, verify_report};
use reserve_match::verify::{is_stable, DEFAULT_BLOCKING_CAP};
use reserve_match::{Error, ProblemInstance, SchoolChoices, StudentId};

/// Result of a library call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    InvalidInput = 5,
    CapExceeded = 6,
    IoError = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// A validated dynamic reserves instance. Slot-specific inputs are
/// converted on load.
pub struct RmInstance {
    inner: ProblemInstance,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> RmStatus {
    match e {
        Error::Parse { .. } | Error::SchemaVersion { .. } | Error::Duplicate { .. } => RmStatus::ParseError,
        Error::Validation(_) => RmStatus::ValidationError,
        Error::CapExceeded { .. } => RmStatus::CapExceeded,
        Error::Io(_) => RmStatus::IoError,
        _ => RmStatus::InvalidInput,
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::Validation(v) => {
            let lines: Vec<String> = v.iter().map(|v| v.to_string()).collect();
            format!("{e}: {}", lines.join("; "))
        }
        _ => e.to_string(),
    }
}

/// Runs `f`, turning errors and panics into a status and a message.
fn guard(f: impl FnOnce() -> Result<(), (RmStatus, String)>) -> RmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RmStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            RmStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (RmStatus, String) {
    (status_of(&e), describe(&e))
}

fn null(what: &str) -> (RmStatus, String) {
    (RmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (RmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn instance<'a>(p: *const RmInstance) -> Result<&'a RmInstance, (RmStatus, String)> {
    p.as_ref().ok_or_else(|| null("instance"))
}

fn into_handle(loaded: LoadedInstance) -> Result<*mut RmInstance, (RmStatus, String)> {
    let inner = match loaded {
        LoadedInstance::Dynamic(i) => i,
        LoadedInstance::SlotSpecific(s) => convert_instance(&s).map_err(lib_err)?,
    };
    Ok(Box::into_raw(Box::new(RmInstance { inner })))
}

unsafe fn give_string(out: *mut *mut c_char, s: String) -> Result<(), (RmStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s.replace('\0', " ")).expect("nul bytes removed");
    *out = c.into_raw();
    Ok(())
}

/// Message describing the outcome of the most recent call on this thread;
/// empty after a success. Valid until the next library call on the same
/// thread.
#[no_mangle]
pub extern "C" fn rm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates instance JSON text.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_instance_from_json(json: *const c_char, out: *mut *mut RmInstance) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = ptr::null_mut();
        let t = text(json, "json")?;
        *out = into_handle(parse_instance(t).map_err(lib_err)?)?;
        Ok(())
    })
}

/// Loads and validates an instance file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_instance_load(path: *const c_char, out: *mut *mut RmInstance) -> RmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = ptr::null_mut();
        let p = text(path, "path")?;
        *out = into_handle(load_any(p).map_err(lib_err)?)?;
        Ok(())
    })
}

/// Releases an instance. Null is ignored.
///
/// # Safety
/// `inst` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rm_instance_free(inst: *mut RmInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of students, or 0 for a null instance.
///
/// # Safety
/// `inst` must be null or a live instance.
#[no_mangle]
pub unsafe extern "C" fn rm_instance_num_students(inst: *const RmInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.market.num_students())
}

/// Number of schools, or 0 for a null instance.
///
/// # Safety
/// `inst` must be null or a live instance.
#[no_mangle]
pub unsafe extern "C" fn rm_instance_num_schools(inst: *const RmInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.market.num_schools())
}

/// Number of contracts, or 0 for a null instance.
///
/// # Safety
/// `inst` must be null or a live instance.
#[no_mangle]
pub unsafe extern "C" fn rm_instance_num_contracts(inst: *const RmInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.inner.market.num_contracts())
}

/// Copies the name of a contract into a newly allocated string.
///
/// # Safety
/// `inst` must be a live instance and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_contract_name(inst: *const RmInstance, contract: usize, out: *mut *mut c_char) -> RmStatus {
    guard(|| {
        let i = instance(inst)?;
        let m = &i.inner.market;
        if contract >= m.num_contracts() {
            return Err((RmStatus::InvalidInput, format!("contract {contract} out of range")));
        }
        give_string(out, m.contract_name(contract.into()).to_string())
    })
}

/// Runs the cumulative offer process. Writes each student's contract
/// index, or -1 if unassigned, into `assignment`, which must hold at least
/// `rm_instance_num_students` entries.
///
/// # Safety
/// `inst` must be a live instance and `assignment` point to `len` writable
/// entries.
#[no_mangle]
pub unsafe extern "C" fn rm_match(inst: *const RmInstance, assignment: *mut i64, len: usize) -> RmStatus {
    guard(|| {
        let i = instance(inst)?;
        if assignment.is_null() {
            return Err(null("assignment buffer"));
        }
        let m = &i.inner.market;
        let n = m.num_students();
        if len < n {
            return Err((RmStatus::BufferTooSmall, format!("buffer holds {len} entries, need {n}")));
        }
        let alloc = cop_outcome(&i.inner, &m.preferences).allocation;
        let slots = std::slice::from_raw_parts_mut(assignment, n);
        for (k, slot) in slots.iter_mut().enumerate() {
            *slot = alloc.assignment(m, StudentId::from(k)).map_or(-1, |c| c.index() as i64);
        }
        Ok(())
    })
}

/// Runs the cumulative offer process and returns the machine-readable
/// match report.
///
/// # Safety
/// `inst` must be a live instance and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rm_match_json(inst: *const RmInstance, out: *mut *mut c_char) -> RmStatus {
    guard(|| {
        let i = instance(inst)?;
        let outcome = cop_outcome(&i.inner, &i.inner.market.preferences);
        give_string(out, to_machine(&match_report(&i.inner, &outcome)))
    })
}

/// Choice of `school` from the offered contracts. Writes 1 for chosen and
/// 0 for rejected into `chosen`, parallel to `offers`.
///
/// # Safety
/// `inst` must be a live instance, `offers` point to `len` readable entries
/// and `chosen` to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn rm_choose(
    inst: *const RmInstance,
    school: usize,
    offers: *const usize,
    len: usize,
    chosen: *mut u8,
) -> RmStatus {
    guard(|| {
        let i = instance(inst)?;
        let m = &i.inner.market;
        if school >= m.num_schools() {
            return Err((RmStatus::InvalidInput, format!("school {school} out of range")));
        }
        if len > 0 && (offers.is_null() || chosen.is_null()) {
            return Err(null("offer buffer"));
        }
        let offered: &[usize] = if len == 0 { &[] } else { std::slice::from_raw_parts(offers, len) };
        let mut set = reserve_match::ContractSet::new();
        for &c in offered {
            if c >= m.num_contracts() {
                return Err((RmStatus::InvalidInput, format!("contract {c} out of range")));
            }
            if m.contract(c.into()).school.index() != school {
                return Err((RmStatus::InvalidInput, format!("contract {c} belongs to another school")));
            }
            set.insert(c.into());
        }
        let picked = i.inner.choose(school.into(), &set);
        if len > 0 {
            let marks = std::slice::from_raw_parts_mut(chosen, len);
            for (mark, &c) in marks.iter_mut().zip(offered) {
                *mark = picked.contains(&c.into()) as u8;
            }
        }
        Ok(())
    })
}

/// Checks the stability of an allocation given as JSON
/// (`{"contracts": [names]}`). Sets `stable` and, when `report` is not
/// null, returns the machine-readable stability report.
///
/// # Safety
/// `inst` must be a live instance, `allocation_json` a nul-terminated
/// string, `stable` writable and `report` null or writable.
#[no_mangle]
pub unsafe extern "C" fn rm_verify_json(
    inst: *const RmInstance,
    allocation_json: *const c_char,
    stable: *mut bool,
    report: *mut *mut c_char,
) -> RmStatus {
    guard(|| {
        let i = instance(inst)?;
        if stable.is_null() {
            return Err(null("stable flag"));
        }
        let m = &i.inner.market;
        let alloc = parse_allocation(text(allocation_json, "allocation")?, m).map_err(lib_err)?;
        let r = is_stable(&alloc, &i.inner, &m.preferences, DEFAULT_BLOCKING_CAP).map_err(lib_err)?;
        *stable = r.is_stable();
        if !report.is_null() {
            give_string(report, to_machine(&verify_report(&i.inner, &alloc, &r)))?;
        }
        Ok(())
    })
}

/// Runs the property audit on `count` generated instances and returns the
/// machine-readable report. `passed` reports whether every suite passed.
///
/// # Safety
/// `passed` and `out` must be writable pointers.
#[no_mangle]
pub unsafe extern "C" fn rm_audit_json(seed: u64, count: usize, passed: *mut bool, out: *mut *mut c_char) -> RmStatus {
    guard(|| {
        if passed.is_null() {
            return Err(null("passed flag"));
        }
        let insts: Vec<(String, ProblemInstance)> = generate_batch(&GeneratorParams::default().with_seed(seed), count)
            .into_iter()
            .enumerate()
            .map(|(n, i)| (format!("#{n}"), i))
            .collect();
        let cfg = AuditConfig {
            seed,
            ..AuditConfig::default()
        };
        let report = run_audit(&insts, &cfg);
        *passed = report.passed();
        give_string(out, to_machine(&report))
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
