// Copyright 2026 The Vexlog Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


//! C interface.
//!
//! Every function returns a [`VexStatus`]. Objects are opaque handles that
//! the caller releases with the matching `*_free` function. Strings handed
//! out by the library are released with [`vex_string_free`]. After a
//! failure, [`vex_last_error`] describes it until the next call on the same
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vexlog::db::InputFact;
use vexlog::provenance::{ProvenanceConfig, SemiringKind};
use vexlog::session::{stats_json, RunOutput, Session, SessionConfig, SessionError, MAX_BATCH};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VexStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Config = 4,
    Facts = 5,
    Execution = 6,
    NotFound = 7,
    Panic = 8,
}

/// A loaded program with pending input facts.
pub struct VexSession {
    session: Session,
    samples: Vec<Vec<InputFact>>,
}

/// Output of one run.
pub struct VexResult {
    output: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

struct Fail(VexStatus, String);

impl From<SessionError> for Fail {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Frontend(_) | SessionError::Compile(_) => VexStatus::Parse,
            SessionError::Db(_) => VexStatus::Facts,
            SessionError::Exec(_) => VexStatus::Execution,
            SessionError::Provenance(_) | SessionError::Config(_) => VexStatus::Config,
        };
        Fail(code, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VexStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            VexStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(VexStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(VexStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn non_null<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(VexStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Parses `program` under the provenance named `provenance` (for example
/// `"unit"` or `"diff-add-mult-prob"`).
///
/// # Safety
/// `program` and `provenance` must be NUL-terminated strings and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vex_session_new(
    program: *const c_char,
    provenance: *const c_char,
    out: *mut *mut VexSession,
) -> VexStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let src = text(program, "program")?;
        let kind: SemiringKind = text(provenance, "provenance")?
            .parse()
            .map_err(|e: vexlog::provenance::ProvenanceError| Fail(VexStatus::Config, e.to_string()))?;
        let config = SessionConfig {
            provenance: ProvenanceConfig::new(kind),
            ..Default::default()
        };
        let session = Session::new(src, config)?;
        *out = Box::into_raw(Box::new(VexSession {
            session,
            samples: vec![Vec::new()],
        }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`vex_session_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vex_session_free(s: *mut VexSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Sets the worker thread count; 0 is treated as 1.
///
/// # Safety
/// `s` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn vex_session_set_threads(s: *mut VexSession, threads: usize) -> VexStatus {
    guard(|| {
        non_null(s, "session")?;
        (*s).session.config.exec.threads = threads.max(1);
        Ok(())
    })
}

/// Sets how many samples run together; 1 disables batching.
///
/// # Safety
/// `s` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn vex_session_set_batch(s: *mut VexSession, batch: usize) -> VexStatus {
    guard(|| {
        non_null(s, "session")?;
        if batch == 0 || batch > MAX_BATCH {
            return Err(Fail(VexStatus::Config, format!("batch size must be within 1..={MAX_BATCH}")));
        }
        (*s).session.config.batch = batch;
        Ok(())
    })
}

/// Starts a new sample; facts added afterwards belong to it.
///
/// # Safety
/// `s` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn vex_session_new_sample(s: *mut VexSession) -> VexStatus {
    guard(|| {
        non_null(s, "session")?;
        (*s).samples.push(Vec::new());
        Ok(())
    })
}

/// Adds facts for `relation` to the current sample. `facts` uses the
/// `.facts` file format.
///
/// # Safety
/// `s` must be a live session; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vex_session_add_facts(
    s: *mut VexSession,
    relation: *const c_char,
    facts: *const c_char,
) -> VexStatus {
    guard(|| {
        non_null(s, "session")?;
        let rel = text(relation, "relation")?;
        let body = text(facts, "facts")?;
        let s = &mut *s;
        let parsed = s.session.parse_facts(rel, body)?;
        s.samples.last_mut().expect("at least one sample").extend(parsed);
        Ok(())
    })
}

/// Evaluates the program over every sample.
///
/// # Safety
/// `s` must be a live session and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vex_session_run(s: *mut VexSession, out: *mut *mut VexResult) -> VexStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(s, "session")?;
        let s = &*s;
        let output = s.session.run(s.samples.clone())?;
        *out = Box::into_raw(Box::new(VexResult { output }));
        Ok(())
    })
}

/// # Safety
/// `r` must come from [`vex_session_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vex_result_free(r: *mut VexResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Number of samples in a result.
///
/// # Safety
/// `r` must be a live result.
#[no_mangle]
pub unsafe extern "C" fn vex_result_samples(r: *const VexResult) -> usize {
    if r.is_null() {
        0
    } else {
        (*r).output.samples.len()
    }
}

/// Renders `relation` of `sample` in the `.facts` format. Release the
/// string with [`vex_string_free`].
///
/// # Safety
/// `r` must be a live result, `relation` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vex_result_relation(
    r: *const VexResult,
    sample: usize,
    relation: *const c_char,
    out: *mut *mut c_char,
) -> VexStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        if r.is_null() {
            return Err(Fail(VexStatus::NullArgument, "result is null".into()));
        }
        let rel = text(relation, "relation")?;
        let r = &*r;
        let body = r
            .output
            .samples
            .get(sample)
            .and_then(|s| s.relations.get(rel))
            .ok_or_else(|| Fail(VexStatus::NotFound, format!("no output `{rel}` for sample {sample}")))?;
        *out = CString::new(body.as_str()).unwrap_or_default().into_raw();
        Ok(())
    })
}

/// Run statistics as JSON. Release the string with [`vex_string_free`].
///
/// # Safety
/// `r` must be a live result and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vex_result_stats_json(r: *const VexResult, out: *mut *mut c_char) -> VexStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        if r.is_null() {
            return Err(Fail(VexStatus::NullArgument, "result is null".into()));
        }
        let json = stats_json(&(*r).output.stats);
        *out = CString::new(json).unwrap_or_default().into_raw();
        Ok(())
    })
}

/// # Safety
/// `p` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vex_string_free(p: *mut c_char) {
    if !p.is_null() {
        drop(CString::from_raw(p));
    }
}

/// Message for the last failure on this thread, or null. Valid until the
/// next call into the library from this thread.
#[no_mangle]
pub extern "C" fn vex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn vex_status_name(status: VexStatus) -> *const c_char {
    let s: &'static CStr = match status {
        VexStatus::Ok => c"ok",
        VexStatus::NullArgument => c"null argument",
        VexStatus::InvalidUtf8 => c"invalid utf-8",
        VexStatus::Parse => c"parse error",
        VexStatus::Config => c"configuration error",
        VexStatus::Facts => c"bad facts",
        VexStatus::Execution => c"execution error",
        VexStatus::NotFound => c"not found",
        VexStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}
