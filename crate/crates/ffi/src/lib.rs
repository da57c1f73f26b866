//! C ABI for the campus simulator.
//!
//! A `CnPlane` owns a simulated network and its management plane. Every
//! call returns a `CnStatus`; on failure the handle keeps a message that
//! `cn_last_error` returns until the next call on the same handle.
//! Strings go out through caller buffers: a call that needs more room
//! fails with `CN_BUFFER_TOO_SMALL` and reports the size needed
//! (including the terminating NUL) through `needed`.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use campusnet::campus::{default_policy, demo_world, World, WorldConfig};
use campusnet::control::scenario::{run_text, RunOptions};
use campusnet::control::shell::{Shell, ShellError};
use campusnet::control::{Actor, ControlError, Plane, Role};
use campusnet::simcore::SimTime;
use campusnet::topology::load_topology;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CnStatus {
    CnOk = 0,
    CnNullArgument = 1,
    CnInvalidUtf8 = 2,
    CnParseError = 3,
    CnForbidden = 4,
    CnTargetUnknown = 5,
    CnValidationFailed = 6,
    CnUsage = 7,
    CnBufferTooSmall = 8,
    CnInternal = 9,
}

/// Opaque handle.
pub struct CnPlane {
    plane: Plane,
    last_error: CString,
}

struct Failure(CnStatus, String);

impl From<ControlError> for Failure {
    fn from(e: ControlError) -> Self {
        let code = match e {
            ControlError::Forbidden { .. } => CnStatus::CnForbidden,
            ControlError::TargetUnknown(_) => CnStatus::CnTargetUnknown,
            ControlError::ValidationFailed(_) => CnStatus::CnValidationFailed,
        };
        Failure(code, e.to_string())
    }
}

impl From<ShellError> for Failure {
    fn from(e: ShellError) -> Self {
        match e {
            ShellError::Usage(_) => Failure(CnStatus::CnUsage, e.to_string()),
            ShellError::Control(c) => c.into(),
        }
    }
}

fn null() -> Failure {
    Failure(CnStatus::CnNullArgument, "null argument".into())
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(CnStatus::CnInvalidUtf8, "argument is not UTF-8".into()))
}

unsafe fn write_out(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Failure> {
    let want = s.len() + 1;
    if !needed.is_null() {
        *needed = want;
    }
    if buf.is_null() || len < want {
        return Err(Failure(CnStatus::CnBufferTooSmall, format!("need {want} bytes")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Result<(), Failure> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err(Failure(CnStatus::CnInternal, "internal panic".into())))
}

/// Runs `f` on a live handle and records its error there.
unsafe fn with_plane(h: *mut CnPlane, f: impl FnOnce(&mut CnPlane) -> Result<(), Failure>) -> CnStatus {
    let Some(h) = h.as_mut() else { return CnStatus::CnNullArgument };
    match guard(|| f(h)) {
        Ok(()) => {
            h.last_error = CString::default();
            CnStatus::CnOk
        }
        Err(Failure(code, msg)) => {
            h.last_error = CString::new(msg.replace('\0', " ")).unwrap_or_default();
            code
        }
    }
}

fn config(seed: u64, fast_timers: bool) -> WorldConfig {
    let mut cfg = if fast_timers { WorldConfig::fast() } else { WorldConfig::default() };
    cfg.seed = seed;
    cfg
}

fn boxed(world: World) -> Result<*mut CnPlane, Failure> {
    let mut w = world;
    w.converge().map_err(|e| Failure(CnStatus::CnInternal, e.to_string()))?;
    Ok(Box::into_raw(Box::new(CnPlane { plane: Plane::new(w), last_error: CString::default() })))
}

/// Built-in demo campus, converged.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cn_plane_new_demo(seed: u64, fast_timers: bool, out: *mut *mut CnPlane) -> CnStatus {
    if out.is_null() {
        return CnStatus::CnNullArgument;
    }
    match guard(|| {
        let w = demo_world(config(seed, fast_timers)).map_err(|e| Failure(CnStatus::CnInternal, e.to_string()))?;
        *out = boxed(w)?;
        Ok(())
    }) {
        Ok(()) => CnStatus::CnOk,
        Err(Failure(code, _)) => code,
    }
}

/// Network from topology text, default firewall policy, converged.
///
/// # Safety
/// `topology` must be a NUL-terminated string; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn cn_plane_new(topology: *const c_char, seed: u64, fast_timers: bool, out: *mut *mut CnPlane) -> CnStatus {
    if out.is_null() {
        return CnStatus::CnNullArgument;
    }
    match guard(|| {
        let topo = load_topology(text(topology)?).map_err(|e| Failure(CnStatus::CnParseError, e.to_string()))?;
        let w = World::new(topo, default_policy(), config(seed, fast_timers))
            .map_err(|e| Failure(CnStatus::CnValidationFailed, e.to_string()))?;
        *out = boxed(w)?;
        Ok(())
    }) {
        Ok(()) => CnStatus::CnOk,
        Err(Failure(code, _)) => code,
    }
}

/// # Safety
/// `h` must come from a constructor here and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cn_plane_free(h: *mut CnPlane) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Message for the last failed call on `h`; empty after a success.
/// Valid until the next call on `h`.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cn_last_error(h: *const CnPlane) -> *const c_char {
    match h.as_ref() {
        Some(h) => h.last_error.as_ptr(),
        None => c"null handle".as_ptr(),
    }
}

#[no_mangle]
pub extern "C" fn cn_status_name(status: CnStatus) -> *const c_char {
    match status {
        CnStatus::CnOk => c"ok",
        CnStatus::CnNullArgument => c"null argument",
        CnStatus::CnInvalidUtf8 => c"invalid utf-8",
        CnStatus::CnParseError => c"parse error",
        CnStatus::CnForbidden => c"forbidden",
        CnStatus::CnTargetUnknown => c"target unknown",
        CnStatus::CnValidationFailed => c"validation failed",
        CnStatus::CnUsage => c"usage",
        CnStatus::CnBufferTooSmall => c"buffer too small",
        CnStatus::CnInternal => c"internal error",
    }
    .as_ptr()
}

/// Simulated time in nanoseconds.
///
/// # Safety
/// `h` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn cn_plane_now_ns(h: *mut CnPlane, out: *mut u64) -> CnStatus {
    with_plane(h, |h| {
        let out = out.as_mut().ok_or_else(null)?;
        *out = h.plane.world.now().ticks();
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cn_plane_advance_ms(h: *mut CnPlane, ms: u64) -> CnStatus {
    with_plane(h, |h| {
        h.plane.advance(SimTime::from_millis(ms));
        Ok(())
    })
}

/// Number of links the spanning tree currently blocks.
///
/// # Safety
/// `h` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn cn_plane_blocked_links(h: *mut CnPlane, out: *mut usize) -> CnStatus {
    with_plane(h, |h| {
        let out = out.as_mut().ok_or_else(null)?;
        *out = h.plane.world.blocked_links().len();
        Ok(())
    })
}

/// Number of entries in the event log.
///
/// # Safety
/// `h` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn cn_plane_event_count(h: *mut CnPlane, out: *mut usize) -> CnStatus {
    with_plane(h, |h| {
        let out = out.as_mut().ok_or_else(null)?;
        *out = h.plane.world.log().len();
        Ok(())
    })
}

/// Runs one shell line as `actor` with `role` ("netadmin", "desktop",
/// "servicedesk") and copies its output into `buf`.
///
/// # Safety
/// `h` must be a live handle; strings NUL-terminated; `buf` writable for
/// `len` bytes; `needed` null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn cn_plane_exec(
    h: *mut CnPlane,
    role: *const c_char,
    actor: *const c_char,
    line: *const c_char,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> CnStatus {
    with_plane(h, |h| {
        let role: Role = text(role)?.parse().map_err(|e: String| Failure(CnStatus::CnValidationFailed, e))?;
        let actor = Actor::new(text(actor)?, role);
        let line = text(line)?;
        let out = Shell::new(&mut h.plane, actor).exec_line(line)?;
        write_out(&out, buf, len, needed)
    })
}

/// Event log entries from `since` on as NDJSON.
///
/// # Safety
/// As for `cn_plane_exec`.
#[no_mangle]
pub unsafe extern "C" fn cn_plane_events(h: *mut CnPlane, since: usize, buf: *mut c_char, len: usize, needed: *mut usize) -> CnStatus {
    with_plane(h, |h| {
        let reader = Actor::new("ffi", Role::NetAdmin);
        let (ndjson, _) = h.plane.events_ndjson(&reader, since)?;
        write_out(&ndjson, buf, len, needed)
    })
}

/// Runs a scenario script. `passed` receives whether every assertion
/// held; `buf` receives the report, or the script error with its line.
///
/// # Safety
/// `script` NUL-terminated; `passed` valid for a write; `buf`/`needed`
/// as for `cn_plane_exec`.
#[no_mangle]
pub unsafe extern "C" fn cn_run_scenario(
    script: *const c_char,
    seed: u64,
    passed: *mut bool,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> CnStatus {
    let r = guard(|| {
        let passed = passed.as_mut().ok_or_else(null)?;
        let opts = RunOptions { seed, ..Default::default() };
        match run_text(text(script)?, &opts) {
            Ok(run) => {
                *passed = run.report.passed();
                write_out(&run.report.render(), buf, len, needed)
            }
            Err(e) => {
                *passed = false;
                write_out(&e.to_string(), buf, len, needed)?;
                Err(Failure(CnStatus::CnParseError, e.to_string()))
            }
        }
    });
    match r {
        Ok(()) => CnStatus::CnOk,
        Err(Failure(code, _)) => code,
    }
}
