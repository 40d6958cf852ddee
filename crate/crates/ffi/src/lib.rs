//! C interface to `roughdelay`.
//!
//! Objects are opaque handles created by `rd_*_new`/`rd_*_from_*` calls
//! and released with the matching `rd_*_free`. Every fallible call returns
//! an [`RdStatus`]; on failure `rd_last_error_message` describes the error
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use roughdelay::config::Config;
use roughdelay::ergodic::lyapunov_spectrum;
use roughdelay::error::Error;
use roughdelay::io::{read_rough_path, write_rough_path};
use roughdelay::noise::{sample_brownian, SamplePath};
use roughdelay::roughpath::{lift, Convention, DelayedRoughPath};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Grid = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RdConvention {
    Ito = 0,
    Stratonovich = 1,
}

/// Fine-grid Brownian sample.
pub struct RdPath(SamplePath);

/// Delayed rough path.
pub struct RdRoughPath(DelayedRoughPath);

/// Delay system built from a TOML config.
pub struct RdSystem(Config);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> RdStatus {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::NotContractive { .. } | Error::NotStable { .. } => RdStatus::Config,
        Error::GridMismatch(_) | Error::OutOfWindow(_) | Error::Dimension(_) | Error::WrongKind(_) => RdStatus::Grid,
        Error::Divergence { .. } | Error::MissingFineData(_) => RdStatus::Numerical,
        Error::Io(_) => RdStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), RdStatus>) -> RdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            RdStatus::Panic
        }
    }
}

fn fail(e: Error) -> RdStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> RdStatus {
    set_error(format!("{what} is null"));
    RdStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, RdStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        RdStatus::InvalidArgument
    })
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the last failed call on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Samples a `dim`-dimensional Brownian path on `[t_start, t_end]`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rd_path_sample_brownian(
    dim: usize,
    t_start: f64,
    t_end: f64,
    fine_step: f64,
    seed: u64,
    out: *mut *mut RdPath,
) -> RdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = sample_brownian(dim, t_start, t_end, fine_step, seed).map_err(fail)?;
        put(out, RdPath(p));
        Ok(())
    })
}

/// Number of fine nodes of `path`, or 0 if `path` is null.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rd_path_len(path: *const RdPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.n_nodes())
}

/// Copies the node values (node-major, `len × dim`) into `buf`.
///
/// # Safety
/// `path` must be a live handle and `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rd_path_values(path: *const RdPath, buf: *mut f64, cap: usize) -> RdStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = p.0.values();
        if cap < v.len() {
            set_error(format!("buffer holds {cap} values, {} needed", v.len()));
            return Err(RdStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// # Safety
/// `path` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rd_path_free(path: *mut RdPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Lifts `path` to a delayed rough path on the coarse grid of step `step`.
///
/// # Safety
/// `path` must be a live handle and `out` valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn rd_roughpath_lift(
    path: *const RdPath,
    step: f64,
    delay: f64,
    gamma: f64,
    convention: RdConvention,
    out: *mut *mut RdRoughPath,
) -> RdStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let conv = match convention {
            RdConvention::Ito => Convention::Ito,
            RdConvention::Stratonovich => Convention::Stratonovich,
        };
        let rp = lift(&p.0, step, delay, gamma, conv).map_err(fail)?;
        put(out, RdRoughPath(rp));
        Ok(())
    })
}

/// Largest Chen residual over `n` node triples `(s, u, t)` stored flat in
/// `triples`.
///
/// # Safety
/// `rp` must be a live handle, `triples` must hold `3 n` values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rd_roughpath_chen_residual(
    rp: *const RdRoughPath,
    triples: *const i64,
    n: usize,
    out: *mut f64,
) -> RdStatus {
    guard(|| {
        let rp = rp.as_ref().ok_or_else(|| null("rp"))?;
        if out.is_null() || (triples.is_null() && n > 0) {
            return Err(null("triples or out"));
        }
        let flat = if n == 0 { &[][..] } else { std::slice::from_raw_parts(triples, 3 * n) };
        let (lo, hi) = (rp.0.first_node(), rp.0.last_node());
        let mut list = Vec::with_capacity(n);
        for t in flat.chunks(3) {
            if !(lo <= t[0] && t[0] <= t[1] && t[1] <= t[2] && t[2] <= hi) {
                set_error(format!("triple {t:?} is not ordered inside [{lo}, {hi}]"));
                return Err(RdStatus::InvalidArgument);
            }
            list.push((t[0], t[1], t[2]));
        }
        *out = rp.0.chen_residual(&list);
        Ok(())
    })
}

/// Number of coarse intervals of `rp`, or 0 if `rp` is null.
///
/// # Safety
/// `rp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rd_roughpath_intervals(rp: *const RdRoughPath) -> usize {
    rp.as_ref().map_or(0, |r| r.0.n_intervals())
}

/// # Safety
/// `rp` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rd_roughpath_write(rp: *const RdRoughPath, path: *const c_char) -> RdStatus {
    guard(|| {
        let rp = rp.as_ref().ok_or_else(|| null("rp"))?;
        let path = str_arg(path, "path")?;
        write_rough_path(&rp.0, Path::new(path)).map_err(fail)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn rd_roughpath_read(path: *const c_char, out: *mut *mut RdRoughPath) -> RdStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rp = read_rough_path(Path::new(path)).map_err(fail)?;
        put(out, RdRoughPath(rp));
        Ok(())
    })
}

/// # Safety
/// `rp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rd_roughpath_free(rp: *mut RdRoughPath) {
    if !rp.is_null() {
        drop(Box::from_raw(rp));
    }
}

/// Builds a system from config text in the command-line TOML format.
/// `ROUGHDELAY_SEED` is not consulted.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn rd_system_from_toml(toml: *const c_char, out: *mut *mut RdSystem) -> RdStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = Config::from_toml(text).map_err(fail)?;
        cfg.system().map_err(fail)?;
        put(out, RdSystem(cfg));
        Ok(())
    })
}

/// Top exponents for `seed`, with the config's `run` settings. Writes
/// `run.k` values into `buf`.
///
/// # Safety
/// `sys` must be a live handle and `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rd_system_lyapunov(sys: *const RdSystem, seed: u64, buf: *mut f64, cap: usize) -> RdStatus {
    guard(|| {
        let cfg = &sys.as_ref().ok_or_else(|| null("sys"))?.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap < cfg.lyapunov.k {
            set_error(format!("buffer holds {cap} values, {} needed", cfg.lyapunov.k));
            return Err(RdStatus::BufferTooSmall);
        }
        let system = cfg.system().map_err(fail)?;
        let rep = lyapunov_spectrum(&system, seed, &cfg.lyapunov).map_err(fail)?;
        ptr::copy_nonoverlapping(rep.exponents.as_ptr(), buf, rep.exponents.len());
        Ok(())
    })
}

/// Value at the end of `run.segments` segments from the constant initial
/// segment, for `seed`. Writes the state dimension's worth of values.
///
/// # Safety
/// `sys` must be a live handle and `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rd_system_solve_final(sys: *const RdSystem, seed: u64, buf: *mut f64, cap: usize) -> RdStatus {
    guard(|| {
        let cfg = &sys.as_ref().ok_or_else(|| null("sys"))?.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let system = cfg.system().map_err(fail)?;
        let w = system.vf.state_dim();
        if cap < w {
            set_error(format!("buffer holds {cap} values, {w} needed"));
            return Err(RdStatus::BufferTooSmall);
        }
        let (_, traj) = system.base_orbit(seed, 0, cfg.segments as i64).map_err(fail)?;
        ptr::copy_nonoverlapping(traj.last().last_value().as_ptr(), buf, w);
        Ok(())
    })
}

/// # Safety
/// `sys` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rd_system_free(sys: *mut RdSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}
