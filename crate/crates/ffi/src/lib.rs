//! C ABI for the convsim simulator.
//!
//! Every fallible call returns a [`ConvsimStatus`]. On failure the message is
//! kept per thread and can be read with [`convsim_last_error`]. Handles are
//! opaque and owned by the caller until passed to their `_free` function.
//! Strings returned by the library must be released with
//! [`convsim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use convsim_core::metrics::{render_rows, ReportFormat, ReportRow};
use convsim_core::model::FeatureMap;
use convsim_core::runner::{gen_net, run_network, synthetic_input, NetworkConfig, RunOptions};
use convsim_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    DimensionMismatch = 4,
    Format = 5,
    Io = 6,
    Verification = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvsimFormat {
    Csv = 0,
    Json = 1,
}

/// A parsed and validated network description.
pub struct ConvsimNetwork {
    cfg: NetworkConfig,
}

/// Outputs and per-layer reports of one network run.
pub struct ConvsimRun {
    outputs: Vec<FeatureMap>,
    rows: Vec<ReportRow>,
    cycles: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> ConvsimStatus {
    match e {
        Error::InvalidLayer(_) | Error::InvalidConfig(_) | Error::ConfigParse(_) | Error::ChainMismatch { .. } => {
            ConvsimStatus::InvalidConfig
        }
        Error::DimensionMismatch(_) => ConvsimStatus::DimensionMismatch,
        Error::MalformedEncoding(_) | Error::Format(_) => ConvsimStatus::Format,
        Error::Io { .. } => ConvsimStatus::Io,
        Error::Verification { .. } => ConvsimStatus::Verification,
        Error::Precondition(_) => ConvsimStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), (ConvsimStatus, String)>) -> ConvsimStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ConvsimStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ConvsimStatus::Panic
        }
    }
}

fn core(e: Error) -> (ConvsimStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ConvsimStatus, String) {
    (ConvsimStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ConvsimStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ConvsimStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn give_network(cfg: NetworkConfig, out: *mut *mut ConvsimNetwork) {
    unsafe { *out = Box::into_raw(Box::new(ConvsimNetwork { cfg })) };
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn convsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn convsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn convsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a TOML network description.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convsim_network_from_toml(
    text: *const c_char,
    out: *mut *mut ConvsimNetwork,
) -> ConvsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(text, "text")?;
        give_network(NetworkConfig::from_toml(text).map_err(core)?, out);
        Ok(())
    })
}

/// Loads a TOML network description; relative weight paths resolve against
/// its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convsim_network_load(path: *const c_char, out: *mut *mut ConvsimNetwork) -> ConvsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        give_network(NetworkConfig::load(path).map_err(core)?, out);
        Ok(())
    })
}

/// One of the built-in networks: alexnet, vgg, googlenet, resnet.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convsim_network_builtin(name: *const c_char, out: *mut *mut ConvsimNetwork) -> ConvsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(name, "name")?;
        give_network(gen_net(name).map_err(core)?, out);
        Ok(())
    })
}

/// # Safety
/// `net` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn convsim_network_free(net: *mut ConvsimNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of layers and input shape `(C, H, W)` of the first layer. Any
/// output pointer may be NULL.
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn convsim_network_shape(
    net: *const ConvsimNetwork,
    layers: *mut usize,
    channels: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> ConvsimStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let (c, h, w) = net.cfg.layers[0].spec.input_dims();
        for (p, v) in [(layers, net.cfg.layers.len()), (channels, c), (height, h), (width, w)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Runs the network on `batch` inputs laid out back to back as `(C, H, W)`
/// int16 maps. With `input` NULL the config's synthetic input is used and
/// `len`/`batch` are ignored. A nonzero `verify` checks every layer against
/// the software reference; a mismatch returns `Verification`.
///
/// # Safety
/// `net` must be a live handle; `input` must point to `len` values or be
/// NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convsim_network_run(
    net: *const ConvsimNetwork,
    input: *const i16,
    len: usize,
    batch: usize,
    verify: c_int,
    out: *mut *mut ConvsimRun,
) -> ConvsimStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let first = &net.cfg.layers[0].spec;
        let xs = if input.is_null() {
            synthetic_input(first, &net.cfg.input)
        } else {
            let (c, h, w) = first.input_dims();
            let per = c * h * w;
            if batch == 0 || len != per * batch {
                return Err((
                    ConvsimStatus::DimensionMismatch,
                    format!("expected {batch} x {per} input values, got {len}"),
                ));
            }
            let data = std::slice::from_raw_parts(input, len);
            data.chunks(per)
                .map(|d| FeatureMap::new(c, h, w, d.to_vec()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(core)?
        };
        let opts = RunOptions {
            verify: verify != 0,
            inject_fault: None,
        };
        let run = run_network(&net.cfg, xs, opts).map_err(core)?;
        let handle = ConvsimRun {
            cycles: run.reports.iter().map(|r| r.run.cycles).sum(),
            rows: run.reports.iter().map(|r| r.row()).collect(),
            outputs: run.outputs,
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn convsim_run_free(run: *mut ConvsimRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Total simulated cycles over all layers.
///
/// # Safety
/// `run` must be a live handle; `cycles` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convsim_run_cycles(run: *const ConvsimRun, cycles: *mut u64) -> ConvsimStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if cycles.is_null() {
            return Err(null("cycles"));
        }
        *cycles = run.cycles;
        Ok(())
    })
}

/// Copies the final feature maps into `buf`. `*len` receives the number of
/// values; call with `buf` NULL to query it. Returns `BufferTooSmall` when
/// `cap` is short.
///
/// # Safety
/// `run` must be a live handle; `buf` must hold `cap` values or be NULL;
/// `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convsim_run_output(
    run: *const ConvsimRun,
    buf: *mut i16,
    cap: usize,
    len: *mut usize,
) -> ConvsimStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if len.is_null() {
            return Err(null("len"));
        }
        let n: usize = run.outputs.iter().map(|m| m.data().len()).sum();
        *len = n;
        if buf.is_null() {
            return Ok(());
        }
        if cap < n {
            return Err((
                ConvsimStatus::BufferTooSmall,
                format!("need {n} values, buffer holds {cap}"),
            ));
        }
        let mut off = 0;
        for m in &run.outputs {
            ptr::copy_nonoverlapping(m.data().as_ptr(), buf.add(off), m.data().len());
            off += m.data().len();
        }
        Ok(())
    })
}

/// Per-layer report as CSV or JSON. Free the string with
/// `convsim_string_free`.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convsim_run_report(
    run: *const ConvsimRun,
    format: ConvsimFormat,
    out: *mut *mut c_char,
) -> ConvsimStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let f = match format {
            ConvsimFormat::Csv => ReportFormat::Csv,
            ConvsimFormat::Json => ReportFormat::Json,
        };
        let text = render_rows(&run.rows, f).map_err(core)?;
        *out = CString::new(text)
            .map_err(|_| (ConvsimStatus::Format, "report contains NUL".to_string()))?
            .into_raw();
        Ok(())
    })
}
