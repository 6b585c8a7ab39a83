//! C ABI over `popinf-core`.
//!
//! Every fallible function returns a [`PopinfStatus`]; on failure the message
//! is kept per thread and can be copied out with
//! [`popinf_last_error_message`]. Models are opaque handles released with
//! their matching `_free` function. Output buffers are caller-allocated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use popinf_core::autodiff::Mat;
use popinf_core::dynamics::{default_frf_grid, driving_point_line, natural_frequencies, assemble_matrices, StructureSpec};
use popinf_core::experiments::nmse;
use popinf_core::models::{gp_fit, Checkpoint, GpFitOptions, GpModel};
use popinf_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PopinfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// A fitted single-output Gaussian process.
pub struct PopinfGp {
    model: GpModel,
}

/// A trained MAML or CNP checkpoint.
pub struct PopinfCheckpoint {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> PopinfStatus {
    match err {
        Error::Config { .. } => PopinfStatus::Config,
        Error::Io { .. } => PopinfStatus::Io,
        e if e.is_numerical() => PopinfStatus::Numerical,
        Error::Dimension(_) => PopinfStatus::InvalidArgument,
        _ => PopinfStatus::Data,
    }
}

struct Fail(PopinfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PopinfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PopinfStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            PopinfStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(PopinfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn popinf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn popinf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Number of lines in the default FRF grid.
#[no_mangle]
pub extern "C" fn popinf_frf_grid_len() -> usize {
    default_frf_grid().len()
}

/// Default FRF grid frequencies (Hz) into `out[popinf_frf_grid_len()]`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn popinf_frf_grid(out: *mut f64, len: usize) -> PopinfStatus {
    guard(|| {
        let grid = default_frf_grid();
        if len != grid.len() {
            return Err(Fail(PopinfStatus::InvalidArgument, format!("grid has {} lines, buffer {len}", grid.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(&grid);
        Ok(())
    })
}

/// Driving-point receptance magnitude of the default chain with base
/// stiffness `k` at `temperature` and `freq`.
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn popinf_spectral_line(k: f64, temperature: f64, freq: f64, out: *mut f64) -> PopinfStatus {
    guard(|| {
        let out = slice_mut(out, 1, "out")?;
        out[0] = driving_point_line(&StructureSpec::default_with_stiffness(k), temperature, freq)?;
        Ok(())
    })
}

/// Driving-point receptance magnitudes on the default grid.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn popinf_frf(k: f64, temperature: f64, out: *mut f64, len: usize) -> PopinfStatus {
    guard(|| {
        let grid = default_frf_grid();
        if len != grid.len() {
            return Err(Fail(PopinfStatus::InvalidArgument, format!("grid has {} lines, buffer {len}", grid.len())));
        }
        let out = slice_mut(out, len, "out")?;
        let mats = assemble_matrices(&StructureSpec::default_with_stiffness(k), temperature)?;
        let c = popinf_core::dynamics::frf_direct(&mats, 0, 0, &grid)?;
        out.copy_from_slice(&c.magnitude);
        Ok(())
    })
}

/// Undamped natural frequencies (Hz, ascending) of the default chain.
///
/// # Safety
/// `out` must point to `len` writable doubles; `len` must equal the DOF count.
#[no_mangle]
pub unsafe extern "C" fn popinf_natural_frequencies(k: f64, temperature: f64, out: *mut f64, len: usize) -> PopinfStatus {
    guard(|| {
        let spec = StructureSpec::default_with_stiffness(k);
        if len != spec.n_dof() {
            return Err(Fail(PopinfStatus::InvalidArgument, format!("{} modes, buffer {len}", spec.n_dof())));
        }
        let f = natural_frequencies(&assemble_matrices(&spec, temperature)?)?;
        slice_mut(out, len, "out")?.copy_from_slice(&f);
        Ok(())
    })
}

/// Normalized mean squared error in percent.
///
/// # Safety
/// `pred` and `truth` must each point to `n` doubles; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn popinf_nmse(pred: *const f64, truth: *const f64, n: usize, out: *mut f64) -> PopinfStatus {
    guard(|| {
        let v = nmse(slice(pred, n, "pred")?, slice(truth, n, "truth")?)?;
        slice_mut(out, 1, "out")?[0] = v;
        Ok(())
    })
}

/// Fits a GP with the default optimizer settings and the given seed.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn popinf_gp_fit(
    x: *const f64,
    y: *const f64,
    n: usize,
    seed: u64,
    out: *mut *mut PopinfGp,
) -> PopinfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = GpFitOptions {
            seed,
            ..GpFitOptions::default()
        };
        let model = gp_fit(slice(x, n, "x")?, slice(y, n, "y")?, &opts)?;
        *out = Box::into_raw(Box::new(PopinfGp { model }));
        Ok(())
    })
}

/// Posterior mean and variance at `m` queries. `var` may be null.
///
/// # Safety
/// `gp` must come from `popinf_gp_fit`; buffers must hold `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn popinf_gp_predict(
    gp: *const PopinfGp,
    queries: *const f64,
    m: usize,
    mean: *mut f64,
    var: *mut f64,
) -> PopinfStatus {
    guard(|| {
        let gp = gp.as_ref().ok_or_else(|| null("gp"))?;
        let (mu, v) = gp.model.predict(slice(queries, m, "queries")?);
        slice_mut(mean, m, "mean")?.copy_from_slice(&mu);
        if !var.is_null() {
            slice_mut(var, m, "var")?.copy_from_slice(&v);
        }
        Ok(())
    })
}

/// Fitted `(signal variance, length scale, noise variance)`.
///
/// # Safety
/// `gp` must come from `popinf_gp_fit`; `out` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn popinf_gp_hyperparameters(gp: *const PopinfGp, out: *mut f64) -> PopinfStatus {
    guard(|| {
        let gp = gp.as_ref().ok_or_else(|| null("gp"))?;
        let h = gp.model.hyper;
        slice_mut(out, 3, "out")?.copy_from_slice(&[h.signal_var, h.length_scale, h.noise_var]);
        Ok(())
    })
}

/// # Safety
/// `gp` must be null or come from `popinf_gp_fit`, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn popinf_gp_free(gp: *mut PopinfGp) {
    if !gp.is_null() {
        drop(Box::from_raw(gp));
    }
}

/// Loads a checkpoint written by `popinf train`.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn popinf_checkpoint_load(path: *const c_char, out: *mut *mut PopinfCheckpoint) -> PopinfStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(PopinfStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let inner = Checkpoint::load(Path::new(p))?;
        *out = Box::into_raw(Box::new(PopinfCheckpoint { inner }));
        Ok(())
    })
}

/// Target width: values per row in context targets and predictions.
///
/// # Safety
/// `ck` must be null or come from `popinf_checkpoint_load`.
#[no_mangle]
pub unsafe extern "C" fn popinf_checkpoint_target_dim(ck: *const PopinfCheckpoint) -> usize {
    ck.as_ref().map_or(0, |c| c.inner.target_dim())
}

/// Predicts at `n_query` temperatures from `n_context` context pairs.
/// `context_y` and `out` are row-major with `popinf_checkpoint_target_dim`
/// columns.
///
/// # Safety
/// `ck` must come from `popinf_checkpoint_load`; buffers must match the sizes.
#[no_mangle]
pub unsafe extern "C" fn popinf_checkpoint_predict(
    ck: *const PopinfCheckpoint,
    context_x: *const f64,
    context_y: *const f64,
    n_context: usize,
    queries: *const f64,
    n_query: usize,
    out: *mut f64,
) -> PopinfStatus {
    guard(|| {
        let ck = &ck.as_ref().ok_or_else(|| null("checkpoint"))?.inner;
        let d = ck.target_dim();
        let cx = slice(context_x, n_context, "context_x")?;
        let cy = Mat::from_vec(n_context, d, slice(context_y, n_context * d, "context_y")?.to_vec());
        let pred = ck.predict(cx, &cy, slice(queries, n_query, "queries")?)?;
        slice_mut(out, n_query * d, "out")?.copy_from_slice(&pred.data);
        Ok(())
    })
}

/// # Safety
/// `ck` must be null or come from `popinf_checkpoint_load`, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn popinf_checkpoint_free(ck: *mut PopinfCheckpoint) {
    if !ck.is_null() {
        drop(Box::from_raw(ck));
    }
}
