//! C interface to the `rht` toolkit.
//!
//! Every function returns an [`RhtStatus`]; results come back through out
//! pointers. Models and limit laws are opaque handles that the caller frees.
//! After a failure, [`rht_last_error`] describes it until the next call on the
//! same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rht::analytic::{limit_law, limit_transform, pgf_coc, pgf_cos, Caps, Discipline, LimitContext};
use rht::moments::moment_total;
use rht::scalar::{fmt_q, q_to_f64};
use rht::simulator::{simulate, SimConfig};
use rht::{Error, SystemModel};

/// Status codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhtStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Domain = 3,
    Cap = 4,
    Pole = 5,
    Internal = 6,
    Io = 7,
    Panic = 8,
    BufferTooSmall = 9,
}

/// `0` for cancel-on-completion, `1` for cancel-on-start.
pub type RhtDiscipline = u32;

pub struct RhtModel {
    model: SystemModel,
}

pub struct RhtLimitLaw {
    forest: bool,
    rows: usize,
    cols: usize,
    coeffs: Vec<f64>,
    exact: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RhtStatus {
    match e {
        Error::Validation(_) => RhtStatus::Validation,
        Error::Domain(_) => RhtStatus::Domain,
        Error::Cap(_) => RhtStatus::Cap,
        Error::Pole(_) => RhtStatus::Pole,
        Error::Internal(_) => RhtStatus::Internal,
        Error::Io(_) => RhtStatus::Io,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (RhtStatus, String)>) -> RhtStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RhtStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(&m);
            s
        }
        Err(_) => {
            set_error("internal panic");
            RhtStatus::Panic
        }
    }
}

fn lift<T>(r: rht::Result<T>) -> Result<T, (RhtStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (RhtStatus, String) {
    (RhtStatus::NullPointer, "null pointer argument".into())
}

unsafe fn model_ref<'a>(m: *const RhtModel) -> Result<&'a RhtModel, (RhtStatus, String)> {
    m.as_ref().ok_or_else(null)
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], (RhtStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn discipline(d: RhtDiscipline) -> Result<Discipline, (RhtStatus, String)> {
    match d {
        0 => Ok(Discipline::Coc),
        1 => Ok(Discipline::Cos),
        _ => Err((RhtStatus::Validation, format!("unknown discipline {d}"))),
    }
}

/// Message for the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rht_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rht_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses a JSON model description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rht_model_from_json(json: *const c_char, out: *mut *mut RhtModel) -> RhtStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return Err(null());
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| (RhtStatus::Validation, "model text is not UTF-8".into()))?;
        let model = lift(SystemModel::from_json(text))?;
        *out = Box::into_raw(Box::new(RhtModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`rht_model_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rht_model_free(model: *mut RhtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rht_model_num_types(model: *const RhtModel, out: *mut usize) -> RhtStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(null)? = m.model.n_types();
        Ok(())
    })
}

/// Critical rate `λ*` and depth `K`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rht_criticality(model: *const RhtModel, lambda_star: *mut f64, depth_k: *mut usize) -> RhtStatus {
    guard(|| {
        let m = model_ref(model)?;
        let ctx = lift(LimitContext::new(&m.model))?;
        *lambda_star.as_mut().ok_or_else(null)? = q_to_f64(&ctx.report.lambda_star);
        *depth_k.as_mut().ok_or_else(null)? = ctx.k();
        Ok(())
    })
}

/// Builds the heavy-traffic limit law of the model.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rht_limit_law(model: *const RhtModel, out: *mut *mut RhtLimitLaw) -> RhtStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null());
        }
        let ctx = lift(LimitContext::new(&m.model))?;
        let law = limit_law(&ctx);
        let rows = law.coeffs.len();
        let cols = m.model.n_types();
        let flat: Vec<_> = law.coeffs.iter().flatten().collect();
        *out = Box::into_raw(Box::new(RhtLimitLaw {
            forest: law.forest,
            rows,
            cols,
            coeffs: flat.iter().map(|q| q_to_f64(q)).collect(),
            exact: flat.iter().map(|q| CString::new(fmt_q(q)).expect("no NUL")).collect(),
        }));
        Ok(())
    })
}

/// # Safety
/// `law` must come from [`rht_limit_law`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rht_limit_law_free(law: *mut RhtLimitLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Number of components (rows) and job types (columns).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rht_limit_law_shape(law: *const RhtLimitLaw, rows: *mut usize, cols: *mut usize) -> RhtStatus {
    guard(|| {
        let l = law.as_ref().ok_or_else(null)?;
        *rows.as_mut().ok_or_else(null)? = l.rows;
        *cols.as_mut().ok_or_else(null)? = l.cols;
        Ok(())
    })
}

/// Whether the component graph is a forest. The coefficient matrix describes
/// the limit only when it is.
///
/// # Safety
/// `law` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rht_limit_law_is_forest(law: *const RhtLimitLaw, out: *mut bool) -> RhtStatus {
    guard(|| {
        let l = law.as_ref().ok_or_else(null)?;
        *out.as_mut().ok_or_else(null)? = l.forest;
        Ok(())
    })
}

/// Copies the row-major coefficient matrix into `buf` of length `len`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rht_limit_law_coefficients(law: *const RhtLimitLaw, buf: *mut f64, len: usize) -> RhtStatus {
    guard(|| {
        let l = law.as_ref().ok_or_else(null)?;
        if len < l.coeffs.len() {
            return Err((RhtStatus::BufferTooSmall, format!("need {} entries", l.coeffs.len())));
        }
        if buf.is_null() {
            return Err(null());
        }
        std::slice::from_raw_parts_mut(buf, l.coeffs.len()).copy_from_slice(&l.coeffs);
        Ok(())
    })
}

/// Exact coefficient as a rational string owned by the law handle.
///
/// # Safety
/// `law` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rht_limit_law_coefficient_exact(
    law: *const RhtLimitLaw,
    row: usize,
    col: usize,
    out: *mut *const c_char,
) -> RhtStatus {
    guard(|| {
        let l = law.as_ref().ok_or_else(null)?;
        if row >= l.rows || col >= l.cols {
            return Err((RhtStatus::Validation, format!("index ({row}, {col}) out of range")));
        }
        *out.as_mut().ok_or_else(null)? = l.exact[row * l.cols + col].as_ptr();
        Ok(())
    })
}

/// Stationary PGF of the queue-length vector at `z`.
///
/// # Safety
/// `z` must point to `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rht_pgf(
    model: *const RhtModel,
    discipline_code: RhtDiscipline,
    z: *const f64,
    len: usize,
    out: *mut f64,
) -> RhtStatus {
    guard(|| {
        let m = model_ref(model)?;
        let z = slice(z, len)?;
        let caps = Caps::default();
        let v = match discipline(discipline_code)? {
            Discipline::Coc => lift(pgf_coc::<f64>(&m.model, z, &caps))?,
            Discipline::Cos => lift(pgf_cos::<f64>(&m.model, z, &caps))?,
        };
        *out.as_mut().ok_or_else(null)? = v;
        Ok(())
    })
}

/// Laplace transform of the limit law at `t`. Uses the mixture form when the
/// component graph is not a forest.
///
/// # Safety
/// `t` must point to `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rht_limiting_laplace(model: *const RhtModel, t: *const f64, len: usize, out: *mut f64) -> RhtStatus {
    guard(|| {
        let m = model_ref(model)?;
        let t = slice(t, len)?;
        let ctx = lift(LimitContext::new(&m.model))?;
        *out.as_mut().ok_or_else(null)? = lift(limit_transform::<f64>(&ctx, t))?;
        Ok(())
    })
}

/// `E[Qⁿ]` of the total number of jobs (c.o.c.) or waiting jobs (c.o.s.).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rht_moment_total(
    model: *const RhtModel,
    discipline_code: RhtDiscipline,
    n: u32,
    out: *mut f64,
) -> RhtStatus {
    guard(|| {
        let m = model_ref(model)?;
        let v = lift(moment_total(&m.model, n, discipline(discipline_code)?, &Caps::default()))?;
        *out.as_mut().ok_or_else(null)? = q_to_f64(&v);
        Ok(())
    })
}

/// Simulates `events` measured events and writes per-type time averages.
///
/// # Safety
/// `means` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rht_simulate_means(
    model: *const RhtModel,
    discipline_code: RhtDiscipline,
    events: u64,
    seed: u64,
    means: *mut f64,
    len: usize,
) -> RhtStatus {
    guard(|| {
        let m = model_ref(model)?;
        let n = m.model.n_types();
        if len < n {
            return Err((RhtStatus::BufferTooSmall, format!("need {n} entries")));
        }
        if means.is_null() {
            return Err(null());
        }
        let est = lift(simulate(&m.model, &SimConfig::new(discipline(discipline_code)?, events), seed))?;
        std::slice::from_raw_parts_mut(means, n).copy_from_slice(&est.means);
        Ok(())
    })
}
