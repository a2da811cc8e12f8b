//! C ABI over `irr`.
//!
//! Datasets and fitted models cross the boundary as opaque handles owned by
//! the caller and released with the matching `*_free` function. Every
//! fallible call returns an [`IrrStatus`]; on failure the message is
//! available from [`irr_last_error`] on the same thread until the next
//! failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::str::FromStr;

use irr::dataset::ColumnRef;
use irr::solver::{Hyperparams, IrrSolution, Predictor, SolverConfig};
use irr::theory::{rademacher_bound, BoundInputs};
use irr::{CsvOptions, Dataset, IrrError};
use nalgebra::{DMatrix, DVector};

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Dimension = 5,
    Numerical = 6,
    Panic = 7,
}

/// Opaque dataset handle.
pub struct IrrDataset(Dataset);

/// Opaque fitted model handle.
pub struct IrrModel(IrrSolution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NUL removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &IrrError) -> IrrStatus {
    match e {
        IrrError::Io { .. } => IrrStatus::Io,
        IrrError::RaggedRow { .. }
        | IrrError::ParseCell { .. }
        | IrrError::UnknownColumn(_)
        | IrrError::Serde(_) => IrrStatus::Parse,
        IrrError::Dimension(_) => IrrStatus::Dimension,
        IrrError::NotPositiveDefinite(_) | IrrError::EigenNoConvergence(_) => IrrStatus::Numerical,
        IrrError::Experiment { source, .. } => status_of(source),
        _ => IrrStatus::InvalidArgument,
    }
}

struct Failure(IrrStatus, String);

impl From<IrrError> for Failure {
    fn from(e: IrrError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(IrrStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(IrrStatus::InvalidArgument, msg.into())
}

/// Run `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> IrrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => IrrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            IrrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failing call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn irr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn irr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a CSV file. `label_col` is a zero-based index or a header name;
/// empty cells and `?` mark missing features.
///
/// # Safety
/// `path` and `label_col` must be NUL-terminated strings and `out` a valid
/// pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn irr_dataset_load_csv(
    path: *const c_char,
    label_col: *const c_char,
    has_header: bool,
    out: *mut *mut IrrDataset,
) -> IrrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let Ok(label) = ColumnRef::from_str(str_arg(label_col, "label_col")?);
        let data = Dataset::load_csv(path, &CsvOptions::new(label, has_header))?;
        put(out, IrrDataset(data));
        Ok(())
    })
}

/// Build a dataset from row-major `x` (`n * d` values, NaN for a missing
/// entry) and labels `y` (`n` values).
///
/// # Safety
/// `x` must point to `n * d` readable doubles, `y` to `n`, and `out` to
/// writable storage.
#[no_mangle]
pub unsafe extern "C" fn irr_dataset_from_arrays(
    x: *const f64,
    y: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut IrrDataset,
) -> IrrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(d).ok_or_else(|| invalid("n * d overflows"))?;
        let xs = slice_arg(x, len, "x")?;
        let ys = slice_arg(y, n, "y")?;
        if ys.iter().any(|v| !v.is_finite()) {
            return Err(invalid("labels must be finite"));
        }
        if xs.iter().any(|v| v.is_infinite()) {
            return Err(invalid("features must be finite or NaN"));
        }
        let xm = DMatrix::from_row_slice(n, d, xs);
        let z = xm.map(|v| !v.is_nan());
        let xm = xm.map(|v| if v.is_nan() { 0.0 } else { v });
        let data = Dataset::new(xm, z, DVector::from_column_slice(ys))?;
        put(out, IrrDataset(data));
        Ok(())
    })
}

/// Min-max normalized copy of `data` (features and label in `[0, 1]`).
///
/// # Safety
/// `data` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn irr_dataset_normalize(
    data: *const IrrDataset,
    out: *mut *mut IrrDataset,
) -> IrrStatus {
    guard(|| {
        let data = data.as_ref().ok_or_else(|| null("data"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, IrrDataset(data.0.normalize()));
        Ok(())
    })
}

/// Number of samples, or 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irr_dataset_rows(data: *const IrrDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.n())
}

/// Number of features, or 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irr_dataset_cols(data: *const IrrDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.d())
}

/// Fraction of observed feature entries, or NaN for NULL.
///
/// # Safety
/// `data` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irr_dataset_fraction_observed(data: *const IrrDataset) -> f64 {
    data.as_ref()
        .map_or(f64::NAN, |d| d.0.stats().fraction_remaining)
}

/// # Safety
/// `data` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irr_dataset_free(data: *mut IrrDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Solve the relaxed problem on `train`. `tol <= 0` and `max_iter == 0`
/// select the defaults.
///
/// # Safety
/// `train` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn irr_solve(
    train: *const IrrDataset,
    lambda: f64,
    gamma: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut IrrModel,
) -> IrrStatus {
    guard(|| {
        let train = train.as_ref().ok_or_else(|| null("train"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg = SolverConfig::default();
        if tol > 0.0 {
            cfg.tol = tol;
        }
        if max_iter > 0 {
            cfg.max_outer = max_iter;
        }
        let hp = Hyperparams::new(lambda, gamma)?;
        let sol = irr::solver::solve_irr(&train.0, hp, &cfg)?;
        put(out, IrrModel(sol));
        Ok(())
    })
}

/// Write one prediction per sample of `data` into `out[0..len]`; `len`
/// must equal the number of samples.
///
/// # Safety
/// `model` and `data` must be live handles and `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn irr_model_predict(
    model: *const IrrModel,
    data: *const IrrDataset,
    out: *mut f64,
    len: usize,
) -> IrrStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let data = data.as_ref().ok_or_else(|| null("data"))?;
        if len != data.0.n() {
            return Err(Failure(
                IrrStatus::Dimension,
                format!("output has {len} slots for {} samples", data.0.n()),
            ));
        }
        let pred = model.0.predict_dataset(&data.0)?;
        if len > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, len).copy_from_slice(pred.as_slice());
        }
        Ok(())
    })
}

/// Relaxed objective `yᵀ(K + mλI)⁻¹y` at the solution, or NaN for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irr_model_objective(model: *const IrrModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.objective())
}

/// Whether the solve reached its gap tolerance; false for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irr_model_converged(model: *const IrrModel) -> bool {
    model.as_ref().is_some_and(|m| m.0.converged())
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn irr_model_save(model: *const IrrModel, path: *const c_char) -> IrrStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.0.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn irr_model_load(path: *const c_char, out: *mut *mut IrrModel) -> IrrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sol = IrrSolution::load(str_arg(path, "path")?)?;
        put(out, IrrModel(sol));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irr_model_free(model: *mut IrrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Rademacher complexity bound for labels bounded by `b` and features by `r`.
///
/// # Safety
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn irr_rademacher_bound(
    b: f64,
    r: f64,
    gamma: f64,
    lambda: f64,
    d: usize,
    m: usize,
    out: *mut f64,
) -> IrrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = rademacher_bound(&BoundInputs {
            b,
            r,
            gamma,
            lambda,
            d,
            m,
        })?;
        Ok(())
    })
}
