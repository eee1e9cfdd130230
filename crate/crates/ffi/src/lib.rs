//! C interface to `topomp`.
//!
//! Every fallible function returns a [`TopompStatus`]; on failure the
//! message is available from [`topomp_last_error_message`] on the same
//! thread. Complexes are opaque handles released with
//! [`topomp_complex_free`]; strings returned by the library are released
//! with [`topomp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use topomp::homology::betti_numbers;
use topomp::io::{complex_from_json, complex_to_json, output_to_json};
use topomp::model::{Model, ModelConfig};
use topomp::neighborhoods::MatrixRequest;
use topomp::{Complex, Error, FeatureStore};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopompStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// The input violates a format or domain invariant.
    InvalidData = 3,
    /// A configuration or argument is malformed.
    InvalidArgument = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// A validated complex with the features read alongside it.
pub struct TopompComplex {
    complex: Complex,
    features: FeatureStore,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

struct Failure(TopompStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_data_error() {
            TopompStatus::InvalidData
        } else {
            TopompStatus::InvalidArgument
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TopompStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TopompStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TopompStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TopompStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or a valid nul-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TopompStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is null or a handle from [`topomp_complex_from_json`].
unsafe fn handle<'a>(p: *const TopompComplex) -> Result<&'a TopompComplex, Failure> {
    p.as_ref().ok_or_else(|| null("complex"))
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure(TopompStatus::InvalidData, "output contains nul".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn topomp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn topomp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a JSON complex document and stores a new handle in `*out`.
///
/// # Safety
/// `json` is a nul-terminated string and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn topomp_complex_from_json(json: *const c_char, out: *mut *mut TopompComplex) -> TopompStatus {
    guard(|| {
        let json = text(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (complex, features) = complex_from_json(json)?;
        *out = Box::into_raw(Box::new(TopompComplex { complex, features }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `c` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn topomp_complex_free(c: *mut TopompComplex) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// `c` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn topomp_complex_max_rank(c: *const TopompComplex, out: *mut usize) -> TopompStatus {
    guard(|| {
        let c = handle(c)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = c.complex.max_rank();
        Ok(())
    })
}

/// Number of cells of `rank`; zero above the top rank.
///
/// # Safety
/// `c` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn topomp_complex_num_cells(c: *const TopompComplex, rank: usize, out: *mut usize) -> TopompStatus {
    guard(|| {
        let c = handle(c)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = c.complex.num_cells(rank);
        Ok(())
    })
}

/// Writes the Betti numbers into `out[..cap]` and their count into `*len`.
/// Returns `BufferTooSmall` (with `*len` set) when `cap` is too small.
///
/// # Safety
/// `c` is a live handle, `len` is writable and `out` has room for `cap`
/// values.
#[no_mangle]
pub unsafe extern "C" fn topomp_complex_betti(
    c: *const TopompComplex,
    out: *mut usize,
    cap: usize,
    len: *mut usize,
) -> TopompStatus {
    guard(|| {
        let c = handle(c)?;
        let len = len.as_mut().ok_or_else(|| null("len"))?;
        let betti = betti_numbers(&c.complex)?;
        *len = betti.len();
        if cap < betti.len() {
            return Err(Failure(
                TopompStatus::BufferTooSmall,
                format!("need room for {} values", betti.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(betti.as_ptr(), out, betti.len());
        Ok(())
    })
}

/// Canonical JSON for the complex and its features.
///
/// # Safety
/// `c` is a live handle and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn topomp_complex_to_json(c: *const TopompComplex, out: *mut *mut c_char) -> TopompStatus {
    guard(|| {
        let c = handle(c)?;
        out_string(complex_to_json(&c.complex, &c.features)?, out)
    })
}

/// Shape of a named neighborhood matrix (`B1`, `Lup0`, `hodge:1`, ...).
///
/// # Safety
/// `c` is a live handle, `name` is a nul-terminated string, `rows` and
/// `cols` are writable.
#[no_mangle]
pub unsafe extern "C" fn topomp_matrix_shape(
    c: *const TopompComplex,
    name: *const c_char,
    rows: *mut usize,
    cols: *mut usize,
) -> TopompStatus {
    guard(|| {
        let c = handle(c)?;
        let req: MatrixRequest = text(name, "name")?.parse()?;
        let (r, k) = req.build(&c.complex)?.shape();
        *rows.as_mut().ok_or_else(|| null("rows"))? = r;
        *cols.as_mut().ok_or_else(|| null("cols"))? = k;
        Ok(())
    })
}

/// Writes a named neighborhood matrix densely in row-major order.
///
/// # Safety
/// `c` is a live handle, `name` is a nul-terminated string and `out` has
/// room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn topomp_matrix_dense(
    c: *const TopompComplex,
    name: *const c_char,
    out: *mut f64,
    cap: usize,
) -> TopompStatus {
    guard(|| {
        let c = handle(c)?;
        let req: MatrixRequest = text(name, "name")?.parse()?;
        let m = req.build(&c.complex)?.matrix;
        let dense: Vec<f64> = m.to_dense().into_iter().map(|v| v as f64).collect();
        if cap < dense.len() {
            return Err(Failure(
                TopompStatus::BufferTooSmall,
                format!("need room for {} values", dense.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(dense.as_ptr(), out, dense.len());
        Ok(())
    })
}

/// Initializes the model described by `model_json` with `seed`, runs it
/// on the complex's features and returns the output document, the same
/// bytes `topomp forward` writes.
///
/// # Safety
/// `model_json` is a nul-terminated string, `c` is a live handle and `out`
/// is writable.
#[no_mangle]
pub unsafe extern "C" fn topomp_forward(
    model_json: *const c_char,
    c: *const TopompComplex,
    seed: u64,
    out: *mut *mut c_char,
) -> TopompStatus {
    guard(|| {
        let config = ModelConfig::from_json(text(model_json, "model_json")?)?;
        let c = handle(c)?;
        let model = Model::init(config, &c.complex, &c.features.dims(), seed)?;
        let result = model.forward(&c.complex, &c.features)?;
        out_string(output_to_json(&result)?, out)
    })
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` is null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn topomp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
