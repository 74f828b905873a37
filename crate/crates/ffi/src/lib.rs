//! C ABI over `mdimlab`.
//!
//! Every fallible call returns an [`MdimStatus`] and writes results through
//! out-pointers. On failure a message is kept per thread and can be read with
//! [`mdim_last_error`]. Handles are opaque and must be released with their
//! `_free` function; strings returned by the library are released with
//! [`mdim_string_free`]. Panics never cross the boundary: they are caught and
//! reported as `MDIM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use mdimlab::complexity::{max_separated, CloudSource, SampleCloud};
use mdimlab::geometry::{dyn_distance, Point};
use mdimlab::horseshoe::{build_chained, build_pseudo_horseshoe, AnyHorseshoe, HorseshoeParams};
use mdimlab::markov_check::verify_stage;
use mdimlab::systems::SystemHandle;
use mdimlab::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    Dimension = 3,
    Domain = 4,
    Escaped = 5,
    Infeasible = 6,
    Schedule = 7,
    Format = 8,
    Utf8 = 9,
    Panic = 10,
}

impl From<&Error> for MdimStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension { .. } => MdimStatus::Dimension,
            Error::Domain => MdimStatus::Domain,
            Error::OrbitEscaped(_) | Error::EvaluationEscaped => MdimStatus::Escaped,
            Error::InvalidParams(_) | Error::NotStrictHorizontal(_) => MdimStatus::InvalidParams,
            Error::InfeasibleGrid(_) | Error::InfeasiblePacking(_) => MdimStatus::Infeasible,
            Error::Schedule(_) => MdimStatus::Schedule,
            Error::Format(_) => MdimStatus::Format,
        }
    }
}

/// A dynamical system.
pub struct MdimSystem {
    inner: SystemHandle,
}

/// A pseudo-horseshoe or chained horseshoe.
pub struct MdimHorseshoe {
    doc: AnyHorseshoe,
    system: SystemHandle,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(MdimStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(MdimStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MdimStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MdimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MdimStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MdimStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn system_ref<'a>(p: *const MdimSystem) -> Result<&'a SystemHandle, Fail> {
    unsafe { p.as_ref() }.map(|s| &s.inner).ok_or_else(|| null("system"))
}

unsafe fn horseshoe_ref<'a>(p: *const MdimHorseshoe) -> Result<&'a MdimHorseshoe, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| null("horseshoe"))
}

fn point(x: &[f64]) -> Result<Point, Fail> {
    Ok(Point::new(x.iter().copied())?)
}

fn give_system(sys: SystemHandle, outp: *mut *mut MdimSystem) -> Result<(), Fail> {
    let slot = unsafe { out(outp, "out")? };
    *slot = Box::into_raw(Box::new(MdimSystem { inner: sys }));
    Ok(())
}

fn give_string(s: String, outp: *mut *mut c_char) -> Result<(), Fail> {
    let slot = unsafe { out(outp, "out")? };
    *slot = CString::new(s)
        .map_err(|_| Fail(MdimStatus::Format, "string holds a nul byte".into()))?
        .into_raw();
    Ok(())
}

fn system_of(doc: &AnyHorseshoe) -> SystemHandle {
    match doc {
        AnyHorseshoe::Pseudo(h) => SystemHandle::horseshoe(Arc::new(h.clone())),
        AnyHorseshoe::Chained(h) => SystemHandle::chained(Arc::new(h.clone())),
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mdim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn mdim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mdim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Doubling map `x -> 2x mod 1` on the `n`-torus.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdim_system_doubling(n: usize, out: *mut *mut MdimSystem) -> MdimStatus {
    guard(|| give_system(SystemHandle::doubling(n)?, out))
}

/// Arnold cat map on the 2-torus.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdim_system_cat_map(out: *mut *mut MdimSystem) -> MdimStatus {
    guard(|| give_system(SystemHandle::cat_map(), out))
}

/// Identity on the `n`-torus.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdim_system_identity_torus(n: usize, out: *mut *mut MdimSystem) -> MdimStatus {
    guard(|| give_system(SystemHandle::identity_torus(n)?, out))
}

/// Rotation of the `n`-torus by `angles[0..n]`.
///
/// # Safety
/// `angles` must point to `n` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdim_system_rotation(angles: *const f64, n: usize, out: *mut *mut MdimSystem) -> MdimStatus {
    guard(|| {
        let a = unsafe { slice(angles, n, "angles")? };
        give_system(SystemHandle::rotation(a.to_vec())?, out)
    })
}

/// Releases a system. Null is ignored.
///
/// # Safety
/// `sys` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mdim_system_free(sys: *mut MdimSystem) {
    if !sys.is_null() {
        drop(unsafe { Box::from_raw(sys) });
    }
}

/// Ambient dimension of a system, 0 for null.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mdim_system_dim(sys: *const MdimSystem) -> usize {
    unsafe { sys.as_ref() }.map_or(0, |s| s.inner.dim())
}

/// One application of the map: `y = f(x)`, both of length `dim`.
///
/// # Safety
/// `x` and `y` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mdim_system_apply(
    sys: *const MdimSystem,
    x: *const f64,
    y: *mut f64,
    dim: usize,
) -> MdimStatus {
    guard(|| {
        let s = unsafe { system_ref(sys)? };
        let x = unsafe { slice(x, dim, "x")? };
        if y.is_null() {
            return Err(null("y"));
        }
        let image = s.evaluate(&point(x)?)?;
        unsafe { std::slice::from_raw_parts_mut(y, dim) }.copy_from_slice(image.coords());
        Ok(())
    })
}

/// Dynamical distance `d_k(x, y)`: the largest distance along the first `k`
/// iterates.
///
/// # Safety
/// `x` and `y` must point to `dim` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdim_dyn_distance(
    sys: *const MdimSystem,
    k: usize,
    x: *const f64,
    y: *const f64,
    dim: usize,
    out: *mut f64,
) -> MdimStatus {
    guard(|| {
        let s = unsafe { system_ref(sys)? };
        let x = point(unsafe { slice(x, dim, "x")? })?;
        let y = point(unsafe { slice(y, dim, "y")? })?;
        *unsafe { self::out(out, "out")? } = dyn_distance(s, k, &x, &y)?;
        Ok(())
    })
}

/// Size of a greedy maximal `(m, eps)`-separated subset of the `res^dim`
/// lattice cloud.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdim_separated_count_lattice(
    sys: *const MdimSystem,
    res: usize,
    m: usize,
    eps: f64,
    out: *mut u64,
) -> MdimStatus {
    guard(|| {
        let s = unsafe { system_ref(sys)? };
        let cloud = SampleCloud::lattice(s, res, m.max(1))?;
        *unsafe { self::out(out, "out")? } = max_separated(&cloud, m, eps)?.len() as u64;
        Ok(())
    })
}

/// Size of a greedy maximal `(m, eps)`-separated subset of `count` points
/// stored row-major with `dim` coordinates each.
///
/// # Safety
/// `points` must point to `count * dim` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdim_separated_count_points(
    sys: *const MdimSystem,
    points: *const f64,
    count: usize,
    dim: usize,
    m: usize,
    eps: f64,
    out: *mut u64,
) -> MdimStatus {
    guard(|| {
        let s = unsafe { system_ref(sys)? };
        if dim == 0 {
            return Err(Fail(MdimStatus::InvalidParams, "dim must be >= 1".into()));
        }
        let total = count
            .checked_mul(dim)
            .ok_or_else(|| Fail(MdimStatus::InvalidParams, "count * dim overflows".into()))?;
        let flat = unsafe { slice(points, total, "points")? };
        let pts = flat.chunks_exact(dim).map(point).collect::<Result<Vec<_>, _>>()?;
        let cloud = SampleCloud::from_points(s, pts, m.max(1), CloudSource::Explicit)?;
        *unsafe { self::out(out, "out")? } = max_separated(&cloud, m, eps)?.len() as u64;
        Ok(())
    })
}

/// Builds a pseudo-horseshoe (`period <= 1`) or a chained horseshoe with
/// chart bound `c_bound` and chart seed `seed`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdim_horseshoe_build(
    n: usize,
    delta: f64,
    k: usize,
    period: usize,
    c_bound: f64,
    seed: u64,
    out: *mut *mut MdimHorseshoe,
) -> MdimStatus {
    guard(|| {
        let params = HorseshoeParams::new(n, delta, k)?;
        let doc = if period <= 1 {
            AnyHorseshoe::Pseudo(build_pseudo_horseshoe(&params)?)
        } else {
            AnyHorseshoe::Chained(build_chained(&params, period, c_bound, seed)?)
        };
        let system = system_of(&doc);
        *unsafe { self::out(out, "out")? } = Box::into_raw(Box::new(MdimHorseshoe { doc, system }));
        Ok(())
    })
}

/// Parses a horseshoe JSON document.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdim_horseshoe_from_json(json: *const c_char, out: *mut *mut MdimHorseshoe) -> MdimStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| Fail(MdimStatus::Utf8, e.to_string()))?;
        let doc = AnyHorseshoe::from_json(text)?;
        let system = system_of(&doc);
        *unsafe { self::out(out, "out")? } = Box::into_raw(Box::new(MdimHorseshoe { doc, system }));
        Ok(())
    })
}

/// Serializes a horseshoe; free the result with [`mdim_string_free`].
///
/// # Safety
/// `h` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdim_horseshoe_to_json(h: *const MdimHorseshoe, out: *mut *mut c_char) -> MdimStatus {
    guard(|| give_string(unsafe { horseshoe_ref(h)? }.doc.to_json(), out))
}

/// Number of rectangles `N_k`, 0 for null.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mdim_horseshoe_n_symbols(h: *const MdimHorseshoe) -> usize {
    unsafe { h.as_ref() }.map_or(0, |h| h.doc.stages()[0].n_symbols())
}

/// Number of stages: 1 for a pseudo-horseshoe, the period for a chained one.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mdim_horseshoe_n_stages(h: *const MdimHorseshoe) -> usize {
    unsafe { h.as_ref() }.map_or(0, |h| h.doc.stages().len())
}

/// New system handle evaluating the horseshoe map; free it separately.
///
/// # Safety
/// `h` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdim_horseshoe_system(h: *const MdimHorseshoe, out: *mut *mut MdimSystem) -> MdimStatus {
    guard(|| give_system(unsafe { horseshoe_ref(h)? }.system.clone(), out))
}

/// Checks every Markov piece exactly and, when `resolution > 0`, on a
/// sample lattice. Writes the number of failing pieces to `failures`.
///
/// # Safety
/// `h` must be a live handle; `failures` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mdim_horseshoe_verify(
    h: *const MdimHorseshoe,
    resolution: usize,
    failures: *mut u64,
) -> MdimStatus {
    guard(|| {
        let h = unsafe { horseshoe_ref(h)? };
        let mut bad = 0u64;
        for (s, stage) in h.doc.stages().iter().enumerate() {
            let res = (resolution > 0).then_some(resolution);
            bad += verify_stage(stage, s, res, None)?
                .iter()
                .filter(|r| !r.passed())
                .count() as u64;
            bad += stage.violations().len() as u64;
        }
        *unsafe { out(failures, "failures")? } = bad;
        Ok(())
    })
}

/// Releases a horseshoe. Null is ignored.
///
/// # Safety
/// `h` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mdim_horseshoe_free(h: *mut MdimHorseshoe) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}
