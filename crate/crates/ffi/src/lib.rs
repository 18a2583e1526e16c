//! C ABI over the twinbeam toolkit.
//!
//! Objects are opaque heap handles released with the matching `*_free`.
//! Every fallible call returns a [`TbStatus`]; the message of the last
//! failure on the calling thread is available from
//! [`tb_last_error_message`].

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use twinbeam::detmodel::{self, DetectorModel, Precision, TransferMatrix};
use twinbeam::dists::{JointDistribution, Kind};
use twinbeam::emrec::{self, EmOptions};
use twinbeam::noisefit::{self, FitParams, Moments};
use twinbeam::simkit::{self, Arm, SimConfig};
use twinbeam::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Dimension = 3,
    PrecisionExhausted = 4,
    BudgetExceeded = 5,
    ModelMismatch = 6,
    Support = 7,
    Infeasible = 8,
    Empty = 9,
    Parse = 10,
    Io = 11,
    Degenerate = 12,
    Panic = 13,
}

impl From<&Error> for TbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Degenerate(_) => TbStatus::Degenerate,
            Error::Dimension(_) => TbStatus::Dimension,
            Error::InvalidParameter(_) => TbStatus::InvalidParameter,
            Error::PrecisionExhausted { .. } => TbStatus::PrecisionExhausted,
            Error::BudgetExceeded { .. } => TbStatus::BudgetExceeded,
            Error::ModelMismatch { .. } => TbStatus::ModelMismatch,
            Error::Support(_) => TbStatus::Support,
            Error::Infeasible(_) => TbStatus::Infeasible,
            Error::Empty(_) => TbStatus::Empty,
            Error::Parse(_) => TbStatus::Parse,
            Error::Io(_) => TbStatus::Io,
        }
    }
}

/// Opaque transfer matrix.
pub struct TbMatrix(TransferMatrix);

/// Opaque joint distribution.
pub struct TbJoint(JointDistribution);

/// Detection parameters of one arm.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TbArm {
    pub transmissivity: f64,
    pub pixels: usize,
    pub efficiency: f64,
    pub dark_prob: f64,
}

/// Multimode noise-model parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TbFitParams {
    pub m_p: f64,
    pub b_p: f64,
    pub m_s: f64,
    pub b_s: f64,
    pub m_i: f64,
    pub b_i: f64,
    pub tau_s: f64,
    pub tau_i: f64,
    pub d_s: f64,
    pub d_i: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TbStats {
    pub mean_s: f64,
    pub mean_i: f64,
    pub fano_s: f64,
    pub fano_i: f64,
    pub correlation: f64,
    pub noise_reduction: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            TbStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            TbStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            TbStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn precision(digits: u32) -> Precision {
    if digits == 0 {
        Precision::Auto
    } else {
        Precision::Digits(digits)
    }
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Binomial loss matrix.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_matrix_bernoulli(transmissivity: f64, n_max: usize, out: *mut *mut TbMatrix) -> TbStatus {
    guard(|| store(out, TbMatrix(detmodel::bernoulli_matrix(transmissivity, n_max)?)))
}

/// Infinite-pixel matrix; `c_max` of zero selects the default row count.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_matrix_infinite(
    tau: f64,
    dark_mean: f64,
    n_max: usize,
    c_max: usize,
    out: *mut *mut TbMatrix,
) -> TbStatus {
    let c = (c_max > 0).then_some(c_max);
    guard(|| store(out, TbMatrix(detmodel::infinite_pixel_matrix(tau, dark_mean, n_max, c)?)))
}

/// Exact finite-pixel matrix; `digits` of zero selects the precision
/// automatically.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_matrix_finite(
    pixels: usize,
    tau: f64,
    dark_prob: f64,
    n_max: usize,
    digits: u32,
    out: *mut *mut TbMatrix,
) -> TbStatus {
    guard(|| {
        let m = detmodel::finite_pixel_matrix(pixels, tau, dark_prob, n_max, precision(digits))?;
        store(out, TbMatrix(m))
    })
}

/// `outer * inner`.
///
/// # Safety
/// Handles must be live; `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_matrix_compose(
    outer: *const TbMatrix,
    inner: *const TbMatrix,
    out: *mut *mut TbMatrix,
) -> TbStatus {
    guard(|| {
        let m = detmodel::compose(&deref(outer, "outer")?.0, &deref(inner, "inner")?.0)?;
        store(out, TbMatrix(m))
    })
}

/// # Safety
/// `m` must be a live handle; the out pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tb_matrix_dims(m: *const TbMatrix, c_max: *mut usize, n_max: *mut usize) -> TbStatus {
    guard(|| {
        let m = &deref(m, "matrix")?.0;
        if !c_max.is_null() {
            *c_max = m.c_max();
        }
        if !n_max.is_null() {
            *n_max = m.n_max();
        }
        Ok(())
    })
}

/// Entry `G(c, n)`, zero outside the stored range or for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_matrix_get(m: *const TbMatrix, c: usize, n: usize) -> f64 {
    m.as_ref().map_or(0.0, |m| m.0.get(c, n))
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_matrix_max_column_defect(m: *const TbMatrix) -> f64 {
    m.as_ref().map_or(f64::NAN, |m| m.0.max_column_defect())
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_matrix_free(m: *mut TbMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Joint distribution from a row-major `rows x cols` array; `click` selects
/// click counts rather than photon numbers.
///
/// # Safety
/// `values` must be valid for `rows * cols` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn tb_joint_new(
    values: *const f64,
    rows: usize,
    cols: usize,
    click: bool,
    out: *mut *mut TbJoint,
) -> TbStatus {
    guard(|| {
        if values.is_null() {
            return Err(Fail::Null("values"));
        }
        let data = std::slice::from_raw_parts(values, rows * cols).to_vec();
        let arr = ndarray::Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let kind = if click { Kind::Click } else { Kind::Photon };
        store(out, TbJoint(JointDistribution::new(arr, kind)?))
    })
}

/// # Safety
/// `p` must be a live handle; the out pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn tb_joint_dims(p: *const TbJoint, rows: *mut usize, cols: *mut usize) -> TbStatus {
    guard(|| {
        let p = &deref(p, "joint")?.0;
        if !rows.is_null() {
            *rows = p.n_max_s() + 1;
        }
        if !cols.is_null() {
            *cols = p.n_max_i() + 1;
        }
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_joint_get(p: *const TbJoint, s: usize, i: usize) -> f64 {
    p.as_ref().map_or(0.0, |p| p.0.get(s, i))
}

/// Means, Fano factors, correlation and noise-reduction factor.
///
/// # Safety
/// `p` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tb_joint_stats(p: *const TbJoint, out: *mut TbStats) -> TbStatus {
    guard(|| {
        let m = Moments::of(&deref(p, "joint")?.0)?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = TbStats {
            mean_s: m.mean_s,
            mean_i: m.mean_i,
            fano_s: m.fano_s(),
            fano_i: m.fano_i(),
            correlation: m.correlation(),
            noise_reduction: m.noise_reduction(),
        };
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_joint_free(p: *mut TbJoint) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Click distribution `G_S p G_I^T`.
///
/// # Safety
/// Handles must be live; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tb_forward(
    p: *const TbJoint,
    g_s: *const TbMatrix,
    g_i: *const TbMatrix,
    out: *mut *mut TbJoint,
) -> TbStatus {
    guard(|| {
        let f = simkit::forward(&deref(p, "p")?.0, &deref(g_s, "g_s")?.0, &deref(g_i, "g_i")?.0)?;
        store(out, TbJoint(f))
    })
}

/// EM reconstruction on the photon grid `0..=n_max_s` x `0..=n_max_i`
/// from a uniform start, without plateau stopping.
///
/// # Safety
/// Handles must be live; `out` must be valid for one write and
/// `iterations` valid or null.
#[no_mangle]
pub unsafe extern "C" fn tb_reconstruct(
    f: *const TbJoint,
    g_s: *const TbMatrix,
    g_i: *const TbMatrix,
    n_max_s: usize,
    n_max_i: usize,
    max_iterations: usize,
    out: *mut *mut TbJoint,
    iterations: *mut usize,
) -> TbStatus {
    guard(|| {
        let opts = EmOptions { max_iterations, plateau_window: 0, ..Default::default() };
        let r = emrec::reconstruct(
            &deref(f, "f")?.0,
            &deref(g_s, "g_s")?.0,
            &deref(g_i, "g_i")?.0,
            n_max_s,
            n_max_i,
            &opts,
        )?;
        if !iterations.is_null() {
            *iterations = r.iterations_run;
        }
        store(out, TbJoint(r.p_rec))
    })
}

fn fit_params(p: &TbFitParams) -> FitParams {
    FitParams {
        m_p: p.m_p,
        b_p: p.b_p,
        m_s: p.m_s,
        b_s: p.b_s,
        m_i: p.m_i,
        b_i: p.b_i,
        tau_s: p.tau_s,
        tau_i: p.tau_i,
        d_s: p.d_s,
        d_i: p.d_i,
    }
}

/// Photon-number distribution of the multimode model.
///
/// # Safety
/// `params` must be valid for one read and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn tb_model_distribution(
    params: *const TbFitParams,
    n_max_s: usize,
    n_max_i: usize,
    out: *mut *mut TbJoint,
) -> TbStatus {
    guard(|| {
        let fp = fit_params(deref(params, "params")?);
        store(out, TbJoint(noisefit::model_distribution(&fp, n_max_s, n_max_i)?))
    })
}

/// Pixel-level Monte Carlo with uniform pixel assignment and per-pixel dark
/// counts; the result is the normalized click histogram.
///
/// # Safety
/// Pointers must be valid; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tb_simulate(
    p: *const TbJoint,
    signal: *const TbArm,
    idler: *const TbArm,
    trials: u64,
    seed: u64,
    out: *mut *mut TbJoint,
) -> TbStatus {
    guard(|| {
        let arm = |a: &TbArm| -> Result<Arm, Error> {
            Ok(Arm::uniform(DetectorModel::new(a.transmissivity, a.pixels, a.efficiency, a.dark_prob)?))
        };
        let h = simkit::simulate_clicks(
            &deref(p, "p")?.0,
            &arm(deref(signal, "signal")?)?,
            &arm(deref(idler, "idler")?)?,
            &SimConfig::new(trials, seed),
        )?;
        store(out, TbJoint(h.to_distribution()))
    })
}
