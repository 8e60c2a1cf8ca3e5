//! C ABI over the `bqci` library.
//!
//! Every entry point returns a [`BqciStatus`]. On failure the message is kept in a
//! thread-local slot readable with [`bqci_last_error`]. Handles are opaque and must be
//! released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use bqci::calculus_ops::{inverse_divergence, leray_project, mollify};
use bqci::diagnostics_io::{run_pipeline, RunOptions};
use bqci::mikado::MikadoFamily;
use bqci::params::{build_schedule, ParamSchedule, RunConfig};
use bqci::torus_fields::{transform_forward, Field, Grid, Rank};
use bqci::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BqciStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidParameter = 3,
    Config = 4,
    GridMismatch = 5,
    RankMismatch = 6,
    NonzeroMean = 7,
    UnresolvedMollifier = 8,
    TimeOutOfRange = 9,
    PlacementFailure = 10,
    Admissibility = 11,
    EnergyGap = 12,
    BlowUp = 13,
    Numerical = 14,
    Format = 15,
    Io = 16,
    Json = 17,
    /// a run finished but at least one check failed
    CheckFailed = 18,
    Panic = 99,
}

impl From<&Error> for BqciStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter { .. } => BqciStatus::InvalidParameter,
            Error::Config(_) => BqciStatus::Config,
            Error::GridMismatch(_) => BqciStatus::GridMismatch,
            Error::RankMismatch { .. } => BqciStatus::RankMismatch,
            Error::NonzeroMean { .. } => BqciStatus::NonzeroMean,
            Error::UnresolvedMollifier { .. } => BqciStatus::UnresolvedMollifier,
            Error::TimeOutOfRange { .. } => BqciStatus::TimeOutOfRange,
            Error::PlacementFailure { .. } => BqciStatus::PlacementFailure,
            Error::Admissibility { .. } => BqciStatus::Admissibility,
            Error::EnergyGap { .. } => BqciStatus::EnergyGap,
            Error::BlowUp { .. } => BqciStatus::BlowUp,
            Error::Numerical(_) => BqciStatus::Numerical,
            Error::Format(_) => BqciStatus::Format,
            Error::Io(_) => BqciStatus::Io,
            Error::Json(_) => BqciStatus::Json,
        }
    }
}

/// Field rank tags, matching the snapshot format.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BqciRank {
    Scalar = 0,
    Vector = 1,
    SymTensor = 2,
}

impl From<BqciRank> for Rank {
    fn from(r: BqciRank) -> Rank {
        match r {
            BqciRank::Scalar => Rank::Scalar,
            BqciRank::Vector => Rank::Vector,
            BqciRank::SymTensor => Rank::SymTensor,
        }
    }
}

/// Plain copy of one stage of the parameter schedule. `big_m` is NaN when unset.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BqciStageParams {
    pub q: u32,
    pub alpha: f64,
    pub lambda_q: f64,
    pub delta_q: f64,
    pub lambda_next: f64,
    pub delta_next: f64,
    pub delta_next2: f64,
    pub l: f64,
    pub tau_q: f64,
    pub big_m1: f64,
    pub small_m1: f64,
    pub c0: f64,
    pub big_m: f64,
}

/// Outcome of a pipeline run. `status`: 0 completed, 1 gate abort, 2 error.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BqciRunSummary {
    pub status: i32,
    pub stage_reached: u32,
    pub failed_checks: u32,
}

pub struct BqciSchedule(ParamSchedule);
pub struct BqciField(Field);
pub struct BqciMikado(MikadoFamily);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(BqciStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(BqciStatus::from(&e), e.to_string())
    }
}

fn bad(msg: &str) -> Fail {
    Fail(BqciStatus::InvalidArgument, msg.to_string())
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> BqciStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BqciStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            BqciStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail(BqciStatus::NullPointer, "null handle".into()))
}

unsafe fn as_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail(BqciStatus::NullPointer, "null output pointer".into()))
}

unsafe fn as_str<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(BqciStatus::NullPointer, "null string".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|_| bad("string is not UTF-8"))
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    let slot = as_mut(out)?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copy the last error message of this thread into `buf` (NUL-terminated, truncated to
/// `len`). Returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bqci_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bqci_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---- schedule ----

/// Parse a TOML run configuration and build its parameter schedule.
///
/// # Safety
/// `toml` must be a valid C string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_schedule_from_toml(toml: *const c_char, out: *mut *mut BqciSchedule) -> BqciStatus {
    guard(|| {
        let cfg = RunConfig::from_toml_str(as_str(toml)?)?;
        let s = build_schedule(&cfg.problem)?;
        write_handle(out, BqciSchedule(s))
    })
}

/// # Safety
/// `s` must be a live schedule handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_schedule_stage_count(s: *const BqciSchedule, out: *mut usize) -> BqciStatus {
    guard(|| {
        *as_mut(out)? = as_ref(s)?.0.stages.len();
        Ok(())
    })
}

/// # Safety
/// `s` must be a live schedule handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_schedule_stage(
    s: *const BqciSchedule,
    q: usize,
    out: *mut BqciStageParams,
) -> BqciStatus {
    guard(|| {
        let p = as_ref(s)?.0.stage(q)?;
        *as_mut(out)? = BqciStageParams {
            q: p.q as u32,
            alpha: p.alpha,
            lambda_q: p.lambda_q,
            delta_q: p.delta_q,
            lambda_next: p.lambda_next,
            delta_next: p.delta_next,
            delta_next2: p.delta_next2,
            l: p.l,
            tau_q: p.tau_q,
            big_m1: p.big_m1,
            small_m1: p.small_m1,
            c0: p.c0,
            big_m: p.big_m.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from `bqci_schedule_from_toml`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bqci_schedule_free(s: *mut BqciSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

// ---- fields ----

/// Build a field on the n^3 grid from real samples, component-major: component c, point
/// (ix*n + iy)*n + iz sits at `data[c*n^3 + (ix*n + iy)*n + iz]`.
///
/// # Safety
/// `data` must point to `len` readable doubles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_field_from_samples(
    n: usize,
    rank: BqciRank,
    data: *const f64,
    len: usize,
    out: *mut *mut BqciField,
) -> BqciStatus {
    guard(|| {
        let grid = Grid::new(n)?;
        let rank = Rank::from(rank);
        let total = rank.components() * grid.real_len();
        if data.is_null() {
            return Err(Fail(BqciStatus::NullPointer, "null data".into()));
        }
        if len != total {
            return Err(bad(&format!("expected {total} samples, got {len}")));
        }
        let flat = std::slice::from_raw_parts(data, len);
        let comps: Vec<Vec<f64>> = flat.chunks(grid.real_len()).map(|c| c.to_vec()).collect();
        write_handle(out, BqciField(transform_forward(grid, rank, &comps)?))
    })
}

/// Number of doubles `bqci_field_samples` writes.
///
/// # Safety
/// `f` must be a live field handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_field_sample_count(f: *const BqciField, out: *mut usize) -> BqciStatus {
    guard(|| {
        let f = &as_ref(f)?.0;
        *as_mut(out)? = f.ncomp() * f.grid.real_len();
        Ok(())
    })
}

/// Write real samples in the layout of `bqci_field_from_samples`.
///
/// # Safety
/// `data` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bqci_field_samples(f: *const BqciField, data: *mut f64, len: usize) -> BqciStatus {
    guard(|| {
        let f = &as_ref(f)?.0;
        let total = f.ncomp() * f.grid.real_len();
        if data.is_null() {
            return Err(Fail(BqciStatus::NullPointer, "null data".into()));
        }
        if len != total {
            return Err(bad(&format!("expected room for {total} samples, got {len}")));
        }
        let dst = std::slice::from_raw_parts_mut(data, len);
        for (chunk, comp) in dst.chunks_mut(f.grid.real_len()).zip(f.samples()) {
            chunk.copy_from_slice(&comp);
        }
        Ok(())
    })
}

/// # Safety
/// `f` must be a live field handle; `n`, `rank` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bqci_field_shape(f: *const BqciField, n: *mut usize, rank: *mut BqciRank) -> BqciStatus {
    guard(|| {
        let f = &as_ref(f)?.0;
        *as_mut(n)? = f.grid.n;
        *as_mut(rank)? = match f.rank {
            Rank::Scalar => BqciRank::Scalar,
            Rank::Vector => BqciRank::Vector,
            Rank::SymTensor => BqciRank::SymTensor,
        };
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a field handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bqci_field_free(f: *mut BqciField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Differential and projection operators accepted by `bqci_field_apply`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BqciOp {
    Gradient = 0,
    Divergence = 1,
    Curl = 2,
    Laplacian = 3,
    InverseLaplacian = 4,
    LerayProject = 5,
    /// symmetric traceless R with div R = f, for zero-mean vector f
    InverseDivergence = 6,
}

/// Apply `op` to `f`, returning a new field.
///
/// # Safety
/// `f` must be a live field handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_field_apply(f: *const BqciField, op: BqciOp, out: *mut *mut BqciField) -> BqciStatus {
    guard(|| {
        let f = &as_ref(f)?.0;
        let r = match op {
            BqciOp::Gradient => f.gradient()?,
            BqciOp::Divergence => f.divergence()?,
            BqciOp::Curl => f.curl()?,
            BqciOp::Laplacian => f.laplacian(),
            BqciOp::InverseLaplacian => f.inverse_laplacian(),
            BqciOp::LerayProject => leray_project(f)?,
            BqciOp::InverseDivergence => inverse_divergence(f)?,
        };
        write_handle(out, BqciField(r))
    })
}

/// Space mollification at scale `l`.
///
/// # Safety
/// `f` must be a live field handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_field_mollify(f: *const BqciField, l: f64, out: *mut *mut BqciField) -> BqciStatus {
    guard(|| {
        let r = mollify(&as_ref(f)?.0, l)?;
        write_handle(out, BqciField(r))
    })
}

/// L2 norm over the torus (volume (2pi)^3 included) and sup over the grid.
///
/// # Safety
/// `f` must be a live field handle; `l2`, `sup` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bqci_field_norms(f: *const BqciField, l2: *mut f64, sup: *mut f64) -> BqciStatus {
    guard(|| {
        let f = &as_ref(f)?.0;
        *as_mut(l2)? = f.l2_norm();
        *as_mut(sup)? = f.sup_norm();
        Ok(())
    })
}

// ---- mikado ----

/// Build (and place) a Mikado family with tube radius `radius` and spectral cutoff `k_max`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_mikado_build(
    radius: f64,
    k_max: usize,
    seed: u64,
    out: *mut *mut BqciMikado,
) -> BqciStatus {
    guard(|| write_handle(out, BqciMikado(MikadoFamily::build(radius, k_max, seed)?)))
}

/// Amplitudes Gamma_j(R) for a symmetric R given as (11, 22, 33, 12, 23, 13).
///
/// # Safety
/// `r` must point to 6 readable doubles and `gamma` to 6 writable ones.
#[no_mangle]
pub unsafe extern "C" fn bqci_mikado_amplitudes(m: *const BqciMikado, r: *const f64, gamma: *mut f64) -> BqciStatus {
    guard(|| {
        let fam = &as_ref(m)?.0;
        if r.is_null() || gamma.is_null() {
            return Err(Fail(BqciStatus::NullPointer, "null array".into()));
        }
        let mut rr = [0.0; 6];
        rr.copy_from_slice(std::slice::from_raw_parts(r, 6));
        let (_, g) = fam.coefficients(&rr)?;
        std::slice::from_raw_parts_mut(gamma, 6).copy_from_slice(&g);
        Ok(())
    })
}

/// Sample W(R, xi) on the n^3 grid.
///
/// # Safety
/// `r` must point to 6 readable doubles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_mikado_field(
    m: *const BqciMikado,
    r: *const f64,
    n: usize,
    out: *mut *mut BqciField,
) -> BqciStatus {
    guard(|| {
        let fam = &as_ref(m)?.0;
        if r.is_null() {
            return Err(Fail(BqciStatus::NullPointer, "null array".into()));
        }
        let mut rr = [0.0; 6];
        rr.copy_from_slice(std::slice::from_raw_parts(r, 6));
        write_handle(out, BqciField(fam.evaluate_w(&rr, Grid::new(n)?)?))
    })
}

/// Radius of the ball around the identity on which the amplitudes are defined.
///
/// # Safety
/// `m` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_mikado_admissible_radius(m: *const BqciMikado, out: *mut f64) -> BqciStatus {
    guard(|| {
        *as_mut(out)? = as_ref(m)?.0.admissible_radius;
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bqci_mikado_free(m: *mut BqciMikado) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

// ---- pipeline ----

/// Run the full iteration for a TOML configuration, writing artifacts under `out_dir`
/// (null keeps everything in memory). `stages` = 0 runs up to q_max.
///
/// A gate abort still returns `Ok` with `summary.status = 1`; failed checks return
/// `CheckFailed` with the summary filled in.
///
/// # Safety
/// `toml` must be a valid C string, `out_dir` null or a valid C string, `summary` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn bqci_run(
    toml: *const c_char,
    out_dir: *const c_char,
    stages: u32,
    summary: *mut BqciRunSummary,
) -> BqciStatus {
    guard(|| {
        let text = as_str(toml)?;
        let summary = as_mut(summary)?;
        let config = RunConfig::from_toml_str(text)?;
        let out_dir = if out_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(as_str(out_dir)?))
        };
        let options = RunOptions {
            out_dir,
            stages: (stages > 0).then_some(stages as usize),
            verify_family_on: None,
        };
        let report = run_pipeline(&config, text, &options)?;
        let failed: usize = report.sections.values().map(|d| d.failed_checks().len()).sum();
        *summary = BqciRunSummary {
            status: match report.outcome.status.as_str() {
                "completed" => 0,
                "gate" => 1,
                _ => 2,
            },
            stage_reached: report.outcome.stage_reached as u32,
            failed_checks: failed as u32,
        };
        if failed > 0 {
            return Err(Fail(BqciStatus::CheckFailed, format!("{failed} checks failed")));
        }
        Ok(())
    })
}
