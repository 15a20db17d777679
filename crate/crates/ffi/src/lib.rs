//! C ABI over the `lucgen` library.
//!
//! Every fallible function returns a [`LucgenStatus`]; on failure the
//! message is kept per thread and read with [`lucgen_last_error`]. Objects
//! cross the boundary as opaque handles that the caller releases with the
//! matching `_free` function. Panics are caught and reported as
//! `LUCGEN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString, OsString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use lucgen::advplanner::{GanModel, Generator, GAN_CHECKPOINT_KIND};
use lucgen::cli::merged_raster;
use lucgen::landuse::{diversity, merge_dominant, poi_proportions, quality, LandUseConfig};
use lucgen::numerics::Checkpoint;
use lucgen::scoring::{rf_score, RandomForestModel};
use lucgen::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LucgenStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Io = 4,
    Data = 5,
    Config = 6,
    Numeric = 7,
    Panic = 8,
}

/// Land-use configuration: `m` channels over an `n × n` grid.
pub struct LucgenPlan {
    inner: LandUseConfig,
}

/// Trained random-forest scoring model.
pub struct LucgenScorer {
    inner: RandomForestModel,
}

/// Generator half of a trained adversarial planner.
pub struct LucgenGenerator {
    inner: Generator,
}

struct Failure {
    status: LucgenStatus,
    message: String,
}

impl Failure {
    fn new(status: LucgenStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Failure::new(LucgenStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure::new(LucgenStatus::InvalidArgument, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dimension { .. } => LucgenStatus::Dimension,
            Error::Domain(_) | Error::Precondition(_) => LucgenStatus::InvalidArgument,
            Error::Numeric(_) | Error::Diverged { .. } => LucgenStatus::Numeric,
            Error::MissingInput(_) | Error::Io { .. } => LucgenStatus::Io,
            Error::Config(_) => LucgenStatus::Config,
            Error::UnsupportedRegion { .. }
            | Error::Ingest { .. }
            | Error::Json(_)
            | Error::Csv(_) => LucgenStatus::Data,
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LucgenStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LucgenStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            LucgenStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, cap: usize) -> Result<(), Failure> {
    if cap < values.len() {
        return Err(Failure::invalid(format!(
            "buffer holds {cap} values, {} needed",
            values.len()
        )));
    }
    if values.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(Failure::null("buffer"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

unsafe fn give<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("output handle pointer"));
    }
    out.write(Box::into_raw(Box::new(value)));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lucgen_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lucgen_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn lucgen_clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Harmonic quality score of a check-in frequency and a diversity, both in `[0, 1]`.
///
/// # Safety
/// `q_out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn lucgen_quality(freq: f64, div: f64, q_out: *mut f64) -> LucgenStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&freq) || !(0.0..=1.0).contains(&div) {
            return Err(Failure::invalid("freq and div must lie in [0, 1]"));
        }
        write_out(q_out, quality(freq, div).q)
    })
}

/// Empty plan with `m` channels on an `n × n` grid.
///
/// # Safety
/// `out` must be null or point to writable memory for one handle.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_new(
    m: usize,
    n: usize,
    out: *mut *mut LucgenPlan,
) -> LucgenStatus {
    guard(|| {
        if m == 0 || n == 0 {
            return Err(Failure::invalid("m and n must be positive"));
        }
        give(
            out,
            LucgenPlan {
                inner: LandUseConfig::zeros(m, n),
            },
        )
    })
}

/// Plan from `m·n·n` row-major values laid out as `[channel][row][col]`.
///
/// # Safety
/// `data` must point to `len` readable doubles; `out` as in [`lucgen_plan_new`].
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_from_data(
    m: usize,
    n: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut LucgenPlan,
) -> LucgenStatus {
    guard(|| {
        let values = slice_arg(data, len, "data")?;
        let inner = LandUseConfig::from_data(m, n, values.to_vec())?;
        give(out, LucgenPlan { inner })
    })
}

/// # Safety
/// `plan` must be null or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_free(plan: *mut LucgenPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// # Safety
/// `plan` must be a live handle; `m_out` and `n_out` writable.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_shape(
    plan: *const LucgenPlan,
    m_out: *mut usize,
    n_out: *mut usize,
) -> LucgenStatus {
    guard(|| {
        let p = borrow(plan, "plan")?;
        write_out(m_out, p.inner.channels())?;
        write_out(n_out, p.inner.resolution())
    })
}

fn check_cell(cfg: &LandUseConfig, c: usize, r: usize, col: usize) -> Result<(), Failure> {
    let n = cfg.resolution();
    if c >= cfg.channels() || r >= n || col >= n {
        return Err(Failure::new(
            LucgenStatus::Dimension,
            format!("cell ({c}, {r}, {col}) outside {}×{n}×{n}", cfg.channels()),
        ));
    }
    Ok(())
}

/// # Safety
/// `plan` must be a live handle; `value_out` writable.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_get(
    plan: *const LucgenPlan,
    channel: usize,
    row: usize,
    col: usize,
    value_out: *mut f64,
) -> LucgenStatus {
    guard(|| {
        let p = borrow(plan, "plan")?;
        check_cell(&p.inner, channel, row, col)?;
        write_out(value_out, p.inner.get(channel, row, col))
    })
}

/// Adds `value` (finite, non-negative) to one cell.
///
/// # Safety
/// `plan` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_add(
    plan: *mut LucgenPlan,
    channel: usize,
    row: usize,
    col: usize,
    value: f64,
) -> LucgenStatus {
    guard(|| {
        let p = borrow_mut(plan, "plan")?;
        check_cell(&p.inner, channel, row, col)?;
        if !(value.is_finite() && value >= 0.0) {
            return Err(Failure::invalid("value must be finite and non-negative"));
        }
        p.inner.add(channel, row, col, value);
        Ok(())
    })
}

/// Copies all `m·n·n` values into `buf`, which holds `cap` doubles.
///
/// # Safety
/// `plan` must be a live handle; `buf` must hold `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_copy_data(
    plan: *const LucgenPlan,
    buf: *mut f64,
    cap: usize,
) -> LucgenStatus {
    guard(|| copy_out(borrow(plan, "plan")?.inner.data(), buf, cap))
}

/// Entropy-based diversity of the channel totals, in `[0, 1]`.
///
/// # Safety
/// `plan` must be a live handle; `div_out` writable.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_diversity(
    plan: *const LucgenPlan,
    div_out: *mut f64,
) -> LucgenStatus {
    guard(|| write_out(div_out, diversity(&borrow(plan, "plan")?.inner)))
}

/// Share of each channel in the plan total; writes `m` values.
///
/// # Safety
/// `plan` must be a live handle; `buf` must hold `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_proportions(
    plan: *const LucgenPlan,
    buf: *mut f64,
    cap: usize,
) -> LucgenStatus {
    guard(|| copy_out(&poi_proportions(&borrow(plan, "plan")?.inner), buf, cap))
}

/// Dominant channel per cell, row-major, `-1` for empty cells; writes `n·n` values.
///
/// # Safety
/// `plan` must be a live handle; `buf` must hold `cap` writable ints.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_dominant(
    plan: *const LucgenPlan,
    buf: *mut c_int,
    cap: usize,
) -> LucgenStatus {
    guard(|| {
        let map = merge_dominant(&borrow(plan, "plan")?.inner);
        let n = map.n;
        if cap < n * n {
            return Err(Failure::invalid(format!(
                "buffer holds {cap} values, {} needed",
                n * n
            )));
        }
        if buf.is_null() {
            return Err(Failure::null("buffer"));
        }
        for r in 0..n {
            for c in 0..n {
                buf.add(r * n + c)
                    .write(map.get(r, c).map_or(-1, c_int::from));
            }
        }
        Ok(())
    })
}

/// Writes the merged category map as a binary PPM with `scale` pixels per cell.
///
/// # Safety
/// `plan` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn lucgen_plan_write_ppm(
    plan: *const LucgenPlan,
    path: *const c_char,
    scale: usize,
) -> LucgenStatus {
    guard(|| {
        let p = borrow(plan, "plan")?;
        let path = path_arg(path)?;
        if !(1..=64).contains(&scale) {
            return Err(Failure::invalid("scale must be in 1..=64"));
        }
        std::fs::write(&path, merged_raster(&merge_dominant(&p.inner), scale)).map_err(|e| {
            Failure::new(
                LucgenStatus::Io,
                format!("cannot write {}: {e}", path.display()),
            )
        })
    })
}

/// Loads a scoring model saved by the `score` stage.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lucgen_scorer_load(
    path: *const c_char,
    out: *mut *mut LucgenScorer,
) -> LucgenStatus {
    guard(|| {
        let inner = RandomForestModel::load(&path_arg(path)?)?;
        give(out, LucgenScorer { inner })
    })
}

/// # Safety
/// `scorer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lucgen_scorer_free(scorer: *mut LucgenScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

/// Probability in `[0, 1]` that the plan is an excellent configuration.
///
/// # Safety
/// `scorer` and `plan` must be live handles; `score_out` writable.
#[no_mangle]
pub unsafe extern "C" fn lucgen_scorer_score(
    scorer: *const LucgenScorer,
    plan: *const LucgenPlan,
    score_out: *mut f64,
) -> LucgenStatus {
    guard(|| {
        let s = borrow(scorer, "scorer")?;
        let p = borrow(plan, "plan")?;
        write_out(score_out, rf_score(&s.inner, &p.inner)?)
    })
}

/// Loads the generator from a planner checkpoint written by `train-gan`.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lucgen_generator_load(
    path: *const c_char,
    out: *mut *mut LucgenGenerator,
) -> LucgenStatus {
    guard(|| {
        let ck = Checkpoint::load(&path_arg(path)?, GAN_CHECKPOINT_KIND)?;
        let model = GanModel::from_checkpoint(&ck)?;
        give(
            out,
            LucgenGenerator {
                inner: model.generator,
            },
        )
    })
}

/// # Safety
/// `generator` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lucgen_generator_free(generator: *mut LucgenGenerator) {
    if !generator.is_null() {
        drop(Box::from_raw(generator));
    }
}

/// Input width plus output shape: latent length, channels `m`, resolution `n`.
///
/// # Safety
/// `generator` must be a live handle; all outputs writable.
#[no_mangle]
pub unsafe extern "C" fn lucgen_generator_shape(
    generator: *const LucgenGenerator,
    latent_out: *mut usize,
    m_out: *mut usize,
    n_out: *mut usize,
) -> LucgenStatus {
    guard(|| {
        let g = &borrow(generator, "generator")?.inner;
        write_out(latent_out, g.latent_dim())?;
        write_out(m_out, g.channels)?;
        write_out(n_out, g.resolution)
    })
}

/// Maps one latent vector (context embedding plus noise) to a new plan.
///
/// # Safety
/// `generator` must be a live handle; `z` must hold `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lucgen_generator_generate(
    generator: *const LucgenGenerator,
    z: *const f64,
    len: usize,
    out: *mut *mut LucgenPlan,
) -> LucgenStatus {
    guard(|| {
        let g = &borrow(generator, "generator")?.inner;
        let inner = g.generate(slice_arg(z, len, "z")?)?;
        give(out, LucgenPlan { inner })
    })
}

/// Runs the command-line tool in-process and returns its exit status.
/// `argv[0]` is the program name, as for `main`.
///
/// # Safety
/// `argv` must point to `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn lucgen_cli_run(argc: c_int, argv: *const *const c_char) -> c_int {
    let mut args = Vec::new();
    if argc > 0 {
        if argv.is_null() {
            set_last_error("argv is null");
            return 2;
        }
        for i in 0..argc as usize {
            let a = *argv.add(i);
            if a.is_null() {
                set_last_error("argv entry is null");
                return 2;
            }
            args.push(OsString::from(
                CStr::from_ptr(a).to_string_lossy().into_owned(),
            ));
        }
    }
    match catch_unwind(AssertUnwindSafe(|| lucgen::cli::run(args))) {
        Ok(code) => code,
        Err(_) => {
            set_last_error("panic in command-line run");
            2
        }
    }
}
