//! C ABI for the `sadi` library.
//!
//! Every fallible function returns a [`SadiStatus`]; on failure the message is
//! available from [`sadi_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_new`/`*_run_*` functions and released by the
//! matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sadi::engine::{run_fictitious_play, run_sgd, NoiseModel, SaOptions, StepSchedule, Trajectory};
use sadi::experiment::{run_experiment, validate_config, ExperimentConfig};
use sadi::games::Game;
use sadi::occupation::{accumulate_prefix, OccupationMeasure, Region};
use sadi::setvalued::MaxOfSmooth;
use sadi::testfn::Quadratic;
use sadi::{Error, Polytope};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SadiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Undefined = 5,
    Io = 6,
    Panic = 7,
}

/// Convex hull of finitely many points.
pub struct SadiPolytope(Polytope);

/// Iterates of a stochastic-approximation run.
pub struct SadiTrajectory(Trajectory);

/// Weighted occupation measure of a trajectory prefix.
pub struct SadiOccupation(OccupationMeasure);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(SadiStatus);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::DimensionMismatch { .. } => SadiStatus::DimensionMismatch,
            Error::NonFinite { .. } => SadiStatus::NonFinite,
            Error::UndefinedEstimate | Error::ZeroElapsedClock => SadiStatus::Undefined,
            Error::Io(_) | Error::Csv(_) => SadiStatus::Io,
            _ => SadiStatus::InvalidArgument,
        };
        set_error(e.to_string());
        Failure(status)
    }
}

fn fail(status: SadiStatus, msg: impl Into<String>) -> Failure {
    set_error(msg);
    Failure(status)
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SadiStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SadiStatus::Ok,
        Ok(Err(Failure(s))) => s,
        Err(_) => {
            set_error("internal panic");
            SadiStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SadiStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(fail(SadiStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(SadiStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SadiStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(SadiStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(SadiStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn copy_into(out: &mut [f64], v: &[f64]) -> Result<(), Failure> {
    if out.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: v.len(), found: out.len() }.into());
    }
    out.copy_from_slice(v);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sadi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sadi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ------------------------------------------------------------------ polytope

/// Builds the hull of `count` generators of dimension `dim`, stored
/// row-major in `generators`.
///
/// # Safety
/// `generators` must point to `count * dim` readable doubles and `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_polytope_new(
    generators: *const f64,
    count: usize,
    dim: usize,
    out: *mut *mut SadiPolytope,
) -> SadiStatus {
    guard(|| {
        if dim == 0 {
            return Err(fail(SadiStatus::InvalidArgument, "dimension must be at least 1"));
        }
        let flat = slice(generators, count * dim, "generators")?;
        let p = Polytope::new(flat.chunks_exact(dim).map(<[f64]>::to_vec).collect())?;
        write_out(out, Box::into_raw(Box::new(SadiPolytope(p))))
    })
}

/// # Safety
/// `p` must be NULL or a handle from [`sadi_polytope_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sadi_polytope_free(p: *mut SadiPolytope) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Dimension of the ambient space, 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sadi_polytope_dim(p: *const SadiPolytope) -> usize {
    p.as_ref().map_or(0, |p| p.0.dim())
}

/// Writes the minimum-norm point of the hull into `out[0..len]`.
///
/// # Safety
/// `p` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sadi_polytope_min_norm_point(p: *const SadiPolytope, out: *mut f64, len: usize) -> SadiStatus {
    guard(|| {
        let p = handle(p, "polytope")?;
        copy_into(slice_mut(out, len, "out")?, &p.0.min_norm_point())
    })
}

/// Euclidean distance from `y` to the hull.
///
/// # Safety
/// `p` must be a live handle, `y` must hold `len` doubles and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_polytope_distance(
    p: *const SadiPolytope,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> SadiStatus {
    guard(|| {
        let p = handle(p, "polytope")?;
        let d = p.0.distance_to(slice(y, len, "y")?)?;
        write_out(out, d)
    })
}

/// Support function `max_{z ∈ P} ⟨direction, z⟩`.
///
/// # Safety
/// Same contract as [`sadi_polytope_distance`].
#[no_mangle]
pub unsafe extern "C" fn sadi_polytope_support(
    p: *const SadiPolytope,
    direction: *const f64,
    len: usize,
    out: *mut f64,
) -> SadiStatus {
    guard(|| {
        let p = handle(p, "polytope")?;
        let s = p.0.support_value(slice(direction, len, "direction")?)?;
        write_out(out, s)
    })
}

// ---------------------------------------------------------------- trajectory

/// Stochastic subgradient descent on the named function (`abs`, `relu`,
/// `quadratic`, `max_of_squares`) with steps `a/(i+1)^rho`, Gaussian noise
/// of deviation `sigma` (0 disables it) and random-hull selection.
///
/// # Safety
/// `function` must be a NUL-terminated string, `x0` must hold `dim` doubles
/// and `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sadi_trajectory_run_sgd(
    function: *const c_char,
    dim: usize,
    x0: *const f64,
    a: f64,
    rho: f64,
    sigma: f64,
    guard_radius: f64,
    iterations: usize,
    seed: u64,
    out: *mut *mut SadiTrajectory,
) -> SadiStatus {
    guard(|| {
        let f = MaxOfSmooth::by_name(string(function, "function")?, dim)?;
        let x0 = slice(x0, dim, "x0")?;
        let noise = if sigma > 0.0 { NoiseModel::Gaussian { sigma } } else { NoiseModel::None };
        let schedule = StepSchedule::Power { a, rho };
        if let Some(v) = schedule.violations().into_iter().chain(noise.violations(2.0)).next() {
            return Err(fail(SadiStatus::InvalidArgument, v));
        }
        let opts = SaOptions::new(schedule).noise(noise).guard_radius(guard_radius);
        let t = run_sgd(&f, x0, &opts, iterations, seed)?;
        write_out(out, Box::into_raw(Box::new(SadiTrajectory(t))))
    })
}

/// Fictitious play on a built-in game (`matching_pennies`, `potential_2x2`,
/// `generalized_rps`) from the mixed profile `xi0`.
///
/// # Safety
/// `game` must be a NUL-terminated string, `xi0` must hold `len` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_trajectory_run_fictitious_play(
    game: *const c_char,
    xi0: *const f64,
    len: usize,
    stages: usize,
    seed: u64,
    out: *mut *mut SadiTrajectory,
) -> SadiStatus {
    guard(|| {
        let g = Game::builtin(string(game, "game")?)?;
        let t = run_fictitious_play(&g, slice(xi0, len, "xi0")?, stages, seed)?;
        write_out(out, Box::into_raw(Box::new(SadiTrajectory(t))))
    })
}

/// # Safety
/// `t` must be NULL or a trajectory handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sadi_trajectory_free(t: *mut SadiTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of completed steps, 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sadi_trajectory_len(t: *const SadiTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// State dimension, 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sadi_trajectory_dim(t: *const SadiTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.dim())
}

/// True when the run left the guard ball before completing.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sadi_trajectory_escaped(t: *const SadiTrajectory) -> bool {
    t.as_ref().is_some_and(|t| !t.0.status.is_completed())
}

/// Clock `t_N = Σ ε_i` at the last state, 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sadi_trajectory_elapsed(t: *const SadiTrajectory) -> f64 {
    t.as_ref().map_or(0.0, |t| t.0.elapsed())
}

/// Copies state `x_index` (0 ≤ index ≤ len) into `out[0..len]`.
///
/// # Safety
/// `t` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sadi_trajectory_state(
    t: *const SadiTrajectory,
    index: usize,
    out: *mut f64,
    len: usize,
) -> SadiStatus {
    guard(|| {
        let t = handle(t, "trajectory")?;
        if index > t.0.len() {
            return Err(fail(SadiStatus::InvalidArgument, format!("state index {index} exceeds {}", t.0.len())));
        }
        copy_into(slice_mut(out, len, "out")?, t.0.state(index))
    })
}

// ---------------------------------------------------------------- occupation

/// Occupation measure of the first `steps` steps; 0 selects the whole run.
///
/// # Safety
/// `t` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_from_trajectory(
    t: *const SadiTrajectory,
    steps: usize,
    out: *mut *mut SadiOccupation,
) -> SadiStatus {
    guard(|| {
        let t = handle(t, "trajectory")?;
        let k = if steps == 0 { t.0.len() } else { steps };
        write_out(out, Box::into_raw(Box::new(SadiOccupation(accumulate_prefix(&t.0, k)))))
    })
}

/// # Safety
/// `m` must be NULL or an occupation handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_free(m: *mut SadiOccupation) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of stored samples, 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_len(m: *const SadiOccupation) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// Sum of the sample weights, 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_total_weight(m: *const SadiOccupation) -> f64 {
    m.as_ref().map_or(0.0, |m| m.0.total_weight())
}

/// `∫ ‖v‖^q dμ`.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_velocity_moment(m: *const SadiOccupation, q: f64, out: *mut f64) -> SadiStatus {
    guard(|| {
        let m = handle(m, "occupation")?;
        if !(q > 1.0) {
            return Err(fail(SadiStatus::InvalidArgument, format!("moment order {q} must exceed 1")));
        }
        write_out(out, m.0.velocity_moment(q))
    })
}

/// Oscillation statistic `∫ v dμ` (weight `ψ ≡ 1`) into `out[0..len]`.
///
/// # Safety
/// `m` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_oscillation(m: *const SadiOccupation, out: *mut f64, len: usize) -> SadiStatus {
    guard(|| {
        let m = handle(m, "occupation")?;
        copy_into(slice_mut(out, len, "out")?, &m.0.oscillation_statistic(|_| 1.0).average)
    })
}

/// `∫ ⟨∇g(x), v⟩ dμ` for `g(x) = ½ Σ_k w_k (x_k - c_k)²`.
///
/// # Safety
/// `m` must be a live handle, `center` and `weights` must hold `len` doubles
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_closed_residual_quadratic(
    m: *const SadiOccupation,
    center: *const f64,
    weights: *const f64,
    len: usize,
    out: *mut f64,
) -> SadiStatus {
    guard(|| {
        let m = handle(m, "occupation")?;
        if len != m.0.dim() {
            return Err(Error::DimensionMismatch { expected: m.0.dim(), found: len }.into());
        }
        let g = Quadratic::new(slice(center, len, "center")?.to_vec(), slice(weights, len, "weights")?.to_vec());
        write_out(out, m.0.closed_residual(&g))
    })
}

/// Plug-in bandwidth `1.06 σ̂ M^{-1/(4+n)}`.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_bandwidth(m: *const SadiOccupation, out: *mut f64) -> SadiStatus {
    guard(|| {
        let m = handle(m, "occupation")?;
        write_out(out, m.0.bandwidth_rule())
    })
}

/// Kernel estimate of the centroid field at `x`. Returns
/// `SADI_STATUS_UNDEFINED` when no sample lies within five bandwidths.
///
/// # Safety
/// `m` must be a live handle, `x` must hold `len` doubles and `out` must hold
/// `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_centroid(
    m: *const SadiOccupation,
    x: *const f64,
    len: usize,
    bandwidth: f64,
    out: *mut f64,
) -> SadiStatus {
    guard(|| {
        let m = handle(m, "occupation")?;
        let est = m.0.centroid_field_estimate(slice(x, len, "x")?, bandwidth)?;
        copy_into(slice_mut(out, len, "out")?, &est.value)
    })
}

/// Normalized residence time in the closed ball `B(center, radius)`.
///
/// # Safety
/// `m` must be a live handle, `center` must hold `len` doubles and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_occupation_residence_ball(
    m: *const SadiOccupation,
    center: *const f64,
    len: usize,
    radius: f64,
    out: *mut f64,
) -> SadiStatus {
    guard(|| {
        let m = handle(m, "occupation")?;
        if len != m.0.dim() {
            return Err(Error::DimensionMismatch { expected: m.0.dim(), found: len }.into());
        }
        let region = Region::Ball { center: slice(center, len, "center")?.to_vec(), radius };
        write_out(out, m.0.residence_time(&region))
    })
}

// ---------------------------------------------------------------- experiments

/// Parses and validates an experiment document. `violations` receives the
/// number of violated conditions; their text is available from
/// [`sadi_last_error_message`] when non-zero.
///
/// # Safety
/// `json` must be a NUL-terminated string and `violations` writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_validate_config(json: *const c_char, violations: *mut usize) -> SadiStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(string(json, "json")?)?;
        let v = validate_config(&cfg);
        write_out(violations, v.len())?;
        if !v.is_empty() {
            set_error(v.join("\n"));
        }
        Ok(())
    })
}

/// Runs an experiment document and writes its artifacts under
/// `out_dir/<name>/`. `jobs = 0` uses every core. `bounded_fraction`
/// receives the fraction of seeds that stayed inside the guard ball.
///
/// # Safety
/// `json` and `out_dir` must be NUL-terminated strings and
/// `bounded_fraction` writable.
#[no_mangle]
pub unsafe extern "C" fn sadi_run_experiment(
    json: *const c_char,
    out_dir: *const c_char,
    jobs: usize,
    bounded_fraction: *mut f64,
) -> SadiStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(string(json, "json")?)?;
        let dir = string(out_dir, "out_dir")?;
        let report = run_experiment(&cfg, Path::new(dir), (jobs > 0).then_some(jobs))?;
        write_out(bounded_fraction, report.bounded_fraction)
    })
}
