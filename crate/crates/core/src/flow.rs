//! Explicit Euler integration of `x' ∈ H(x)` with selections, plus sampled
//! proxies for limit sets, recurrence, Lyapunov decrease and stable zeros.

use std::io::Write;
use std::path::Path;

use rand::{Rng as _, RngCore};
use rayon::prelude::*;

use crate::engine::{rng_from_seed, Rng};
use crate::error::{Error, Result};
use crate::geometry::HULL_TOL;
use crate::linalg::{dist, norm};
use crate::setvalued::{select_from, SelectionRule, SetValuedMap};

/// Grid solution `γ(s_k)`, `s_k = k dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    dim: usize,
    dt: f64,
    rule: SelectionRule,
    points: Vec<f64>,
}

impl Curve {
    pub fn constant(x: Vec<f64>, dt: f64, steps: usize) -> Self {
        let dim = x.len();
        let mut points = Vec::with_capacity(dim * (steps + 1));
        for _ in 0..=steps {
            points.extend_from_slice(&x);
        }
        Self { dim, dt, rule: SelectionRule::MinNorm, points }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn rule(&self) -> SelectionRule {
        self.rule
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Euler velocity `(γ(s_{k+1}) - γ(s_k)) / dt`.
    pub fn velocity(&self, k: usize) -> Vec<f64> {
        self.point(k + 1).iter().zip(self.point(k)).map(|(b, a)| (b - a) / self.dt).collect()
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.len().saturating_sub(1)).map(|k| norm(&self.velocity(k))).fold(0.0, f64::max)
    }

    /// `max_k d(velocity_k, H(γ(s_k)))`.
    pub fn consistency_defect<H: SetValuedMap + ?Sized>(&self, h: &H) -> f64 {
        (0..self.len().saturating_sub(1))
            .map(|k| h.evaluate(self.point(k)).distance_to(&self.velocity(k)).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["s".to_string()];
        header.extend((0..self.dim).map(|i| format!("x{i}")));
        out.write_record(&header)?;
        for (k, p) in self.points().enumerate() {
            let mut rec = vec![format!("{:.16e}", self.time(k))];
            rec.extend(p.iter().map(|v| format!("{v:.16e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// `γ(s_{k+1}) = γ(s_k) + dt · selection(H, γ(s_k))` for `round(T/dt)` steps.
pub fn euler_di<H: SetValuedMap + ?Sized, R: RngCore + ?Sized>(
    h: &H,
    x0: &[f64],
    dt: f64,
    t_end: f64,
    rule: SelectionRule,
    rng: &mut R,
) -> Result<Curve> {
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and T >= dt, got dt={dt}, T={t_end}")));
    }
    if x0.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: x0.len() });
    }
    let steps = (t_end / dt).round() as usize;
    let dim = x0.len();
    let mut points = Vec::with_capacity(dim * (steps + 1));
    points.extend_from_slice(x0);
    let mut x = x0.to_vec();
    for k in 0..steps {
        let y = select_from(&h.evaluate(&x), rule, rng);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi += dt * yi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        points.extend_from_slice(&x);
    }
    Ok(Curve { dim, dt, rule, points })
}

/// Integrates from every start under every rule in parallel. Task `j` uses
/// the stream seeded by `seed + j`.
pub fn euler_batch<H: SetValuedMap + ?Sized>(
    h: &H,
    starts: &[Vec<f64>],
    dt: f64,
    t_end: f64,
    rules: &[SelectionRule],
    seed: u64,
) -> Result<Vec<Curve>> {
    let tasks: Vec<(usize, &Vec<f64>, SelectionRule)> = starts
        .iter()
        .flat_map(|x| rules.iter().map(move |r| (x, *r)))
        .enumerate()
        .map(|(j, (x, r))| (j, x, r))
        .collect();
    tasks
        .into_par_iter()
        .map(|(j, x, r)| {
            let mut rng = rng_from_seed(seed.wrapping_add(j as u64));
            euler_di(h, x, dt, t_end, r, &mut rng)
        })
        .collect()
}

/// Points on the last `tail_fraction` of the curve.
pub fn limit_set_estimate(curve: &Curve, tail_fraction: f64) -> Result<Vec<Vec<f64>>> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("tail fraction {tail_fraction} not in (0, 1)")));
    }
    let n = curve.len();
    let keep = ((n as f64 * tail_fraction).ceil() as usize).clamp(1, n);
    Ok(curve.points().skip(n - keep).map(|p| p.to_vec()).collect())
}

/// Radius of a point cloud around its mean.
pub fn cloud_radius(cloud: &[Vec<f64>]) -> f64 {
    if cloud.is_empty() {
        return 0.0;
    }
    let n = cloud[0].len();
    let mut mean = vec![0.0; n];
    for p in cloud {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / cloud.len() as f64;
        }
    }
    cloud.iter().map(|p| dist(p, &mean)).fold(0.0, f64::max)
}

/// Search budget for [`recurrence_proxy`].
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrenceSearch {
    pub t_end: f64,
    pub dt: f64,
    pub eps_return: f64,
    pub tau_min: f64,
    pub rules: Vec<SelectionRule>,
    /// Integrations per randomized rule; `min_norm` is run once.
    pub restarts: usize,
}

/// True iff some integrated curve from `x` comes back within `eps_return`
/// of `x` at a time `≥ tau_min`. A false result only means no witness was
/// found.
pub fn recurrence_proxy<H: SetValuedMap + ?Sized, R: RngCore + ?Sized>(
    h: &H,
    x: &[f64],
    search: &RecurrenceSearch,
    rng: &mut R,
) -> Result<bool> {
    if !(search.tau_min < search.t_end) {
        return Err(Error::InvalidArgument("tau_min must be below T".into()));
    }
    for &rule in &search.rules {
        let tries = if rule == SelectionRule::MinNorm { 1 } else { search.restarts.max(1) };
        for _ in 0..tries {
            let curve = euler_di(h, x, search.dt, search.t_end, rule, rng)?;
            let returned = curve
                .points()
                .enumerate()
                .any(|(k, p)| curve.time(k) >= search.tau_min && dist(p, x) <= search.eps_return);
            if returned {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Per-curve outcome of [`lyapunov_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovReport {
    pub max_increase: f64,
    /// `L_V · dt · max‖v‖`
    pub tolerance: f64,
    pub starts_in_lambda: bool,
    /// `V(γ(0)) - V(γ(t_end))`
    pub decrease: f64,
    pub passed: bool,
}

/// Checks that `V` does not increase along grid points beyond the Euler
/// tolerance and strictly decreases on curves starting outside `Λ`.
/// `lip_v` is a Lipschitz constant of `V` on the region the curves visit.
pub fn lyapunov_check(
    v: impl Fn(&[f64]) -> f64,
    lip_v: f64,
    curves: &[Curve],
    in_lambda: impl Fn(&[f64]) -> bool,
) -> Vec<LyapunovReport> {
    curves
        .iter()
        .map(|c| {
            let values: Vec<f64> = c.points().map(&v).collect();
            let max_increase = values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            let tolerance = lip_v * c.dt() * c.max_speed();
            let starts_in_lambda = in_lambda(c.point(0));
            let decrease = values[0] - values[values.len() - 1];
            let passed = max_increase <= tolerance * (1.0 + 1e-9) && (starts_in_lambda || decrease > 0.0);
            LyapunovReport { max_increase, tolerance, starts_in_lambda, decrease, passed }
        })
        .collect()
}

/// Sampled certificate that `x` is a stable zero: `0 ∈ H(x)` and every one of
/// `trials` integrated curves (first `min_norm`, then alternating random
/// rules) stays within `10 dt (1 + ‖x‖)` of `x` up to time `T`.
pub fn stable_zero_check<H: SetValuedMap + ?Sized, R: RngCore + ?Sized>(
    h: &H,
    x: &[f64],
    t_end: f64,
    dt: f64,
    trials: usize,
    rng: &mut R,
) -> Result<bool> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let zero = vec![0.0; x.len()];
    if h.evaluate(x).distance_to(&zero)? > HULL_TOL {
        return Ok(false);
    }
    let eps_stay = 10.0 * dt * (1.0 + norm(x));
    for t in 0..trials {
        let rule = match t {
            0 => SelectionRule::MinNorm,
            _ if rng.random_bool(0.5) => SelectionRule::RandomVertex,
            _ => SelectionRule::RandomHull,
        };
        let curve = euler_di(h, x, dt, t_end, rule, rng)?;
        if curve.points().any(|p| dist(p, x) > eps_stay) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Convenience wrapper owning its random stream.
pub fn euler_di_seeded<H: SetValuedMap + ?Sized>(
    h: &H,
    x0: &[f64],
    dt: f64,
    t_end: f64,
    rule: SelectionRule,
    seed: u64,
) -> Result<Curve> {
    let mut rng: Rng = rng_from_seed(seed);
    euler_di(h, x0, dt, t_end, rule, &mut rng)
}
