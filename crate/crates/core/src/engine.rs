//! The stochastic approximation recursion
//! `x_{i+1} ∈ x_i + ε_i H^{δ_i}(x_i) + ε_i η_{i+1}` and the engines built on
//! it: subgradient descent, stochastic heavy ball and fictitious play.
//!
//! Every run owns a `ChaCha8Rng` seeded from the caller's seed, so equal
//! `(configuration, seed)` pairs produce bit-identical trajectories.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::games::Game;
use crate::linalg::norm;
use crate::setvalued::{
    enlargement_sample, select_from, unit_ball_sample, MaxOfSmooth, NegSubdifferential, SelectionRule,
    SetValuedMap,
};

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic step sizes `ε_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `a / (i+1)^ρ`
    Power { a: f64, rho: f64 },
    /// `a / ln(i+2)`
    Logarithmic { a: f64 },
    /// `a`; never vanishes, so it is only useful as a negative control.
    Constant { a: f64 },
}

impl StepSchedule {
    pub fn step(&self, i: usize) -> f64 {
        match *self {
            StepSchedule::Power { a, rho } => a / ((i + 1) as f64).powf(rho),
            StepSchedule::Logarithmic { a } => a / ((i + 2) as f64).ln(),
            StepSchedule::Constant { a } => a,
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            StepSchedule::Power { a, .. } | StepSchedule::Logarithmic { a } | StepSchedule::Constant { a } => a,
        }
    }

    /// Violations of: positive steps, divergent sum, steps tending to zero.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.scale() > 0.0) || !self.scale().is_finite() {
            out.push("step sizes must be positive: step-size assumption fails".to_string());
        }
        match *self {
            StepSchedule::Power { rho, .. } => {
                if rho > 1.0 {
                    out.push(format!(
                        "sum of steps converges (rho = {rho} > 1): step-size assumption (i) fails"
                    ));
                }
                if rho <= 0.0 {
                    out.push(format!(
                        "steps do not vanish (rho = {rho} <= 0): step-size assumption (ii) fails"
                    ));
                }
            }
            StepSchedule::Logarithmic { .. } => {}
            StepSchedule::Constant { .. } => {
                out.push("steps do not vanish (constant schedule): step-size assumption (ii) fails".to_string());
            }
        }
        out
    }

    pub fn is_conforming(&self) -> bool {
        self.violations().is_empty()
    }

    /// Exponent governing the decay of `ε_i` (0 for logarithmic/constant).
    fn power_exponent(&self) -> Option<f64> {
        match *self {
            StepSchedule::Power { rho, .. } => Some(rho),
            _ => None,
        }
    }
}

/// `lim α_i / β_i` for two parametric schedules, when it exists and is
/// finite and positive.
pub fn schedule_ratio_limit(alpha: &StepSchedule, beta: &StepSchedule) -> Option<f64> {
    let same_shape = match (alpha, beta) {
        (StepSchedule::Power { rho: ra, .. }, StepSchedule::Power { rho: rb, .. }) => ra == rb,
        (StepSchedule::Logarithmic { .. }, StepSchedule::Logarithmic { .. }) => true,
        (StepSchedule::Constant { .. }, StepSchedule::Constant { .. }) => true,
        _ => false,
    };
    let c = alpha.scale() / beta.scale();
    (same_shape && c.is_finite() && c > 0.0).then_some(c)
}

/// Violations of the heavy-ball step assumption.
pub fn heavy_ball_violations(alpha: &StepSchedule, beta: &StepSchedule) -> Vec<String> {
    let mut out: Vec<String> = alpha.violations().into_iter().map(|v| format!("alpha: {v}")).collect();
    if !(beta.scale() > 0.0) {
        out.push("beta: step sizes must be positive".to_string());
    }
    if beta.step(0) > 1.0 {
        out.push(format!("beta_0 = {} exceeds 1: heavy-ball recursion requires beta_i <= 1", beta.step(0)));
    }
    if schedule_ratio_limit(alpha, beta).is_none() {
        let why = match (alpha.power_exponent(), beta.power_exponent()) {
            (Some(ra), Some(rb)) if ra > rb => "alpha_i/beta_i -> 0, no positive c".to_string(),
            (Some(_), Some(_)) => "alpha_i/beta_i -> infinity, no finite c".to_string(),
            _ => "alpha_i/beta_i has no positive finite limit".to_string(),
        };
        out.push(format!("{why}: heavy-ball step assumption fails"));
    }
    out
}

/// Martingale-difference noise `η_{i+1}`, drawn independently per step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    /// Independent `N(0, σ²)` coordinates.
    Gaussian { sigma: f64 },
    /// Uniform on the closed ball of radius `radius`.
    UniformBall { radius: f64 },
    /// Independent `scale · t(df)` coordinates.
    StudentT { df: f64, scale: f64 },
}

impl NoiseModel {
    pub fn sample<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            NoiseModel::None => vec![0.0; n],
            NoiseModel::Gaussian { sigma } => {
                let d = Normal::new(0.0, sigma).expect("sigma validated");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            NoiseModel::UniformBall { radius } => {
                unit_ball_sample(n, rng).into_iter().map(|v| v * radius).collect()
            }
            NoiseModel::StudentT { df, scale } => {
                let d = StudentT::new(df).expect("df validated");
                (0..n).map(|_| scale * d.sample(rng)).collect()
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseModel::None)
    }

    /// `E‖η‖^q` in dimension `n`, where a closed form is available.
    pub fn analytic_moment(&self, n: usize, q: f64) -> Option<f64> {
        let nf = n as f64;
        match *self {
            NoiseModel::None => Some(0.0),
            NoiseModel::Gaussian { sigma } => {
                // ‖η‖/σ is chi-distributed with n degrees of freedom.
                let log = q * sigma.ln() + 0.5 * q * 2f64.ln() + ln_gamma(0.5 * (nf + q)) - ln_gamma(0.5 * nf);
                Some(log.exp())
            }
            NoiseModel::UniformBall { radius } => Some(radius.powf(q) * nf / (nf + q)),
            NoiseModel::StudentT { df, scale } => {
                if q >= df {
                    return None;
                }
                if n == 1 {
                    let log = q * scale.ln() + 0.5 * q * df.ln() + ln_gamma(0.5 * (q + 1.0))
                        + ln_gamma(0.5 * (df - q))
                        - 0.5 * std::f64::consts::PI.ln()
                        - ln_gamma(0.5 * df);
                    Some(log.exp())
                } else if q == 2.0 {
                    Some(nf * scale * scale * df / (df - 2.0))
                } else {
                    None
                }
            }
        }
    }

    /// Violations of the centred, bounded-`q`-moment noise assumption.
    pub fn violations(&self, q: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(q > 1.0) {
            out.push(format!("moment order q = {q} must exceed 1: noise assumption fails"));
        }
        match *self {
            NoiseModel::None => {}
            NoiseModel::Gaussian { sigma } => {
                if !(sigma >= 0.0) || !sigma.is_finite() {
                    out.push(format!("gaussian sigma = {sigma} must be finite and >= 0"));
                }
            }
            NoiseModel::UniformBall { radius } => {
                if !(radius >= 0.0) || !radius.is_finite() {
                    out.push(format!("uniform_ball radius = {radius} must be finite and >= 0"));
                }
            }
            NoiseModel::StudentT { df, scale } => {
                if !(df > q) {
                    out.push(format!(
                        "student_t df = {df} must exceed q = {q}: q-th noise moment is infinite, noise assumption fails"
                    ));
                }
                if !(df > 1.0) {
                    out.push("student_t df must exceed 1 for a zero mean: noise assumption fails".to_string());
                }
                if !(scale >= 0.0) || !scale.is_finite() {
                    out.push(format!("student_t scale = {scale} must be finite and >= 0"));
                }
            }
        }
        out
    }
}

/// Enlargement levels `δ_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaSchedule {
    #[default]
    Zero,
    /// `d / (i+1)^σ`
    Power { d: f64, sigma: f64 },
}

impl DeltaSchedule {
    pub fn delta(&self, i: usize) -> f64 {
        match *self {
            DeltaSchedule::Zero => 0.0,
            DeltaSchedule::Power { d, sigma } => d / ((i + 1) as f64).powf(sigma),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        match *self {
            DeltaSchedule::Zero => vec![],
            DeltaSchedule::Power { d, sigma } => {
                let mut v = vec![];
                if !(d >= 0.0) {
                    v.push(format!("delta scale d = {d} must be >= 0"));
                }
                if !(sigma > 0.0) && d > 0.0 {
                    v.push(format!("delta exponent {sigma} must be > 0 so that delta_i -> 0"));
                }
                v
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// `‖x_step‖ > R` (or the state became non-finite).
    Escaped { step: usize, norm: f64 },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

/// Full record of a run: states `x_0..x_N`, velocities `v_1..v_N`, noises
/// `η_1..η_N`, steps and enlargements `ε_0..ε_{N-1}`, `δ_0..δ_{N-1}`, and
/// the clock `t_i = Σ_{j<i} ε_j`. Vectors are stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    states: Vec<f64>,
    velocities: Vec<f64>,
    noises: Vec<f64>,
    steps: Vec<f64>,
    deltas: Vec<f64>,
    clock: Vec<f64>,
    pub status: RunStatus,
    pub seed: u64,
}

impl Trajectory {
    pub fn new(x0: Vec<f64>, seed: u64) -> Self {
        Self {
            dim: x0.len(),
            states: x0,
            velocities: Vec::new(),
            noises: Vec::new(),
            steps: Vec::new(),
            deltas: Vec::new(),
            clock: vec![0.0],
            status: RunStatus::Completed,
            seed,
        }
    }

    pub fn with_capacity(x0: Vec<f64>, seed: u64, n: usize) -> Self {
        let dim = x0.len();
        let mut t = Self::new(x0, seed);
        t.states.reserve(n * dim);
        t.velocities.reserve(n * dim);
        t.noises.reserve(n * dim);
        t.steps.reserve(n);
        t.deltas.reserve(n);
        t.clock.reserve(n);
        t
    }

    /// Appends one step; the velocity is recomputed from the states so that
    /// `v = (x_next - x)/ε` holds bit-exactly.
    pub fn push(&mut self, x_next: &[f64], eps: f64, delta: f64, eta: &[f64]) {
        debug_assert_eq!(x_next.len(), self.dim);
        let i = self.steps.len();
        let base = i * self.dim;
        for (k, xn) in x_next.iter().enumerate() {
            let v = (xn - self.states[base + k]) / eps;
            self.velocities.push(v);
        }
        self.states.extend_from_slice(x_next);
        self.noises.extend_from_slice(eta);
        self.steps.push(eps);
        self.deltas.push(delta);
        let t = self.clock[i] + eps;
        self.clock.push(t);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of recorded steps `N`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `x_i`, `0 ≤ i ≤ N`.
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len())
    }

    /// `v_{i+1}`, `0 ≤ i < N`.
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    /// `η_{i+1}`, `0 ≤ i < N`.
    pub fn noise(&self, i: usize) -> &[f64] {
        &self.noises[i * self.dim..(i + 1) * self.dim]
    }

    pub fn step(&self, i: usize) -> f64 {
        self.steps[i]
    }

    pub fn delta(&self, i: usize) -> f64 {
        self.deltas[i]
    }

    /// `t_i`, `0 ≤ i ≤ N`.
    pub fn clock(&self, i: usize) -> f64 {
        self.clock[i]
    }

    pub fn elapsed(&self) -> f64 {
        self.clock[self.len()]
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn states_flat(&self) -> &[f64] {
        &self.states
    }

    pub fn velocities_flat(&self) -> &[f64] {
        &self.velocities
    }

    /// The first `k` steps (states `x_0..x_k`); status is reset to completed.
    pub fn truncated(&self, k: usize) -> Trajectory {
        let k = k.min(self.len());
        let d = self.dim;
        Trajectory {
            dim: d,
            states: self.states[..(k + 1) * d].to_vec(),
            velocities: self.velocities[..k * d].to_vec(),
            noises: self.noises[..k * d].to_vec(),
            steps: self.steps[..k].to_vec(),
            deltas: self.deltas[..k].to_vec(),
            clock: self.clock[..=k].to_vec(),
            status: RunStatus::Completed,
            seed: self.seed,
        }
    }

    /// `Σ_{j<k} ε_j h(x_j) η_{j+1} / Σ_{j<k} ε_j`.
    pub fn noise_average(&self, k: usize, h: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let k = k.min(self.len());
        let mut acc = vec![0.0; self.dim];
        let mut total = 0.0;
        for j in 0..k {
            let w = self.steps[j] * h(self.state(j));
            crate::linalg::axpy(w, self.noise(j), &mut acc);
            total += self.steps[j];
        }
        acc.iter_mut().for_each(|v| *v /= total);
        acc
    }

    /// Largest coordinate-wise `|x_i|` norm over all states.
    pub fn max_state_norm(&self) -> f64 {
        (0..=self.len()).map(|i| norm(self.state(i))).fold(0.0, f64::max)
    }
}

/// Output of a single recursion step.
#[derive(Clone, Debug, PartialEq)]
pub struct SaStep {
    pub x_next: Vec<f64>,
    pub v: Vec<f64>,
    pub eta: Vec<f64>,
}

/// `x_next = x + ε (y + η)`, `v = (x_next - x)/ε`.
pub fn apply_step(x: &[f64], eps: f64, y: &[f64], eta: &[f64]) -> SaStep {
    let x_next: Vec<f64> = x.iter().zip(y.iter().zip(eta)).map(|(xi, (yi, ei))| xi + eps * (yi + ei)).collect();
    let v = x_next.iter().zip(x).map(|(a, b)| (a - b) / eps).collect();
    SaStep { x_next, v, eta: eta.to_vec() }
}

/// One step of the recursion: `y` drawn from `H^{δ_i}(x)` with `rule`,
/// `η` from `noise`.
#[allow(clippy::too_many_arguments)]
pub fn sa_step<H: SetValuedMap + ?Sized, R: RngCore + ?Sized>(
    x: &[f64],
    i: usize,
    h: &H,
    sched: &StepSchedule,
    noise: &NoiseModel,
    delta: f64,
    rule: SelectionRule,
    rng: &mut R,
) -> SaStep {
    let eps = sched.step(i);
    let y = enlargement_sample(h, x, delta, rule, rng);
    let eta = noise.sample(x.len(), rng);
    apply_step(x, eps, &y, &eta)
}

/// Everything `run_sa` needs besides the map and the initial point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaOptions {
    pub schedule: StepSchedule,
    pub noise: NoiseModel,
    pub delta: DeltaSchedule,
    pub rule: SelectionRule,
    pub guard_radius: f64,
}

impl SaOptions {
    pub fn new(schedule: StepSchedule) -> Self {
        Self {
            schedule,
            noise: NoiseModel::None,
            delta: DeltaSchedule::Zero,
            rule: SelectionRule::RandomHull,
            guard_radius: 1e3,
        }
    }

    pub fn noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn delta(mut self, delta: DeltaSchedule) -> Self {
        self.delta = delta;
        self
    }

    pub fn rule(mut self, rule: SelectionRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn guard_radius(mut self, r: f64) -> Self {
        self.guard_radius = r;
        self
    }
}

fn check_run_args(x0: &[f64], dim: usize, n: usize, guard: f64) -> Result<()> {
    if x0.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: x0.len() });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("number of iterations must be >= 1".into()));
    }
    if !(guard > norm(x0)) {
        return Err(Error::InvalidArgument(format!(
            "guard radius {guard} must exceed the initial norm {}",
            norm(x0)
        )));
    }
    Ok(())
}

/// Iterates the recursion `n` times, or until `‖x_i‖` exceeds the guard
/// radius (recorded as [`RunStatus::Escaped`]).
pub fn run_sa<H: SetValuedMap + ?Sized>(x0: &[f64], h: &H, opts: &SaOptions, n: usize, seed: u64) -> Result<Trajectory> {
    check_run_args(x0, h.dim(), n, opts.guard_radius)?;
    let mut rng = rng_from_seed(seed);
    let mut traj = Trajectory::with_capacity(x0.to_vec(), seed, n);
    let mut x = x0.to_vec();
    for i in 0..n {
        let delta = opts.delta.delta(i);
        let step = sa_step(&x, i, h, &opts.schedule, &opts.noise, delta, opts.rule, &mut rng);
        if step.x_next.iter().any(|v| !v.is_finite()) {
            traj.status = RunStatus::Escaped { step: i + 1, norm: f64::INFINITY };
            break;
        }
        traj.push(&step.x_next, opts.schedule.step(i), delta, &step.eta);
        let r = norm(&step.x_next);
        x = step.x_next;
        if r > opts.guard_radius {
            traj.status = RunStatus::Escaped { step: i + 1, norm: r };
            break;
        }
    }
    Ok(traj)
}

/// Stochastic subgradient descent `x_{i+1} ∈ x_i - ε_i ∂f(x_i) + ε_i η_{i+1}`
/// (run with `δ_i = 0` regardless of `opts.delta`).
pub fn run_sgd(f: &MaxOfSmooth, x0: &[f64], opts: &SaOptions, n: usize, seed: u64) -> Result<Trajectory> {
    let opts = SaOptions { delta: DeltaSchedule::Zero, ..*opts };
    run_sa(x0, &NegSubdifferential(f.clone()), &opts, n, seed)
}

/// Heavy-ball options: two step schedules plus shared noise/selection/guard.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShbOptions {
    pub alpha: StepSchedule,
    pub beta: StepSchedule,
    pub noise: NoiseModel,
    pub rule: SelectionRule,
    pub guard_radius: f64,
}

impl ShbOptions {
    /// `lim α_i/β_i`, the `c` of the heavy-ball map.
    pub fn ratio(&self) -> Result<f64> {
        schedule_ratio_limit(&self.alpha, &self.beta).ok_or_else(|| {
            Error::InvalidArgument("alpha_i/beta_i has no positive finite limit".into())
        })
    }

    /// `(α'_i, β'_i)` of the single-variable form
    /// `q_{i+1} = q_i + β'_i(-g_i + η_{i+1}) + α'_i (q_i - q_{i-1})`, `i ≥ 1`.
    pub fn single_line_coefficients(&self, i: usize) -> (f64, f64) {
        assert!(i >= 1, "single-line coefficients start at i = 1");
        let (a, a_prev, b) = (self.alpha.step(i), self.alpha.step(i - 1), self.beta.step(i));
        (a / a_prev * (1.0 - b), a * b)
    }
}

/// Stochastic heavy ball on `x = (q, p)`:
/// `p_{i+1} = (1-β_i) p_i - β_i g_i + β_i η_{i+1}`, `q_{i+1} = q_i + α_i p_{i+1}`.
///
/// The trajectory is recorded in recursion form with `ε_i = β_i`, noise
/// `(0, η_{i+1})` and `δ_i = ‖(α_i/β_i) p_{i+1} - c p_i‖`, so that
/// `v_{i+1} - η_{i+1} ∈ H^{δ_i}(x_i)` for the [`HeavyBallMap`](crate::setvalued::HeavyBallMap).
pub fn run_shb(
    f: &MaxOfSmooth,
    q0: &[f64],
    p0: &[f64],
    opts: &ShbOptions,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    let m = f.dim();
    if p0.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: p0.len() });
    }
    let c = opts.ratio()?;
    let x0: Vec<f64> = q0.iter().chain(p0).copied().collect();
    check_run_args(&x0, 2 * m, n, opts.guard_radius)?;
    let mut rng = rng_from_seed(seed);
    let mut traj = Trajectory::with_capacity(x0.clone(), seed, n);
    let mut q = q0.to_vec();
    let mut p = p0.to_vec();
    let mut eta_full = vec![0.0; 2 * m];
    for i in 0..n {
        let (a, b) = (opts.alpha.step(i), opts.beta.step(i));
        let g = select_from(&f.subdifferential(&q), opts.rule, &mut rng);
        let eta = opts.noise.sample(m, &mut rng);
        let p_next: Vec<f64> = (0..m).map(|k| (1.0 - b) * p[k] - b * g[k] + b * eta[k]).collect();
        let q_next: Vec<f64> = (0..m).map(|k| q[k] + a * p_next[k]).collect();
        let delta = (0..m)
            .map(|k| {
                let d = a / b * p_next[k] - c * p[k];
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let x_next: Vec<f64> = q_next.iter().chain(&p_next).copied().collect();
        if x_next.iter().any(|v| !v.is_finite()) {
            traj.status = RunStatus::Escaped { step: i + 1, norm: f64::INFINITY };
            break;
        }
        eta_full[m..].copy_from_slice(&eta);
        traj.push(&x_next, b, delta, &eta_full);
        q = q_next;
        p = p_next;
        let r = norm(&x_next);
        if r > opts.guard_radius {
            traj.status = RunStatus::Escaped { step: i + 1, norm: r };
            break;
        }
    }
    Ok(traj)
}

/// The same heavy-ball iterates computed through the single-variable
/// recursion in `q` with coefficients `(α'_i, β'_i)`. Returns `q_0..q_n`.
/// Uses the same random stream as [`run_shb`], so equal seeds give the
/// same selections and noises.
pub fn run_shb_single_line(
    f: &MaxOfSmooth,
    q0: &[f64],
    p0: &[f64],
    opts: &ShbOptions,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let m = f.dim();
    if q0.len() != m || p0.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: q0.len().max(p0.len()) });
    }
    let mut rng = rng_from_seed(seed);
    let mut qs = Vec::with_capacity(n + 1);
    qs.push(q0.to_vec());
    for i in 0..n {
        let q = &qs[i];
        let g = select_from(&f.subdifferential(q), opts.rule, &mut rng);
        let eta = opts.noise.sample(m, &mut rng);
        let next: Vec<f64> = if i == 0 {
            let (a, b) = (opts.alpha.step(0), opts.beta.step(0));
            (0..m).map(|k| q[k] + a * ((1.0 - b) * p0[k] - b * g[k] + b * eta[k])).collect()
        } else {
            let (ap, bp) = opts.single_line_coefficients(i);
            let prev = &qs[i - 1];
            (0..m).map(|k| q[k] + bp * (-g[k] + eta[k]) + ap * (q[k] - prev[k])).collect()
        };
        qs.push(next);
    }
    Ok(qs)
}

/// Step size of fictitious play after `n` stages when `ξ_0` counts as the
/// first play: `ξ_{n+1} = ξ_n + (x_{n+1} - ξ_n)/(n+2)`.
pub fn fictitious_play_step(n: usize) -> f64 {
    1.0 / (n as f64 + 2.0)
}

/// Fictitious play: at each stage every player draws a pure action uniformly
/// from its best-response vertices against the current average `ξ_n`, and
/// `ξ_n` is the running average of `ξ_0, x_1, …, x_n`.
pub fn run_fictitious_play(game: &Game, xi0: &[f64], n: usize, seed: u64) -> Result<Trajectory> {
    game.check_profile(xi0)?;
    if n == 0 {
        return Err(Error::InvalidArgument("number of stages must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let dim = game.profile_dim();
    let mut traj = Trajectory::with_capacity(xi0.to_vec(), seed, n);
    let mut sum = xi0.to_vec();
    let mut xi = xi0.to_vec();
    let zeros = vec![0.0; dim];
    let mut play = vec![0.0; dim];
    for stage in 0..n {
        play.iter_mut().for_each(|v| *v = 0.0);
        for player in 0..game.players() {
            let a = game.strategy_draw(player, &xi, &mut rng)?;
            play[game.offset(player) + a] = 1.0;
        }
        for (s, p) in sum.iter_mut().zip(&play) {
            *s += p;
        }
        let denom = stage as f64 + 2.0;
        let next: Vec<f64> = sum.iter().map(|s| s / denom).collect();
        traj.push(&next, fictitious_play_step(stage), 0.0, &zeros);
        xi = next;
    }
    Ok(traj)
}
