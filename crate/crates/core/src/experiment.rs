//! Batch experiments: JSON configuration, seeded runs with geometric
//! checkpoints, diagnostics and CSV/JSON artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{
    heavy_ball_violations, run_fictitious_play, run_sa, run_sgd, run_shb, schedule_ratio_limit, DeltaSchedule,
    NoiseModel, RunStatus, SaOptions, ShbOptions, StepSchedule, Trajectory,
};
use crate::error::{Error, Result};
use crate::games::{Game, GameDocument};
use crate::geometry::Polytope;
use crate::linalg::norm;
use crate::occupation::{
    essential_accumulation_estimate, interpolated_residual, interpolation_bound, Cell, OccupationMeasure,
    OscillationStatistic,
};
use crate::setvalued::{FnMap, HeavyBallMap, MaxOfSmooth, NegSubdifferential, SelectionRule, SetValuedMap};
use crate::testfn::{default_weights, BankSpec, Weight};

/// What is being simulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Problem {
    /// Subgradient descent on a named max-of-smooth function.
    Sgd {
        function: String,
        #[serde(default = "one")]
        dim: usize,
    },
    /// Stochastic heavy ball with schedules `α_i`, `β_i`.
    Shb {
        function: String,
        #[serde(default = "one")]
        dim: usize,
        alpha: StepSchedule,
        beta: StepSchedule,
    },
    FictitiousPlay { game: GameSpec },
    /// A named built-in map run through the generic recursion: `decay`
    /// (`H(x) = {-x}`) or `rotation` (`H(x, y) = {(-y, x)}`).
    CustomMap {
        name: String,
        #[serde(default = "one")]
        dim: usize,
    },
}

fn one() -> usize {
    1
}

/// A built-in game name or an inline game document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GameSpec {
    Named(String),
    Inline(GameDocumentSpec),
}

/// Serializable mirror of [`GameDocument`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameDocumentSpec {
    pub players: usize,
    pub action_counts: Vec<usize>,
    pub payoff_tensors: Vec<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl GameSpec {
    pub fn build(&self) -> Result<Game> {
        match self {
            GameSpec::Named(n) => Game::builtin(n),
            GameSpec::Inline(d) => Game::from_document(&GameDocument {
                players: d.players,
                action_counts: d.action_counts.clone(),
                payoff_tensors: d.payoff_tensors.clone(),
                name: d.name.clone(),
            }),
        }
    }
}

impl Problem {
    pub fn dim(&self) -> Result<usize> {
        Ok(match self {
            Problem::Sgd { dim, .. } | Problem::CustomMap { dim, .. } => *dim,
            Problem::Shb { dim, .. } => 2 * dim,
            Problem::FictitiousPlay { game } => game.build()?.profile_dim(),
        })
    }

    pub fn label(&self) -> String {
        match self {
            Problem::Sgd { function, dim } => format!("sgd({function}, n={dim})"),
            Problem::Shb { function, dim, .. } => format!("shb({function}, n={dim})"),
            Problem::FictitiousPlay { game } => match game {
                GameSpec::Named(n) => format!("fictitious_play({n})"),
                GameSpec::Inline(d) => format!("fictitious_play({})", d.name.as_deref().unwrap_or("inline")),
            },
            Problem::CustomMap { name, dim } => format!("custom_map({name}, n={dim})"),
        }
    }

    /// The map `H` whose inclusion the recursion tracks.
    pub fn map(&self) -> Result<Arc<dyn SetValuedMap>> {
        Ok(match self {
            Problem::Sgd { function, dim } => Arc::new(NegSubdifferential(MaxOfSmooth::by_name(function, *dim)?)),
            Problem::Shb { function, dim, alpha, beta } => {
                let c = schedule_ratio_limit(alpha, beta)
                    .ok_or_else(|| Error::InvalidArgument("alpha_i/beta_i has no positive finite limit".into()))?;
                Arc::new(HeavyBallMap::new(MaxOfSmooth::by_name(function, *dim)?, c))
            }
            Problem::FictitiousPlay { game } => Arc::new(game.build()?.map()),
            Problem::CustomMap { name, dim } => Arc::new(custom_map(name, *dim)?),
        })
    }

    pub fn default_x0(&self) -> Result<Vec<f64>> {
        Ok(match self {
            Problem::Sgd { dim, .. } | Problem::CustomMap { dim, .. } => vec![1.0; *dim],
            Problem::Shb { dim, .. } => {
                let mut x = vec![1.0; *dim];
                x.extend(vec![0.0; *dim]);
                x
            }
            Problem::FictitiousPlay { game } => {
                let g = game.build()?;
                let mut x = vec![0.0; g.profile_dim()];
                for p in 0..g.players() {
                    x[g.offset(p)] = 1.0;
                }
                x
            }
        })
    }
}

/// Built-in maps for `custom_map` problems.
pub fn custom_map(name: &str, dim: usize) -> Result<FnMap> {
    match name {
        "decay" => Ok(FnMap::new(dim, |x| Polytope::singleton(x.iter().map(|v| -v).collect())).with_growth_bound(1.0)),
        "rotation" if dim == 2 => Ok(FnMap::new(2, |x| Polytope::singleton(vec![-x[1], x[0]])).with_growth_bound(1.0)),
        "rotation" => Err(Error::InvalidArgument("rotation map is two-dimensional".into())),
        other => Err(Error::InvalidArgument(format!("unknown custom map `{other}`"))),
    }
}

/// Which diagnostics to compute and with which parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub closed_residuals: bool,
    pub oscillation: bool,
    pub velocity_moment: bool,
    pub moment_order: f64,
    pub residence_grid: bool,
    pub residence_cell: f64,
    pub essential_accumulation: bool,
    pub ess_acc_cell: f64,
    pub ess_acc_threshold: f64,
    pub membership_gap: bool,
    /// Probe points; defaults to a grid over the occupied box.
    pub probes: Option<Vec<Vec<f64>>>,
    /// Kernel bandwidth; defaults to the plug-in rule.
    pub bandwidth: Option<f64>,
    pub circulation: bool,
    pub bank_degree: u32,
    pub bank_bumps: usize,
    pub bank_seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            closed_residuals: true,
            oscillation: true,
            velocity_moment: true,
            moment_order: 2.0,
            residence_grid: true,
            residence_cell: 0.05,
            essential_accumulation: true,
            ess_acc_cell: 0.02,
            ess_acc_threshold: 0.05,
            membership_gap: true,
            probes: None,
            bandwidth: None,
            circulation: true,
            bank_degree: 3,
            bank_bumps: 4,
            bank_seed: 0xba4c,
        }
    }
}

/// One experiment, as read from its JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: Problem,
    /// Step sizes `ε_i`; ignored for heavy ball and fictitious play.
    #[serde(default)]
    pub schedule: Option<StepSchedule>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub delta: DeltaSchedule,
    #[serde(default)]
    pub selection: SelectionRule,
    pub iterations: usize,
    #[serde(default = "default_guard")]
    pub guard_radius: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_checkpoint_base")]
    pub checkpoint_base: usize,
    /// Initial state; a problem-specific default otherwise.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    /// Treat any escaped run as a failure.
    #[serde(default)]
    pub strict: bool,
    /// Accept schedules and noise outside the convergence assumptions.
    #[serde(default)]
    pub non_conforming: bool,
    /// Write `trajectory.csv` every `trajectory_stride` steps; 0 disables it.
    #[serde(default = "one")]
    pub trajectory_stride: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_guard() -> f64 {
    1e3
}

fn default_checkpoint_base() -> usize {
    10_000
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// `N_0 2^k` for every `k` with `N_0 2^k ≤ N`, followed by `N`.
    pub fn checkpoints(&self) -> Vec<usize> {
        checkpoint_schedule(self.checkpoint_base, self.iterations)
    }

    pub fn initial_state(&self) -> Result<Vec<f64>> {
        match &self.x0 {
            Some(x) => Ok(x.clone()),
            None => self.problem.default_x0(),
        }
    }

    fn schedule_or_default(&self) -> StepSchedule {
        self.schedule.unwrap_or(StepSchedule::Power { a: 1.0, rho: 0.6 })
    }
}

pub fn checkpoint_schedule(base: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if base == 0 {
        return vec![n];
    }
    let mut k = base;
    while k <= n {
        out.push(k);
        k = match k.checked_mul(2) {
            Some(v) => v,
            None => break,
        };
    }
    if out.last() != Some(&n) {
        out.push(n);
    }
    out
}

/// Every violated requirement, each naming the assumption it breaks.
pub fn validate_config(cfg: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.name.is_empty() || cfg.name.contains(['/', '\\']) {
        out.push("name must be a non-empty path component".to_string());
    }
    if cfg.seeds.is_empty() {
        out.push("seeds must be non-empty".to_string());
    }
    if cfg.iterations == 0 {
        out.push("iterations must be >= 1".to_string());
    }
    if cfg.checkpoint_base == 0 || cfg.iterations < cfg.checkpoint_base {
        out.push(format!(
            "iterations = {} must be >= checkpoint_base = {} >= 1",
            cfg.iterations, cfg.checkpoint_base
        ));
    }
    let d = &cfg.diagnostics;
    if !(d.moment_order > 1.0) {
        out.push(format!("moment_order = {} must exceed 1", d.moment_order));
    }
    for (name, v) in [
        ("residence_cell", d.residence_cell),
        ("ess_acc_cell", d.ess_acc_cell),
        ("ess_acc_threshold", d.ess_acc_threshold),
    ] {
        if !(v > 0.0) {
            out.push(format!("{name} must be positive"));
        }
    }
    if let Some(h) = d.bandwidth {
        if !(h > 0.0) {
            out.push("bandwidth must be positive".to_string());
        }
    }
    let mut assumption = Vec::new();
    match &cfg.problem {
        Problem::Sgd { function, dim } => {
            if let Err(e) = MaxOfSmooth::by_name(function, *dim) {
                out.push(e.to_string());
            }
            assumption.extend(cfg.schedule_or_default().violations());
            assumption.extend(cfg.delta.violations());
        }
        Problem::CustomMap { name, dim } => {
            if let Err(e) = custom_map(name, *dim) {
                out.push(e.to_string());
            }
            assumption.extend(cfg.schedule_or_default().violations());
            assumption.extend(cfg.delta.violations());
        }
        Problem::Shb { function, dim, alpha, beta } => {
            if let Err(e) = MaxOfSmooth::by_name(function, *dim) {
                out.push(e.to_string());
            }
            assumption.extend(heavy_ball_violations(alpha, beta));
        }
        Problem::FictitiousPlay { game } => {
            if let Err(e) = game.build() {
                out.push(e.to_string());
            }
        }
    }
    if !matches!(cfg.problem, Problem::FictitiousPlay { .. }) {
        assumption.extend(cfg.noise.violations(d.moment_order.max(1.0 + f64::EPSILON)));
    }
    if cfg.non_conforming {
        out.extend(assumption.into_iter().filter(|v| v.contains("must be")));
    } else {
        out.extend(assumption);
    }
    if let (Ok(dim), Ok(x0)) = (cfg.problem.dim(), cfg.initial_state()) {
        if x0.len() != dim {
            out.push(format!("x0 has length {}, the problem has dimension {dim}", x0.len()));
        } else if !matches!(cfg.problem, Problem::FictitiousPlay { .. }) && !(cfg.guard_radius > norm(&x0)) {
            out.push(format!("guard_radius = {} must exceed |x0| = {}", cfg.guard_radius, norm(&x0)));
        } else if let Problem::FictitiousPlay { game } = &cfg.problem {
            if let Ok(g) = game.build() {
                if let Err(e) = g.check_profile(&x0) {
                    out.push(format!("x0: {e}"));
                }
            }
        }
        if let Some(p) = &d.probes {
            if p.iter().any(|q| q.len() != dim) {
                out.push(format!("every probe must have dimension {dim}"));
            }
        }
    }
    out
}

/// Parses and validates a JSON document.
pub fn validate_document(json: &str) -> Result<Vec<String>> {
    Ok(validate_config(&ExperimentConfig::from_json(json)?))
}

/// Runs the configured problem for one seed.
pub fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Trajectory> {
    let x0 = cfg.initial_state()?;
    let n = cfg.iterations;
    match &cfg.problem {
        Problem::Sgd { function, dim } => {
            let f = MaxOfSmooth::by_name(function, *dim)?;
            let opts = SaOptions::new(cfg.schedule_or_default())
                .noise(cfg.noise)
                .rule(cfg.selection)
                .guard_radius(cfg.guard_radius);
            run_sgd(&f, &x0, &opts, n, seed)
        }
        Problem::CustomMap { name, dim } => {
            let h = custom_map(name, *dim)?;
            let opts = SaOptions::new(cfg.schedule_or_default())
                .noise(cfg.noise)
                .delta(cfg.delta)
                .rule(cfg.selection)
                .guard_radius(cfg.guard_radius);
            run_sa(&x0, &h, &opts, n, seed)
        }
        Problem::Shb { function, dim, alpha, beta } => {
            let f = MaxOfSmooth::by_name(function, *dim)?;
            let opts = ShbOptions {
                alpha: *alpha,
                beta: *beta,
                noise: cfg.noise,
                rule: cfg.selection,
                guard_radius: cfg.guard_radius,
            };
            run_shb(&f, &x0[..*dim], &x0[*dim..], &opts, n, seed)
        }
        Problem::FictitiousPlay { game } => run_fictitious_play(&game.build()?, &x0, n, seed),
    }
}

/// Everything needed to recompute a checkpoint's diagnostics from its CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub dimension: usize,
    pub iteration: usize,
    pub total_weight: f64,
    pub seed: u64,
    pub problem: Problem,
    pub bank: BankSpec,
    pub weights: Vec<Weight>,
    pub probes: Vec<Vec<f64>>,
    pub bandwidth: Option<f64>,
    pub diagnostics: DiagnosticsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidenceEntry {
    pub cell: Vec<i64>,
    pub tau: f64,
}

/// Diagnostics of one occupation measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointReport {
    pub iteration: usize,
    pub total_weight: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_residuals: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_closed_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oscillation: Option<Vec<OscillationStatistic>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocity_moment: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residence: Option<Vec<ResidenceEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub membership_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circulation: Option<f64>,
}

/// Computes the enabled diagnostics of `m` under `meta`.
pub fn checkpoint_diagnostics(m: &OccupationMeasure, meta: &CheckpointMeta) -> Result<CheckpointReport> {
    let d = &meta.diagnostics;
    let mut rep = CheckpointReport {
        iteration: meta.iteration,
        total_weight: m.total_weight(),
        samples: m.len(),
        closed_residuals: None,
        max_closed_residual: None,
        oscillation: None,
        velocity_moment: None,
        residence: None,
        membership_gap: None,
        circulation: None,
    };
    if m.is_empty() {
        return Ok(rep);
    }
    if d.closed_residuals {
        let bank = meta.bank.build();
        let r: Vec<f64> = bank.iter().map(|g| m.closed_residual(g)).collect();
        rep.max_closed_residual = Some(r.iter().fold(0.0, |a: f64, b| a.max(b.abs())));
        rep.closed_residuals = Some(r);
    }
    if d.oscillation {
        rep.oscillation = Some(meta.weights.iter().map(|w| m.oscillation_statistic(|x| w.eval(x))).collect());
    }
    if d.velocity_moment {
        rep.velocity_moment = Some(m.velocity_moment(d.moment_order));
    }
    if d.residence_grid {
        rep.residence = Some(
            m.residence_grid(d.residence_cell).into_iter().map(|(cell, tau)| ResidenceEntry { cell, tau }).collect(),
        );
    }
    if d.membership_gap || d.circulation {
        let h = meta.problem.map()?;
        if d.membership_gap {
            let bw = meta.bandwidth.unwrap_or_else(|| m.bandwidth_rule());
            if bw > 0.0 {
                rep.membership_gap = match m.centroid_membership_gap(&*h, &meta.probes, bw) {
                    Ok(g) => Some(g.max_gap),
                    Err(Error::UndefinedEstimate) => None,
                    Err(e) => return Err(e),
                };
            }
        }
        if d.circulation {
            rep.circulation = Some(m.circulation(|x| h.evaluate(x).min_norm_point()));
        }
    }
    Ok(rep)
}

/// Grid of `k` points per axis over a box (dimension ≤ 3), or the box
/// centre and the midpoints of its faces otherwise.
pub fn default_probes(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    if n > 3 {
        let mut out = vec![center.clone()];
        for k in 0..n {
            for v in [lo[k], hi[k]] {
                let mut p = center.clone();
                p[k] = 0.5 * (p[k] + v);
                out.push(p);
            }
        }
        return out;
    }
    let per_axis = match n {
        1 => 9,
        2 => 5,
        _ => 3,
    };
    let mut out = vec![Vec::new()];
    for k in 0..n {
        let mut next = Vec::new();
        for p in &out {
            for j in 0..per_axis {
                let mut q: Vec<f64> = p.clone();
                q.push(lo[k] + (hi[k] - lo[k]) * j as f64 / (per_axis - 1) as f64);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Per-seed outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub experiment: String,
    pub problem: String,
    pub seed: u64,
    pub iterations_requested: usize,
    pub iterations_completed: usize,
    pub status: RunStatus,
    pub elapsed_clock: f64,
    pub final_state: Vec<f64>,
    pub bank: BankSpec,
    pub bank_labels: Vec<String>,
    pub weight_labels: Vec<String>,
    pub checkpoints: Vec<CheckpointReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpolated_residuals: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpolation_bounds: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub essential_accumulation: Option<Vec<Cell>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nash_distance_inf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nash_gap: Option<f64>,
}

/// A finished seed: the trajectory, its checkpoints and the summary.
pub struct SeedRun {
    pub trajectory: Trajectory,
    pub checkpoints: Vec<(OccupationMeasure, CheckpointMeta)>,
    pub summary: SeedSummary,
}

fn trajectory_box(traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    let n = traj.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for i in 0..=traj.len() {
        for (k, v) in traj.state(i).iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    (lo, hi)
}

/// Simulates one seed and computes every enabled diagnostic.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let traj = simulate(cfg, seed)?;
    let d = &cfg.diagnostics;
    let (lo, hi) = trajectory_box(&traj);
    let bank = BankSpec { lo: lo.clone(), hi: hi.clone(), degree: d.bank_degree, bumps: d.bank_bumps, seed: d.bank_seed };
    let functions = bank.build();
    let weights = default_weights(&lo, &hi);
    let probes = d.probes.clone().unwrap_or_else(|| default_probes(&lo, &hi));

    let mut checkpoints = Vec::new();
    let mut reports = Vec::new();
    let mut measure = OccupationMeasure::new(traj.dim());
    let mut done = 0;
    for &k in cfg.checkpoints().iter().filter(|&&k| k <= traj.len()) {
        measure.extend_from_trajectory(&traj, done..k);
        done = k;
        let meta = CheckpointMeta {
            dimension: traj.dim(),
            iteration: k,
            total_weight: measure.total_weight(),
            seed,
            problem: cfg.problem.clone(),
            bank: bank.clone(),
            weights: weights.clone(),
            probes: probes.clone(),
            bandwidth: d.bandwidth,
            diagnostics: d.clone(),
        };
        reports.push(checkpoint_diagnostics(&measure, &meta)?);
        checkpoints.push((measure.clone(), meta));
    }

    let (interp, bounds) = if d.closed_residuals && traj.elapsed() > 0.0 {
        let r = functions.iter().map(|g| interpolated_residual(&traj, g)).collect::<Result<Vec<_>>>()?;
        let b = (0..functions.len()).map(|k| interpolation_bound(&traj, functions.constant(k))).collect();
        (Some(r), Some(b))
    } else {
        (None, None)
    };
    let ess = if d.essential_accumulation && !checkpoints.is_empty() {
        let ms: Vec<OccupationMeasure> = checkpoints.iter().map(|(m, _)| m.clone()).collect();
        Some(essential_accumulation_estimate(&ms, d.ess_acc_cell, d.ess_acc_threshold)?)
    } else {
        None
    };
    let (nash_distance_inf, nash_gap) = match &cfg.problem {
        Problem::FictitiousPlay { game } => {
            let g = game.build()?;
            let last = traj.last_state();
            let dist = g.known_nash().map(|ne| crate::linalg::max_abs_diff(last, ne));
            (dist, Some(g.nash_gap(last)))
        }
        _ => (None, None),
    };
    let summary = SeedSummary {
        experiment: cfg.name.clone(),
        problem: cfg.problem.label(),
        seed,
        iterations_requested: cfg.iterations,
        iterations_completed: traj.len(),
        status: traj.status,
        elapsed_clock: traj.elapsed(),
        final_state: traj.last_state().to_vec(),
        bank: bank.clone(),
        bank_labels: functions.iter().map(|g| g.label()).collect(),
        weight_labels: weights.iter().map(Weight::label).collect(),
        checkpoints: reports,
        interpolated_residuals: interp,
        interpolation_bounds: bounds,
        essential_accumulation: ess,
        nash_distance_inf,
        nash_gap,
    };
    Ok(SeedRun { trajectory: traj, checkpoints, summary })
}

/// Experiment-level result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    /// Fraction of seeds whose iterates stayed within the guard radius.
    pub bounded_fraction: f64,
    pub runs: Vec<SeedSummary>,
}

impl ExperimentReport {
    pub fn any_escaped(&self) -> bool {
        self.runs.iter().any(|r| !r.status.is_completed())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_sha256: String,
    pub files: Vec<ManifestEntry>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex(&Sha256::digest(serde_json::to_vec(cfg).expect("config serializes")))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every seed (in parallel, on at most `jobs` threads when given) and
/// writes the artifacts under `out/<name>/`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: Option<usize>) -> Result<ExperimentReport> {
    let violations = validate_config(cfg);
    if !violations.is_empty() {
        return Err(Error::InvalidConfig(violations));
    }
    let root = out.join(&cfg.name);
    fs::create_dir_all(&root)?;
    let work = || -> Result<Vec<SeedSummary>> {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let run = run_seed(cfg, seed)?;
                write_seed(cfg, &root.join(seed.to_string()), &run)?;
                Ok(run.summary)
            })
            .collect()
    };
    let runs = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let bounded = runs.iter().filter(|r| r.status.is_completed()).count();
    let report = ExperimentReport {
        experiment: cfg.name.clone(),
        config_sha256: config_hash(cfg),
        seeds: cfg.seeds.clone(),
        bounded_fraction: bounded as f64 / runs.len() as f64,
        runs,
    };
    write_json(&root.join("summary.json"), &report)?;
    fs::write(root.join("config.json"), cfg.to_json())?;
    write_manifest(cfg, &root)?;
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_seed(cfg: &ExperimentConfig, dir: &Path, run: &SeedRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    if cfg.trajectory_stride > 0 {
        write_trajectory_csv(&run.trajectory, cfg.trajectory_stride, &dir.join("trajectory.csv"))?;
    }
    for (m, meta) in &run.checkpoints {
        save_checkpoint(m, meta, &dir.join(format!("checkpoint_{}.csv", meta.iteration)))?;
    }
    write_json(&dir.join("summary.json"), &run.summary)
}

fn write_manifest(cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut entries = Vec::new();
    for rel in files {
        if rel == "manifest.json" {
            continue;
        }
        let bytes = fs::read(root.join(&rel))?;
        entries.push(ManifestEntry { path: rel, bytes: bytes.len() as u64, sha256: hex(&Sha256::digest(&bytes)) });
    }
    let manifest = Manifest { experiment: cfg.name.clone(), config_sha256: config_hash(cfg), files: entries };
    write_json(&root.join("manifest.json"), &manifest)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Columns `i, t, eps, delta, x*, v*, eta*`; the final state has empty step
/// fields.
pub fn write_trajectory_csv(traj: &Trajectory, stride: usize, path: &Path) -> Result<()> {
    let n = traj.dim();
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    let mut header = vec!["i".to_string(), "t".into(), "eps".into(), "delta".into()];
    for prefix in ["x", "v", "eta"] {
        header.extend((0..n).map(|k| format!("{prefix}{k}")));
    }
    w.write_record(&header)?;
    let last = traj.len();
    let mut rows: Vec<usize> = (0..last).step_by(stride.max(1)).collect();
    rows.push(last);
    for i in rows {
        let mut rec = vec![i.to_string(), fmt_f64(traj.clock(i))];
        if i < last {
            rec.push(fmt_f64(traj.step(i)));
            rec.push(fmt_f64(traj.delta(i)));
            rec.extend(traj.state(i).iter().map(|v| fmt_f64(*v)));
            rec.extend(traj.velocity(i).iter().map(|v| fmt_f64(*v)));
            rec.extend(traj.noise(i).iter().map(|v| fmt_f64(*v)));
        } else {
            rec.extend([String::new(), String::new()]);
            rec.extend(traj.state(i).iter().map(|v| fmt_f64(*v)));
            rec.extend(std::iter::repeat_n(String::new(), 2 * n));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the samples as `x*, v*, weight` rows and `meta` to `<path>.json`.
pub fn save_checkpoint(m: &OccupationMeasure, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let n = m.dim();
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    let mut header: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
    header.extend((0..n).map(|k| format!("v{k}")));
    header.push("weight".into());
    w.write_record(&header)?;
    for j in 0..m.len() {
        let rec: Vec<String> =
            m.x(j).iter().chain(m.v(j)).chain(std::iter::once(&m.weight(j))).map(|v| fmt_f64(*v)).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_json(&sidecar_path(path), meta)
}

/// Reloads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(OccupationMeasure, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let n = meta.dimension;
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.len() != 2 * n + 1 {
        return Err(Error::DimensionMismatch { expected: 2 * n + 1, found: r.headers()?.len() });
    }
    let (mut xs, mut vs, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number `{s}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        xs.extend_from_slice(&vals[..n]);
        vs.extend_from_slice(&vals[n..2 * n]);
        ws.push(vals[2 * n]);
    }
    Ok((OccupationMeasure::from_samples(n, xs, vs, ws)?, meta))
}

/// Recomputes a checkpoint's diagnostics offline.
pub fn diagnose(path: &Path) -> Result<CheckpointReport> {
    let (m, meta) = load_checkpoint(path)?;
    checkpoint_diagnostics(&m, &meta)
}

/// Reads a per-seed summary written by [`run_experiment`].
pub fn load_summary(path: &Path) -> Result<SeedSummary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Residence entries keyed by cell, for lookups.
pub fn residence_map(entries: &[ResidenceEntry]) -> BTreeMap<Vec<i64>, f64> {
    entries.iter().map(|e| (e.cell.clone(), e.tau)).collect()
}
