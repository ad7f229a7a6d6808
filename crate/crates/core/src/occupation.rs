//! Step-weighted occupation measures
//! `μ_i = Σ_{j≤i} ε_j δ_{(x_j, v_{j+1})} / Σ_{j≤i} ε_j` and the diagnostics
//! computed from them.
//!
//! Every query normalizes by the stored total weight, so the measure always
//! has unit mass. Sums run over samples in insertion order; two measures
//! holding the same sample list therefore give bit-identical answers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::setvalued::SetValuedMap;
use crate::testfn::TestFunction;

/// Samples kept in full before thinning kicks in.
pub const DEFAULT_CAPACITY: usize = 1_000_000;
const THIN_SEED: u64 = 0x7417_0e55;

#[derive(Clone, Debug)]
pub struct OccupationMeasure {
    dim: usize,
    xs: Vec<f64>,
    vs: Vec<f64>,
    weights: Vec<f64>,
    total_weight: f64,
    capacity: usize,
    thinned: bool,
    thin_rng: ChaCha8Rng,
}

impl PartialEq for OccupationMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.xs == other.xs
            && self.vs == other.vs
            && self.weights == other.weights
            && self.total_weight == other.total_weight
    }
}

impl OccupationMeasure {
    pub fn new(dim: usize) -> Self {
        Self::with_capacity_limit(dim, DEFAULT_CAPACITY)
    }

    pub fn with_capacity_limit(dim: usize, capacity: usize) -> Self {
        assert!(capacity >= 2, "capacity must allow at least two samples");
        Self {
            dim,
            xs: Vec::new(),
            vs: Vec::new(),
            weights: Vec::new(),
            total_weight: 0.0,
            capacity,
            thinned: false,
            thin_rng: ChaCha8Rng::seed_from_u64(THIN_SEED),
        }
    }

    /// Builds a measure from raw samples (e.g. a reloaded checkpoint).
    pub fn from_samples(dim: usize, xs: Vec<f64>, vs: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if xs.len() != n * dim || vs.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n * dim, found: xs.len().min(vs.len()) });
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("sample weights must be positive".into()));
        }
        let mut m = Self::with_capacity_limit(dim, DEFAULT_CAPACITY.max(n));
        m.total_weight = weights.iter().sum();
        m.xs = xs;
        m.vs = vs;
        m.weights = weights;
        Ok(m)
    }

    pub fn push(&mut self, x: &[f64], v: &[f64], weight: f64) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(v.len(), self.dim);
        if self.weights.len() >= self.capacity {
            self.thin();
        }
        self.xs.extend_from_slice(x);
        self.vs.extend_from_slice(v);
        self.weights.push(weight);
        self.total_weight += weight;
    }

    /// Adds the samples `(x_j, v_{j+1}, ε_j)` for `j` in `range`.
    pub fn extend_from_trajectory(&mut self, traj: &Trajectory, range: std::ops::Range<usize>) {
        for j in range {
            self.push(traj.state(j), traj.velocity(j), traj.step(j));
        }
    }

    /// Halves the sample count: adjacent pairs merge into one sample that
    /// carries their summed weight and one of the two points, chosen with
    /// probability proportional to weight.
    fn thin(&mut self) {
        let d = self.dim;
        let n = self.weights.len();
        let mut xs = Vec::with_capacity(self.xs.len() / 2 + d);
        let mut vs = Vec::with_capacity(self.vs.len() / 2 + d);
        let mut ws = Vec::with_capacity(n / 2 + 1);
        let mut k = 0;
        while k < n {
            if k + 1 < n {
                let (wa, wb) = (self.weights[k], self.weights[k + 1]);
                let pick = if self.thin_rng.random::<f64>() * (wa + wb) < wa { k } else { k + 1 };
                xs.extend_from_slice(&self.xs[pick * d..(pick + 1) * d]);
                vs.extend_from_slice(&self.vs[pick * d..(pick + 1) * d]);
                ws.push(wa + wb);
                k += 2;
            } else {
                xs.extend_from_slice(&self.xs[k * d..(k + 1) * d]);
                vs.extend_from_slice(&self.vs[k * d..(k + 1) * d]);
                ws.push(self.weights[k]);
                k += 1;
            }
        }
        self.xs = xs;
        self.vs = vs;
        self.weights = ws;
        self.thinned = true;
    }

    /// Concatenation of the two sample lists (then thinned if over capacity).
    pub fn merge(&self, other: &OccupationMeasure) -> Result<OccupationMeasure> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let mut out = OccupationMeasure::with_capacity_limit(self.dim, self.capacity.max(other.capacity));
        for m in [self, other] {
            for j in 0..m.len() {
                out.push(m.x(j), m.v(j), m.weights[j]);
            }
        }
        out.thinned |= self.thinned || other.thinned;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn is_thinned(&self) -> bool {
        self.thinned
    }

    pub fn x(&self, j: usize) -> &[f64] {
        &self.xs[j * self.dim..(j + 1) * self.dim]
    }

    pub fn v(&self, j: usize) -> &[f64] {
        &self.vs[j * self.dim..(j + 1) * self.dim]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn xs_flat(&self) -> &[f64] {
        &self.xs
    }

    pub fn vs_flat(&self) -> &[f64] {
        &self.vs
    }

    /// Coordinate-wise bounds of the sample positions.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for x in self.xs.chunks_exact(self.dim) {
            for k in 0..self.dim {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        Some((lo, hi))
    }

    /// `τ^U = Σ_{x_j ∈ U} ε_j / Σ ε_j`.
    pub fn residence_time(&self, region: &Region) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.xs.chunks_exact(self.dim).zip(&self.weights) {
            if region.contains(x) {
                acc += w;
            }
        }
        acc / self.total_weight
    }

    /// `∫ ⟨∇g(x), v⟩ dμ`.
    pub fn closed_residual(&self, g: &dyn TestFunction) -> f64 {
        self.circulation(|x| g.gradient(x))
    }

    /// `∫ ⟨ξ(x), v⟩ dμ` for a vector field `ξ`.
    pub fn circulation(&self, field: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for ((x, v), w) in self.xs.chunks_exact(d).zip(self.vs.chunks_exact(d)).zip(&self.weights) {
            acc += w * dot(&field(x), v);
        }
        acc / self.total_weight
    }

    /// `∫ ψ(x) v dμ`, plus the `ψ`-mass `∫ ψ(x) dμ` that normalizes the
    /// conditional form.
    pub fn oscillation_statistic(&self, psi: impl Fn(&[f64]) -> f64) -> OscillationStatistic {
        let d = self.dim;
        let mut avg = vec![0.0; d];
        let mut mass = 0.0;
        for ((x, v), w) in self.xs.chunks_exact(d).zip(self.vs.chunks_exact(d)).zip(&self.weights) {
            let s = w * psi(x);
            if s != 0.0 {
                axpy(s, v, &mut avg);
                mass += s;
            }
        }
        avg.iter_mut().for_each(|a| *a /= self.total_weight);
        OscillationStatistic { average: avg, psi_mass: mass / self.total_weight }
    }

    /// `∫ ‖v‖^q dμ`.
    pub fn velocity_moment(&self, q: f64) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for (v, w) in self.vs.chunks_exact(d).zip(&self.weights) {
            acc += w * norm(v).powf(q);
        }
        acc / self.total_weight
    }

    /// Plug-in bandwidth `1.06 σ̂ M^{-1/(4+n)}`, with `σ̂` the weighted
    /// sample deviation of positions averaged over coordinates.
    pub fn bandwidth_rule(&self) -> f64 {
        let d = self.dim;
        let mut mean = vec![0.0; d];
        for (x, w) in self.xs.chunks_exact(d).zip(&self.weights) {
            axpy(*w, x, &mut mean);
        }
        mean.iter_mut().for_each(|m| *m /= self.total_weight);
        let mut var = 0.0;
        for (x, w) in self.xs.chunks_exact(d).zip(&self.weights) {
            var += w * x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let sigma = (var / self.total_weight / d as f64).sqrt();
        let m = self.len() as f64;
        1.06 * sigma * m.powf(-1.0 / (4.0 + d as f64))
    }

    /// Nadaraya–Watson estimate of the centroid field with a Gaussian kernel.
    pub fn centroid_field_estimate(&self, x: &[f64], h: f64) -> Result<CentroidEstimate> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        let d = self.dim;
        let inv = 1.0 / (2.0 * h * h);
        let mut num = vec![0.0; d];
        let (mut den, mut den_sq, mut min_r2) = (0.0, 0.0, f64::INFINITY);
        for ((xj, v), w) in self.xs.chunks_exact(d).zip(self.vs.chunks_exact(d)).zip(&self.weights) {
            let r2: f64 = xj.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            min_r2 = min_r2.min(r2);
            let k = w * (-r2 * inv).exp();
            if k > 0.0 {
                axpy(k, v, &mut num);
                den += k;
                den_sq += k * k;
            }
        }
        if min_r2 > 25.0 * h * h || den <= 0.0 {
            return Err(Error::UndefinedEstimate);
        }
        num.iter_mut().for_each(|n| *n /= den);
        Ok(CentroidEstimate { value: num, kernel_mass: den / self.total_weight, effective_samples: den * den / den_sq })
    }

    /// `max_x d(v̂_μ(x), H(x))` over the probes where the estimator is
    /// defined.
    pub fn centroid_membership_gap<H: SetValuedMap + ?Sized>(
        &self,
        h_map: &H,
        probes: &[Vec<f64>],
        bandwidth: f64,
    ) -> Result<MembershipGap> {
        let mut per_probe = Vec::with_capacity(probes.len());
        let mut max_gap: Option<f64> = None;
        for p in probes {
            match self.centroid_field_estimate(p, bandwidth) {
                Ok(est) => {
                    let gap = h_map.evaluate(p).distance_to(&est.value)?;
                    max_gap = Some(max_gap.map_or(gap, |m: f64| m.max(gap)));
                    per_probe.push(Some(gap));
                }
                Err(Error::UndefinedEstimate) => per_probe.push(None),
                Err(e) => return Err(e),
            }
        }
        let max_gap = max_gap.ok_or(Error::UndefinedEstimate)?;
        Ok(MembershipGap { max_gap, per_probe })
    }

    /// Residence time of every occupied cell of the lattice `cell_size · Z^n`.
    pub fn residence_grid(&self, cell_size: f64) -> BTreeMap<Vec<i64>, f64> {
        let mut cells: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (x, w) in self.xs.chunks_exact(self.dim).zip(&self.weights) {
            *cells.entry(cell_index(x, cell_size)).or_insert(0.0) += w;
        }
        cells.values_mut().for_each(|v| *v /= self.total_weight);
        cells
    }
}

fn cell_index(x: &[f64], cell_size: f64) -> Vec<i64> {
    x.iter().map(|v| (v / cell_size).floor() as i64).collect()
}

/// Samples `(x_j, v_{j+1}, ε_j)` for every recorded step.
pub fn accumulate(traj: &Trajectory) -> OccupationMeasure {
    accumulate_prefix(traj, traj.len())
}

/// The measure `μ` built from the first `k` steps.
pub fn accumulate_prefix(traj: &Trajectory, k: usize) -> OccupationMeasure {
    let k = k.min(traj.len());
    let mut m = OccupationMeasure::with_capacity_limit(traj.dim(), DEFAULT_CAPACITY.max(2));
    m.extend_from_trajectory(traj, 0..k);
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationStatistic {
    pub average: Vec<f64>,
    pub psi_mass: f64,
}

impl OscillationStatistic {
    pub fn norm(&self) -> f64 {
        norm(&self.average)
    }

    /// The conditional average `∫ψ v dμ / ∫ψ dμ`, when the mass is positive.
    pub fn conditional(&self) -> Option<Vec<f64>> {
        (self.psi_mass > 0.0).then(|| self.average.iter().map(|a| a / self.psi_mass).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentroidEstimate {
    pub value: Vec<f64>,
    /// Normalized kernel mass `Σ ε_j K_j / Σ ε_j`.
    pub kernel_mass: f64,
    /// Kish effective sample size `(Σ w)² / Σ w²` of the kernel weights.
    pub effective_samples: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MembershipGap {
    pub max_gap: f64,
    pub per_probe: Vec<Option<f64>>,
}

/// Neighbourhoods used for residence times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Half-open box `lo ≤ x < hi`, so that adjacent boxes tile space.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
            }
            Region::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *v >= *l && *v < *h),
        }
    }
}

/// A lattice cell flagged as an essential accumulation candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: Vec<i64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Largest residence time over the inspected checkpoints.
    pub residence: f64,
}

impl Cell {
    /// Largest distance from `p` to a point of the cell.
    pub fn max_distance_to(&self, p: &[f64]) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(p)
            .map(|((l, h), c)| {
                let m = (c - l).abs().max((h - c).abs());
                m * m
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Cells of `cell_size · Z^n` whose residence time reaches `threshold` in
/// at least one of the last `⌈K/2⌉` checkpoints. This is a finite-horizon
/// stand-in for `lim sup_i τ_i^U > 0`.
pub fn essential_accumulation_estimate(
    checkpoints: &[OccupationMeasure],
    cell_size: f64,
    threshold: f64,
) -> Result<Vec<Cell>> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument("essential accumulation needs at least one checkpoint".into()));
    }
    if !(cell_size > 0.0) || !(threshold > 0.0) {
        return Err(Error::InvalidArgument("cell size and threshold must be positive".into()));
    }
    let k = checkpoints.len();
    let tail = k.div_ceil(2);
    let mut best: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    for m in &checkpoints[k - tail..] {
        if m.is_empty() {
            continue;
        }
        for (idx, tau) in m.residence_grid(cell_size) {
            if tau >= threshold {
                let e = best.entry(idx).or_insert(0.0);
                *e = e.max(tau);
            }
        }
    }
    Ok(best
        .into_iter()
        .map(|(index, residence)| {
            let lo: Vec<f64> = index.iter().map(|&i| i as f64 * cell_size).collect();
            let hi = index.iter().map(|&i| (i + 1) as f64 * cell_size).collect();
            Cell { index, lo, hi, residence }
        })
        .collect())
}

/// `(g(x_N) - g(x_0)) / t_N`: the time average of `⟨∇g(x(t)), x'(t)⟩` along
/// the piecewise-linear interpolation of the iterates.
pub fn interpolated_residual(traj: &Trajectory, g: &dyn TestFunction) -> Result<f64> {
    let t = traj.elapsed();
    if !(t > 0.0) {
        return Err(Error::ZeroElapsedClock);
    }
    Ok((g.value(traj.last_state()) - g.value(traj.state(0))) / t)
}

/// `C / t_N · Σ_j ε_j ‖v_{j+1}‖ min(1, ε_j ‖v_{j+1}‖)`, which bounds
/// `|closed_residual - interpolated_residual|` whenever
/// `C ≥ max(L/2, 2G)` for `L` a Lipschitz constant of `∇g` and `G` a bound
/// on `‖∇g‖` over the hull of the iterates.
pub fn interpolation_bound(traj: &Trajectory, c: f64) -> f64 {
    let t = traj.elapsed();
    if !(t > 0.0) {
        return 0.0;
    }
    let mut acc = 0.0;
    for j in 0..traj.len() {
        let e = traj.step(j);
        let s = e * norm(traj.velocity(j));
        acc += s * s.min(1.0);
    }
    c * acc / t
}
