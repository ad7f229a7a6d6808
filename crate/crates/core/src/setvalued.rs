//! Set-valued maps `H: R^n ⇉ R^n` with finitely generated convex values,
//! Clarke subdifferentials of max-of-smooth functions, δ-enlargements and
//! selection rules.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polytope;
use crate::linalg::{dist, norm};

/// A set-valued map whose value at every point is the convex hull of a
/// non-empty finite generator list.
///
/// `evaluate` must be a pure function of `x`.
pub trait SetValuedMap: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Polytope;

    /// Constant `C` with `‖g‖ ≤ C(1 + ‖x‖)` for every generator, if known.
    fn growth_bound(&self) -> Option<f64> {
        None
    }
}

impl<T: SetValuedMap + ?Sized> SetValuedMap for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64]) -> Polytope {
        (**self).evaluate(x)
    }
    fn growth_bound(&self) -> Option<f64> {
        (**self).growth_bound()
    }
}

impl<T: SetValuedMap + ?Sized> SetValuedMap for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64]) -> Polytope {
        (**self).evaluate(x)
    }
    fn growth_bound(&self) -> Option<f64> {
        (**self).growth_bound()
    }
}

type PolyFn = dyn Fn(&[f64]) -> Polytope + Send + Sync;

/// Closure-backed map.
#[derive(Clone)]
pub struct FnMap {
    dim: usize,
    f: Arc<PolyFn>,
    growth: Option<f64>,
}

impl FnMap {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> Polytope + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f), growth: None }
    }

    pub fn with_growth_bound(mut self, c: f64) -> Self {
        self.growth = Some(c);
        self
    }

    /// `H(x) = {A x + b}` for a row-major `n × n` matrix.
    pub fn affine(a: Vec<f64>, b: Vec<f64>) -> Self {
        let n = b.len();
        assert_eq!(a.len(), n * n, "affine map needs an n x n matrix");
        let growth = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(norm(&b));
        Self::new(n, move |x| {
            let y = (0..n)
                .map(|r| b[r] + (0..n).map(|c| a[r * n + c] * x[c]).sum::<f64>())
                .collect();
            Polytope::singleton(y)
        })
        .with_growth_bound(growth)
    }

    /// `H ≡ {c}`.
    pub fn constant(c: Vec<f64>) -> Self {
        let g = norm(&c);
        Self::new(c.len(), move |_| Polytope::singleton(c.clone())).with_growth_bound(g)
    }
}

impl fmt::Debug for FnMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnMap").field("dim", &self.dim).field("growth", &self.growth).finish()
    }
}

impl SetValuedMap for FnMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &[f64]) -> Polytope {
        (self.f)(x)
    }
    fn growth_bound(&self) -> Option<f64> {
        self.growth
    }
}

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A smooth scalar function with its gradient.
#[derive(Clone)]
pub struct SmoothPiece {
    value: Arc<ScalarFn>,
    gradient: Arc<VectorFn>,
}

impl SmoothPiece {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), gradient: Arc::new(gradient) }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }

    /// `x ↦ ⟨a, x⟩ + b`
    pub fn affine(a: Vec<f64>, b: f64) -> Self {
        let a2 = a.clone();
        Self::new(move |x| crate::linalg::dot(&a, x) + b, move |_| a2.clone())
    }
}

/// Default activity tolerance for max-of-smooth subdifferentials.
pub const ACTIVITY_TOL: f64 = 1e-8;

/// `f(x) = max_k f_k(x)` over smooth pieces. Its Clarke subdifferential is
/// the hull of the gradients of the pieces active within `activity_tol`.
#[derive(Clone)]
pub struct MaxOfSmooth {
    dim: usize,
    pieces: Vec<SmoothPiece>,
    activity_tol: f64,
    /// Lipschitz constant of `f` on bounded sets is not needed; this is the
    /// linear-growth constant of the gradients when known.
    growth: Option<f64>,
}

impl fmt::Debug for MaxOfSmooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MaxOfSmooth")
            .field("dim", &self.dim)
            .field("pieces", &self.pieces.len())
            .field("activity_tol", &self.activity_tol)
            .finish()
    }
}

impl MaxOfSmooth {
    pub fn new(dim: usize, pieces: Vec<SmoothPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("max-of-smooth needs at least one piece".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        Ok(Self { dim, pieces, activity_tol: ACTIVITY_TOL, growth: None })
    }

    pub fn with_activity_tol(mut self, tol: f64) -> Self {
        assert!(tol > 0.0, "activity tolerance must be positive");
        self.activity_tol = tol;
        self
    }

    pub fn with_growth_bound(mut self, c: f64) -> Self {
        self.growth = Some(c);
        self
    }

    /// `|x| = max(x, -x)` on the real line.
    pub fn abs() -> Self {
        Self::new(1, vec![SmoothPiece::affine(vec![1.0], 0.0), SmoothPiece::affine(vec![-1.0], 0.0)])
            .expect("two pieces")
            .with_growth_bound(1.0)
    }

    /// `max(0, x)` on the real line.
    pub fn relu() -> Self {
        Self::new(1, vec![SmoothPiece::affine(vec![0.0], 0.0), SmoothPiece::affine(vec![1.0], 0.0)])
            .expect("two pieces")
            .with_growth_bound(1.0)
    }

    /// `‖x‖²/2` on `R^n`.
    pub fn quadratic(n: usize) -> Self {
        Self::new(
            n,
            vec![SmoothPiece::new(
                |x| 0.5 * crate::linalg::norm_sq(x),
                |x| x.to_vec(),
            )],
        )
        .expect("one piece")
        .with_growth_bound(1.0)
    }

    /// `max_k x_k²` on `R^n`.
    pub fn max_of_squares(n: usize) -> Self {
        let pieces = (0..n)
            .map(|k| {
                SmoothPiece::new(
                    move |x| x[k] * x[k],
                    move |x| {
                        let mut g = vec![0.0; x.len()];
                        g[k] = 2.0 * x[k];
                        g
                    },
                )
            })
            .collect();
        Self::new(n, pieces).expect("n >= 1").with_growth_bound(2.0)
    }

    /// Looks up one of the named example functions.
    pub fn by_name(name: &str, dim: usize) -> Result<Self> {
        match name {
            "abs" if dim == 1 => Ok(Self::abs()),
            "relu" if dim == 1 => Ok(Self::relu()),
            "quadratic" if dim >= 1 => Ok(Self::quadratic(dim)),
            "max_squares" if dim >= 1 => Ok(Self::max_of_squares(dim)),
            _ => Err(Error::InvalidArgument(format!(
                "unknown function `{name}` in dimension {dim} (known: abs, relu [dim 1], quadratic, max_squares)"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[SmoothPiece] {
        &self.pieces
    }

    pub fn activity_tol(&self) -> f64 {
        self.activity_tol
    }

    pub fn growth_bound(&self) -> Option<f64> {
        self.growth
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.value(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn active_pieces(&self, x: &[f64]) -> Vec<usize> {
        let vals: Vec<f64> = self.pieces.iter().map(|p| p.value(x)).collect();
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        vals.iter()
            .enumerate()
            .filter(|(_, v)| **v >= top - self.activity_tol)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn subdifferential(&self, x: &[f64]) -> Polytope {
        let gens = self.active_pieces(x).into_iter().map(|k| self.pieces[k].gradient(x)).collect();
        Polytope::new(gens).expect("at least one active piece of consistent dimension")
    }

    /// Checks every piece gradient against central finite differences at
    /// `trials` random points of `[-radius, radius]^n`.
    pub fn validate_gradients<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        trials: usize,
        radius: f64,
        step: f64,
        tol: f64,
    ) -> std::result::Result<(), String> {
        for _ in 0..trials {
            let x: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-radius..=radius)).collect();
            for (k, p) in self.pieces.iter().enumerate() {
                let g = p.gradient(&x);
                if g.len() != self.dim {
                    return Err(format!("piece {k}: gradient has dimension {}", g.len()));
                }
                let fd = central_difference(|y| p.value(y), &x, step);
                let err = crate::linalg::max_abs_diff(&g, &fd);
                if err > tol * (1.0 + norm(&g)) {
                    return Err(format!("piece {k}: gradient mismatch {err:.3e} at {x:?}"));
                }
            }
        }
        Ok(())
    }
}

/// Central finite-difference gradient.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            y[k] = x[k] + step;
            let fp = f(&y);
            y[k] = x[k] - step;
            let fm = f(&y);
            y[k] = x[k];
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

pub fn clarke_subdifferential(f: &MaxOfSmooth, x: &[f64]) -> Polytope {
    f.subdifferential(x)
}

/// `H = ∂f`.
#[derive(Clone, Debug)]
pub struct Subdifferential(pub MaxOfSmooth);

impl SetValuedMap for Subdifferential {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn evaluate(&self, x: &[f64]) -> Polytope {
        self.0.subdifferential(x)
    }
    fn growth_bound(&self) -> Option<f64> {
        self.0.growth_bound()
    }
}

/// `H = -∂f`, the subgradient-descent map.
#[derive(Clone, Debug)]
pub struct NegSubdifferential(pub MaxOfSmooth);

impl SetValuedMap for NegSubdifferential {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn evaluate(&self, x: &[f64]) -> Polytope {
        self.0.subdifferential(x).negated()
    }
    fn growth_bound(&self) -> Option<f64> {
        self.0.growth_bound()
    }
}

/// Heavy-ball map on `(q, p) ∈ R^m × R^m`: `H(q, p) = (c p, -∂f(q) - p)`.
///
/// This is the map the recursion `q += α p', p' = (1-β) p - β g + β η`
/// actually tracks when `α = c β`; the Lyapunov function
/// `V(q, p) = f(q) + c ‖p‖²/2` decreases along it at rate `c ‖p‖²`.
#[derive(Clone, Debug)]
pub struct HeavyBallMap {
    pub f: MaxOfSmooth,
    pub c: f64,
}

impl HeavyBallMap {
    pub fn new(f: MaxOfSmooth, c: f64) -> Self {
        assert!(c > 0.0, "heavy-ball ratio must be positive");
        Self { f, c }
    }

    pub fn lyapunov(&self, x: &[f64]) -> f64 {
        let m = self.f.dim();
        self.f.value(&x[..m]) + 0.5 * self.c * crate::linalg::norm_sq(&x[m..])
    }
}

impl SetValuedMap for HeavyBallMap {
    fn dim(&self) -> usize {
        2 * self.f.dim()
    }
    fn evaluate(&self, x: &[f64]) -> Polytope {
        let m = self.f.dim();
        let (q, p) = x.split_at(m);
        let gens = self
            .f
            .subdifferential(q)
            .into_generators()
            .into_iter()
            .map(|g| {
                let mut out: Vec<f64> = p.iter().map(|v| self.c * v).collect();
                out.extend(g.iter().zip(p).map(|(gi, pi)| -gi - pi));
                out
            })
            .collect();
        Polytope::new(gens).expect("non-empty")
    }
    fn growth_bound(&self) -> Option<f64> {
        self.f.growth_bound().map(|g| g + 1.0 + self.c)
    }
}

/// How a single vector is chosen from `H(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    MinNorm,
    RandomVertex,
    #[default]
    RandomHull,
}

impl SelectionRule {
    pub const ALL: [SelectionRule; 3] =
        [SelectionRule::MinNorm, SelectionRule::RandomVertex, SelectionRule::RandomHull];

    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionRule::MinNorm => "min_norm",
            SelectionRule::RandomVertex => "random_vertex",
            SelectionRule::RandomHull => "random_hull",
        }
    }
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min_norm" => Ok(SelectionRule::MinNorm),
            "random_vertex" => Ok(SelectionRule::RandomVertex),
            "random_hull" => Ok(SelectionRule::RandomHull),
            other => Err(Error::UnknownSelectionRule(other.to_string())),
        }
    }
}

/// Picks one element of a polytope according to `rule`. Singletons are
/// returned without consuming randomness.
pub fn select_from<R: RngCore + ?Sized>(p: &Polytope, rule: SelectionRule, rng: &mut R) -> Vec<f64> {
    if p.len() == 1 {
        return p.generators()[0].clone();
    }
    match rule {
        SelectionRule::MinNorm => p.min_norm_point(),
        SelectionRule::RandomVertex => p.generators()[rng.random_range(0..p.len())].clone(),
        SelectionRule::RandomHull => {
            let mut w: Vec<f64> = (0..p.len()).map(|_| Exp1.sample(rng)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            p.combination(&w)
        }
    }
}

pub fn selection<H: SetValuedMap + ?Sized, R: RngCore + ?Sized>(
    h: &H,
    x: &[f64],
    rule: SelectionRule,
    rng: &mut R,
) -> Vec<f64> {
    select_from(&h.evaluate(x), rule, rng)
}

/// Uniform draw on the closed unit ball of `R^n`.
pub fn unit_ball_sample<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let r = norm(&g);
        if r > 0.0 {
            let radius = rng.random::<f64>().powf(1.0 / n as f64);
            return g.into_iter().map(|v| v * radius / r).collect();
        }
    }
}

/// Draws `y ∈ H^δ(x)` as `y = h + δ w`, `h ∈ H(x + δ u)`, with `u`, `w`
/// uniform on the unit ball.
pub fn enlargement_sample<H: SetValuedMap + ?Sized, R: RngCore + ?Sized>(
    h: &H,
    x: &[f64],
    delta: f64,
    rule: SelectionRule,
    rng: &mut R,
) -> Vec<f64> {
    debug_assert!(delta >= 0.0);
    if delta == 0.0 {
        return selection(h, x, rule, rng);
    }
    let n = x.len();
    let u = unit_ball_sample(n, rng);
    let z: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + delta * b).collect();
    let mut y = selection(h, &z, rule, rng);
    let w = unit_ball_sample(n, rng);
    crate::linalg::axpy(delta, &w, &mut y);
    y
}

const SLACK_SEED: u64 = 0x5eed_51ac;

/// Sampled estimate of `min_{‖z-x‖≤δ} d(y, H(z)) - δ`.
///
/// The candidate set is `z = x`, a deterministic grid of the ball when
/// `n ≤ 3`, `z_samples` seeded uniform draws, and a pattern-search polish of
/// the best candidate. A value `≤ 0` certifies `y ∈ H^δ(x)`; positive values
/// only bound the true slack from above.
pub fn enlargement_slack<H: SetValuedMap + ?Sized>(
    h: &H,
    x: &[f64],
    y: &[f64],
    delta: f64,
    z_samples: usize,
) -> f64 {
    let at = |z: &[f64]| h.evaluate(z).distance_to(y).expect("dimension of y matches H");
    let base = at(x);
    if delta <= 0.0 || base <= delta {
        return base - delta.max(0.0);
    }
    let n = x.len();
    let mut best = (base, x.to_vec());
    let consider = |z: Vec<f64>, best: &mut (f64, Vec<f64>)| {
        let d = at(&z);
        if d < best.0 {
            *best = (d, z);
        }
    };
    if n <= 3 {
        let ticks = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let total = ticks.len().pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let off: Vec<f64> = (0..n)
                .map(|_| {
                    let t = ticks[c % ticks.len()];
                    c /= ticks.len();
                    t
                })
                .collect();
            if norm(&off) <= 1.0 {
                consider(x.iter().zip(&off).map(|(a, o)| a + delta * o).collect(), &mut best);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SLACK_SEED);
    for _ in 0..z_samples.max(1) {
        let u = unit_ball_sample(n, &mut rng);
        consider(x.iter().zip(&u).map(|(a, o)| a + delta * o).collect(), &mut best);
        if best.0 <= delta {
            return best.0 - delta;
        }
    }
    // Pattern search inside the ball, starting from the best candidate.
    let mut step = 0.25 * delta;
    let mut iter = 0;
    while step > 1e-7 * delta && iter < 200 && best.0 > delta {
        iter += 1;
        let mut improved = false;
        for k in 0..n {
            for s in [step, -step] {
                let mut z = best.1.clone();
                z[k] += s;
                let off = dist(&z, x);
                if off > delta {
                    for (zi, xi) in z.iter_mut().zip(x) {
                        *zi = xi + (*zi - xi) * delta / off;
                    }
                }
                let d = at(&z);
                if d < best.0 {
                    best = (d, z);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best.0 - delta
}

/// Returns `true` when every generator of `H(x)` obeys the declared linear
/// growth bound. Maps without a bound pass vacuously.
pub fn satisfies_growth<H: SetValuedMap + ?Sized>(h: &H, x: &[f64]) -> bool {
    match h.growth_bound() {
        None => true,
        Some(c) => {
            let cap = c * (1.0 + norm(x)) * (1.0 + 1e-12);
            h.evaluate(x).generators().iter().all(|g| norm(g) <= cap)
        }
    }
}
