//! Convex polytopes in generator form and the primitives the rest of the
//! crate is built on: minimum-norm point, distance to the hull, support
//! values and membership.
//!
//! All distances are Euclidean. A [`Polytope`] stands for the convex hull of
//! its generator list; the list itself may contain redundant points.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq, solve_dense};

/// Wolfe certificate tolerance used throughout the crate.
pub const HULL_TOL: f64 = 1e-9;

/// The convex hull of a non-empty list of equal-dimension generators.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    dim: usize,
    generators: Vec<Vec<f64>>,
}

impl Polytope {
    pub fn new(generators: Vec<Vec<f64>>) -> Result<Self> {
        let first = generators.first().ok_or(Error::EmptyPolytope)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("generators must have dimension >= 1".into()));
        }
        if let Some(bad) = generators.iter().find(|g| g.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
        }
        Ok(Self { dim, generators })
    }

    pub fn singleton(point: Vec<f64>) -> Self {
        assert!(!point.is_empty(), "singleton polytope needs dimension >= 1");
        Self { dim: point.len(), generators: vec![point] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn into_generators(self) -> Vec<Vec<f64>> {
        self.generators
    }

    /// `{-g : g in generators}`.
    pub fn negated(&self) -> Self {
        Self {
            dim: self.dim,
            generators: self
                .generators
                .iter()
                .map(|g| g.iter().map(|v| -v).collect())
                .collect(),
        }
    }

    /// `{g + shift : g in generators}`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        self.check_dim(shift.len())?;
        Ok(Self {
            dim: self.dim,
            generators: self
                .generators
                .iter()
                .map(|g| g.iter().zip(shift).map(|(a, b)| a + b).collect())
                .collect(),
        })
    }

    /// Cartesian product: generators are all concatenations `(a, b)`.
    pub fn product(&self, other: &Polytope) -> Self {
        let mut generators = Vec::with_capacity(self.len() * other.len());
        for a in &self.generators {
            for b in &other.generators {
                let mut g = a.clone();
                g.extend_from_slice(b);
                generators.push(g);
            }
        }
        Self { dim: self.dim + other.dim, generators }
    }

    /// `Σ λ_k g_k` for barycentric weights `λ`.
    pub fn combination(&self, weights: &[f64]) -> Vec<f64> {
        debug_assert_eq!(weights.len(), self.len());
        let mut out = vec![0.0; self.dim];
        for (g, &w) in self.generators.iter().zip(weights) {
            if w != 0.0 {
                axpy(w, g, &mut out);
            }
        }
        out
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: n });
        }
        Ok(())
    }

    pub fn min_norm_point(&self) -> Vec<f64> {
        wolfe_min_norm(&self.generators, self.dim).point
    }

    /// Minimum-norm point together with barycentric weights over the
    /// (full, undeduplicated) generator list.
    pub fn min_norm_solution(&self) -> MinNormSolution {
        wolfe_min_norm(&self.generators, self.dim)
    }

    pub fn distance_to(&self, y: &[f64]) -> Result<f64> {
        self.check_dim(y.len())?;
        let shifted: Vec<Vec<f64>> = self
            .generators
            .iter()
            .map(|g| g.iter().zip(y).map(|(a, b)| a - b).collect())
            .collect();
        let d = norm(&wolfe_min_norm(&shifted, self.dim).point);
        Ok(if d <= HULL_TOL { 0.0 } else { d })
    }

    pub fn support_value(&self, direction: &[f64]) -> Result<f64> {
        self.check_dim(direction.len())?;
        if direction.iter().all(|&d| d == 0.0) {
            return Err(Error::ZeroDirection);
        }
        Ok(self
            .generators
            .iter()
            .map(|g| dot(g, direction))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> Result<bool> {
        Ok(self.distance_to(y)? <= tol)
    }
}

/// Output of the minimum-norm solver.
#[derive(Clone, Debug)]
pub struct MinNormSolution {
    pub point: Vec<f64>,
    pub weights: Vec<f64>,
    pub iterations: usize,
}

impl MinNormSolution {
    /// `min_g <p, g - p>`; non-negative (up to round-off) at the optimum.
    pub fn certificate(&self, generators: &[Vec<f64>]) -> f64 {
        let pp = norm_sq(&self.point);
        generators
            .iter()
            .map(|g| dot(&self.point, g) - pp)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn min_norm_point(p: &Polytope) -> Vec<f64> {
    p.min_norm_point()
}

pub fn distance_to_hull(y: &[f64], p: &Polytope) -> Result<f64> {
    p.distance_to(y)
}

pub fn support_value(p: &Polytope, direction: &[f64]) -> Result<f64> {
    p.support_value(direction)
}

/// Wolfe's minimum-norm-point algorithm: a corral of affinely independent
/// generators is grown by the most violating generator and shrunk by line
/// search whenever the affine minimizer leaves the simplex.
fn wolfe_min_norm(generators: &[Vec<f64>], dim: usize) -> MinNormSolution {
    let m = generators.len();
    if m == 1 {
        return MinNormSolution { point: generators[0].clone(), weights: vec![1.0], iterations: 0 };
    }

    // First occurrence of each distinct generator; duplicates break affine independence.
    let mut unique: Vec<usize> = Vec::with_capacity(m);
    for (k, g) in generators.iter().enumerate() {
        if !unique.iter().any(|&u| generators[u] == *g) {
            unique.push(k);
        }
    }

    let scale = generators.iter().map(|g| norm_sq(g)).fold(1.0, f64::max);
    let stop_tol = 1e-13 * scale;

    let start = *unique
        .iter()
        .min_by(|&&a, &&b| norm_sq(&generators[a]).total_cmp(&norm_sq(&generators[b])))
        .expect("non-empty");
    let mut corral = vec![start];
    let mut w = vec![1.0];
    let mut x = generators[start].clone();
    let max_iter = 50 * (m + dim) + 100;
    let mut iterations = 0;

    'major: while iterations < max_iter {
        iterations += 1;
        let xx = norm_sq(&x);
        let (j, gx) = unique
            .iter()
            .map(|&k| (k, dot(&x, &generators[k])))
            .fold((usize::MAX, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        if xx - gx <= stop_tol || corral.contains(&j) {
            break;
        }
        corral.push(j);
        w.push(0.0);

        let mut minor = 0;
        loop {
            minor += 1;
            if minor > corral.len() + 2 {
                break 'major;
            }
            let Some(lambda) = affine_minimizer(generators, &corral, dim, scale) else {
                // Numerically dependent corral: the new point cannot improve x.
                if corral.last() == Some(&j) && w.last() == Some(&0.0) {
                    corral.pop();
                    w.pop();
                }
                break 'major;
            };
            if lambda.iter().all(|&l| l > 1e-15) {
                w = lambda;
                x = combine(generators, &corral, &w, dim);
                break;
            }
            let mut theta = 1.0_f64;
            for (wk, lk) in w.iter().zip(&lambda) {
                if *lk <= 1e-15 {
                    let denom = wk - lk;
                    if denom > 0.0 {
                        theta = theta.min(wk / denom);
                    }
                }
            }
            for (wk, lk) in w.iter_mut().zip(&lambda) {
                *wk = (1.0 - theta) * *wk + theta * lk;
            }
            let before = corral.len();
            let mut keep_c = Vec::with_capacity(before);
            let mut keep_w = Vec::with_capacity(before);
            for (c, wk) in corral.iter().zip(&w) {
                if *wk > 1e-15 {
                    keep_c.push(*c);
                    keep_w.push(*wk);
                }
            }
            if keep_c.len() == before {
                // Line search made no progress; drop the smallest weight.
                let (drop, _) = w
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
                keep_c.remove(drop);
                keep_w.remove(drop);
            }
            if keep_c.is_empty() {
                break 'major;
            }
            let s: f64 = keep_w.iter().sum();
            keep_w.iter_mut().for_each(|v| *v /= s);
            corral = keep_c;
            w = keep_w;
            x = combine(generators, &corral, &w, dim);
        }
    }

    let mut weights = vec![0.0; m];
    for (c, wk) in corral.iter().zip(&w) {
        weights[*c] = *wk;
    }
    MinNormSolution { point: x, weights, iterations }
}

fn combine(generators: &[Vec<f64>], corral: &[usize], w: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (c, wk) in corral.iter().zip(w) {
        axpy(*wk, &generators[*c], &mut out);
    }
    out
}

/// Barycentric weights of the point of minimum norm in the affine hull of
/// the corral, or `None` when the corral is affinely dependent.
fn affine_minimizer(generators: &[Vec<f64>], corral: &[usize], dim: usize, scale: f64) -> Option<Vec<f64>> {
    let k = corral.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    let base = &generators[corral[0]];
    let dirs: Vec<Vec<f64>> = corral[1..]
        .iter()
        .map(|&c| generators[c].iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    let r = k - 1;
    if r > dim {
        return None;
    }
    let mut gram = vec![0.0; r * r];
    let mut rhs = vec![0.0; r];
    for a in 0..r {
        for b in a..r {
            let v = dot(&dirs[a], &dirs[b]);
            gram[a * r + b] = v;
            gram[b * r + a] = v;
        }
        rhs[a] = -dot(&dirs[a], base);
    }
    let mu = solve_dense(&mut gram, &mut rhs, r, 1e-12 * scale)?;
    let mut lambda = Vec::with_capacity(k);
    lambda.push(1.0 - mu.iter().sum::<f64>());
    lambda.extend(mu);
    Some(lambda)
}
