//! Smooth test functions `g` for closed-measure residuals and bounded
//! weights `ψ` for oscillation statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm_sq};

/// A smooth scalar function with its gradient.
pub trait TestFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// A constant `C ≥ max(L/2, 2G)` over the box `[lo, hi]`, with `L` a
    /// Lipschitz constant of `∇g` and `G` a bound on `‖∇g‖` there.
    fn interpolation_constant(&self, lo: &[f64], hi: &[f64]) -> f64;

    fn label(&self) -> String;
}

/// `g(x) = ⟨a, x⟩`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub a: Vec<f64>,
}

impl Linear {
    pub fn new(a: Vec<f64>) -> Self {
        Self { a }
    }
}

impl TestFunction for Linear {
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.a, x)
    }
    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.a.clone()
    }
    fn interpolation_constant(&self, _lo: &[f64], _hi: &[f64]) -> f64 {
        2.0 * norm_sq(&self.a).sqrt()
    }
    fn label(&self) -> String {
        format!("linear{:?}", self.a)
    }
}

/// `g(x) = ½ Σ_k w_k (x_k - c_k)²`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub center: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadratic {
    pub fn new(center: Vec<f64>, weights: Vec<f64>) -> Self {
        assert_eq!(center.len(), weights.len());
        Self { center, weights }
    }
}

impl TestFunction for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x
            .iter()
            .zip(&self.center)
            .zip(&self.weights)
            .map(|((a, c), w)| w * (a - c) * (a - c))
            .sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).zip(&self.weights).map(|((a, c), w)| w * (a - c)).collect()
    }
    fn interpolation_constant(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let lip = self.weights.iter().map(|w| w.abs()).fold(0.0, f64::max);
        let grad: f64 = (0..lo.len())
            .map(|k| {
                let far = (lo[k] - self.center[k]).abs().max((hi[k] - self.center[k]).abs());
                (self.weights[k] * far).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        (0.5 * lip).max(2.0 * grad)
    }
    fn label(&self) -> String {
        "quadratic".to_string()
    }
}

/// `g(x) = Π_k u_k^{α_k}` with `u = (x - center)/half_width`, so that `u`
/// ranges over `[-1, 1]^n` on the bank's box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub exponents: Vec<u32>,
}

impl Monomial {
    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).zip(&self.half_width).map(|((a, c), s)| (a - c) / s).collect()
    }
}

impl TestFunction for Monomial {
    fn value(&self, x: &[f64]) -> f64 {
        self.scaled(x).iter().zip(&self.exponents).map(|(u, &a)| u.powi(a as i32)).product()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let u = self.scaled(x);
        (0..u.len())
            .map(|k| {
                let a = self.exponents[k];
                if a == 0 {
                    return 0.0;
                }
                let mut p = a as f64 * u[k].powi(a as i32 - 1) / self.half_width[k];
                for (l, (ul, &al)) in u.iter().zip(&self.exponents).enumerate() {
                    if l != k {
                        p *= ul.powi(al as i32);
                    }
                }
                p
            })
            .collect()
    }

    fn interpolation_constant(&self, lo: &[f64], hi: &[f64]) -> f64 {
        // Bound |u_k| by the box image in scaled coordinates.
        let n = self.exponents.len();
        let umax: Vec<f64> = (0..n)
            .map(|k| {
                ((lo[k] - self.center[k]) / self.half_width[k])
                    .abs()
                    .max(((hi[k] - self.center[k]) / self.half_width[k]).abs())
                    .max(1.0)
            })
            .collect();
        let prod_except = |skip: &[usize], drop: &[u32]| -> f64 {
            (0..n)
                .map(|l| {
                    let mut e = self.exponents[l];
                    for (s, d) in skip.iter().zip(drop) {
                        if *s == l {
                            e = e.saturating_sub(*d);
                        }
                    }
                    umax[l].powi(e as i32)
                })
                .product()
        };
        let mut hess_sq = 0.0;
        let mut grad_sq = 0.0;
        for k in 0..n {
            let ak = self.exponents[k] as f64;
            let sk = self.half_width[k];
            grad_sq += (ak / sk * prod_except(&[k], &[1])).powi(2);
            for l in 0..n {
                let al = self.exponents[l] as f64;
                let sl = self.half_width[l];
                let entry = if k == l {
                    ak * (ak - 1.0).max(0.0) / (sk * sk) * prod_except(&[k], &[2])
                } else {
                    ak * al / (sk * sl) * prod_except(&[k, l], &[1, 1])
                };
                hess_sq += entry * entry;
            }
        }
        (0.5 * hess_sq.sqrt()).max(2.0 * grad_sq.sqrt())
    }

    fn label(&self) -> String {
        format!("monomial{:?}", self.exponents)
    }
}

/// `g(x) = exp(-‖x - c‖² / (2 r²))`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl TestFunction for GaussianBump {
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        (-r2 / (2.0 * self.radius * self.radius)).exp()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = self.value(x);
        let s = -g / (self.radius * self.radius);
        x.iter().zip(&self.center).map(|(a, c)| s * (a - c)).collect()
    }
    fn interpolation_constant(&self, _lo: &[f64], _hi: &[f64]) -> f64 {
        // Hessian eigenvalues are bounded by 1/r²; ‖∇g‖ peaks at e^{-1/2}/r.
        let r = self.radius;
        (0.5 / (r * r)).max(2.0 * (-0.5f64).exp() / r)
    }
    fn label(&self) -> String {
        format!("bump{:?}", self.center)
    }
}

/// Serializable description of a bank, sufficient to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub degree: u32,
    pub bumps: usize,
    pub seed: u64,
}

impl BankSpec {
    /// Default bank over a box: monomials up to degree 3 and four bumps.
    pub fn over_box(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi, degree: 3, bumps: 4, seed: 0xba4c }
    }

    pub fn build(&self) -> TestFunctionBank {
        TestFunctionBank::from_spec(self)
    }
}

/// Monomials of total degree `1..=degree` in box-scaled coordinates plus
/// randomized radial bumps (fixed seed).
pub struct TestFunctionBank {
    spec: BankSpec,
    functions: Vec<Box<dyn TestFunction>>,
}

impl TestFunctionBank {
    pub fn from_spec(spec: &BankSpec) -> Self {
        let n = spec.lo.len();
        let center: Vec<f64> = spec.lo.iter().zip(&spec.hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let half: Vec<f64> = spec
            .lo
            .iter()
            .zip(&spec.hi)
            .map(|(l, h)| {
                let w = 0.5 * (h - l);
                if w > 0.0 {
                    w
                } else {
                    1.0
                }
            })
            .collect();
        let mut functions: Vec<Box<dyn TestFunction>> = Vec::new();
        for exps in exponent_tuples(n, spec.degree) {
            functions.push(Box::new(Monomial { center: center.clone(), half_width: half.clone(), exponents: exps }));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let scale = half.iter().copied().fold(0.0, f64::max);
        for _ in 0..spec.bumps {
            let c: Vec<f64> = (0..n).map(|k| center[k] + half[k] * rng.random_range(-1.0..=1.0)).collect();
            let r = scale * rng.random_range(0.1..=0.5);
            functions.push(Box::new(GaussianBump { center: c, radius: r }));
        }
        Self { spec: spec.clone(), functions }
    }

    pub fn spec(&self) -> &BankSpec {
        &self.spec
    }

    pub fn functions(&self) -> &[Box<dyn TestFunction>] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn TestFunction> {
        self.functions.iter().map(|f| f.as_ref())
    }

    /// Interpolation constant of function `k` over the bank's box.
    pub fn constant(&self, k: usize) -> f64 {
        self.functions[k].interpolation_constant(&self.spec.lo, &self.spec.hi)
    }

    /// Checks every gradient against central differences at random points of
    /// the box.
    pub fn validate_gradients(&self, trials: usize, tol: f64) -> std::result::Result<(), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ 0xfd);
        let n = self.spec.lo.len();
        for _ in 0..trials {
            let x: Vec<f64> = (0..n)
                .map(|k| {
                    let (l, h) = (self.spec.lo[k], self.spec.hi[k]);
                    if h > l {
                        rng.random_range(l..=h)
                    } else {
                        l
                    }
                })
                .collect();
            for f in &self.functions {
                let step = 1e-6 * (1.0 + self.spec.hi.iter().chain(&self.spec.lo).fold(0.0f64, |a, b| a.max(b.abs())));
                let fd = crate::setvalued::central_difference(|y| f.value(y), &x, step);
                let g = f.gradient(&x);
                let err = crate::linalg::max_abs_diff(&fd, &g);
                let scale = 1.0 + g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                if err > tol * scale {
                    return Err(format!("{}: gradient error {err:.3e} at {x:?}", f.label()));
                }
            }
        }
        Ok(())
    }
}

/// All exponent tuples of length `n` with total degree in `1..=degree`.
fn exponent_tuples(n: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            if cur.iter().sum::<u32>() > 0 {
                out.push(cur.clone());
            }
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, degree, &mut Vec::new(), &mut out);
    out
}

/// Bounded continuous weights `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    Constant { value: f64 },
    /// `1 / (1 + exp(-(x_k - center)/scale))`
    Sigmoid { coord: usize, center: f64, scale: f64 },
    /// Smooth compactly supported bump, 1 at the centre, 0 outside the ball.
    Bump { center: Vec<f64>, radius: f64 },
}

impl Weight {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Constant { value } => *value,
            Weight::Sigmoid { coord, center, scale } => 1.0 / (1.0 + (-(x[*coord] - center) / scale).exp()),
            Weight::Bump { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / (radius * radius);
                if r2 < 1.0 {
                    (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Weight::Constant { value } => format!("constant({value})"),
            Weight::Sigmoid { coord, .. } => format!("sigmoid(x{coord})"),
            Weight::Bump { center, radius } => format!("bump({center:?},{radius})"),
        }
    }
}

/// Default weights over a box: the constant 1, one sigmoid per coordinate
/// and bumps at the box centre and at the origin.
pub fn default_weights(lo: &[f64], hi: &[f64]) -> Vec<Weight> {
    let n = lo.len();
    let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let width = lo.iter().zip(hi).map(|(l, h)| h - l).fold(0.0, f64::max).max(1e-6);
    let mut out = vec![Weight::Constant { value: 1.0 }];
    for (k, c) in center.iter().enumerate() {
        let s = 0.25 * (hi[k] - lo[k]).max(1e-6);
        out.push(Weight::Sigmoid { coord: k, center: *c, scale: s });
    }
    out.push(Weight::Bump { center: center.clone(), radius: 0.5 * width });
    out.push(Weight::Bump { center: vec![0.0; n], radius: 0.25 * width });
    out
}
