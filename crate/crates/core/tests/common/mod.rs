//! Oracles and property checks shared by the integration and acceptance
//! suites. The oracles only use plain arithmetic, never the library code
//! they are compared against.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use sadi::engine::{
    rng_from_seed, run_fictitious_play, run_sa, run_sgd, DeltaSchedule, NoiseModel, RunStatus, SaOptions,
    StepSchedule, Trajectory,
};
use sadi::flow::{euler_di, lyapunov_check};
use sadi::games::Game;
use sadi::geometry::Polytope;
use sadi::occupation::{accumulate, interpolated_residual, interpolation_bound, OccupationMeasure, Region};
use sadi::setvalued::{
    clarke_subdifferential, enlargement_sample, enlargement_slack, selection, FnMap, HeavyBallMap, MaxOfSmooth,
    NegSubdifferential, SelectionRule, SetValuedMap,
};
use sadi::testfn::{BankSpec, Quadratic, TestFunction, Weight};

pub type Check = Result<(), TestCaseError>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($fmt)*)));
        }
    };
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn combo(gens: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let n = gens[0].len();
    (0..n).map(|k| gens.iter().zip(w).map(|(g, l)| l * g[k]).sum()).collect()
}

/// Minimizes `‖Σ λ_k g_k - y‖` over the simplex by grid search, refining
/// around the incumbent until the weight step reaches `1e-4`.
pub fn grid_min_distance(gens: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
    let m = gens.len();
    let eval = |w: &[f64]| -> f64 {
        let p = combo(gens, w);
        sq(&p.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    if m == 1 {
        return (eval(&[1.0]).sqrt(), gens[0].clone());
    }
    let mut best_w = vec![1.0 / m as f64; m];
    let mut best = eval(&best_w);
    let mut center = best_w.clone();
    let mut radius: f64 = 1.0;
    for step in [0.02f64, 2e-3, 2e-4, 1e-4] {
        let ticks = (radius / step).round() as i64;
        // Enumerate the first m-1 weights on the local grid; the last one closes the simplex.
        let mut idx = vec![-ticks; m - 1];
        loop {
            let mut w: Vec<f64> = idx.iter().zip(&center).map(|(&i, c)| c + i as f64 * step).collect();
            let rest = 1.0 - w.iter().sum::<f64>();
            if w.iter().all(|v| *v >= -1e-12) && rest >= -1e-12 {
                w.push(rest.max(0.0));
                let w: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
                let val = eval(&w);
                if val < best {
                    best = val;
                    best_w = w;
                }
            }
            let mut k = 0;
            loop {
                if k == m - 1 {
                    break;
                }
                idx[k] += 1;
                if idx[k] <= ticks {
                    break;
                }
                idx[k] = -ticks;
                k += 1;
            }
            if k == m - 1 {
                break;
            }
        }
        center = best_w.clone();
        radius = 3.0 * step;
    }
    (best.sqrt(), combo(gens, &best_w))
}

/// Continuous best-response dynamics `ξ' = b(ξ) - ξ` for a two-player
/// bimatrix game, Euler step `dt`. Returns the profiles at every step.
pub fn best_response_flow(u1: &[Vec<f64>], u2: &[Vec<f64>], xi0: &[f64], dt: f64, t_end: f64) -> Vec<Vec<f64>> {
    let k1 = u1.len();
    let k2 = u1[0].len();
    let argmax = |v: &[f64]| -> usize {
        let mut b = 0;
        for (i, x) in v.iter().enumerate() {
            if *x > v[b] {
                b = i;
            }
        }
        b
    };
    let mut xi = xi0.to_vec();
    let mut out = vec![xi.clone()];
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        let (x, y) = xi.split_at(k1);
        let p1: Vec<f64> = (0..k1).map(|a| (0..k2).map(|b| u1[a][b] * y[b]).sum()).collect();
        let p2: Vec<f64> = (0..k2).map(|b| (0..k1).map(|a| u2[a][b] * x[a]).sum()).collect();
        let (b1, b2) = (argmax(&p1), argmax(&p2));
        let mut next = xi.clone();
        for a in 0..k1 {
            next[a] += dt * (f64::from(a == b1) - xi[a]);
        }
        for b in 0..k2 {
            next[k1 + b] += dt * (f64::from(b == b2) - xi[k1 + b]);
        }
        xi = next;
        out.push(xi.clone());
    }
    out
}

pub fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut d = 0.0f64;
    for a in points {
        for b in points {
            d = d.max(sq(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>()).sqrt());
        }
    }
    d
}

/// Composite Simpson rule for `∫ ⟨∇g(x(t)), x'(t)⟩ dt / t_N` along the
/// piecewise-linear interpolation, `sub` panels per step.
pub fn quadrature_residual(traj: &Trajectory, g: &dyn TestFunction, sub: usize) -> f64 {
    let sub = sub + sub % 2;
    let mut total = 0.0;
    for j in 0..traj.len() {
        let (x, v, e) = (traj.state(j), traj.velocity(j), traj.step(j));
        let f = |s: f64| -> f64 {
            let p: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + b * s).collect();
            g.gradient(&p).iter().zip(v).map(|(a, b)| a * b).sum()
        };
        let h = e / sub as f64;
        let mut acc = f(0.0) + f(e);
        for k in 1..sub {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        total += acc * h / 3.0;
    }
    total / traj.elapsed()
}

pub fn example_maps(n: usize) -> Vec<(String, Box<dyn SetValuedMap>)> {
    let mut out: Vec<(String, Box<dyn SetValuedMap>)> = vec![
        ("-d quadratic".into(), Box::new(NegSubdifferential(MaxOfSmooth::quadratic(n)))),
        ("-d max_squares".into(), Box::new(NegSubdifferential(MaxOfSmooth::max_of_squares(n)))),
    ];
    if n == 1 {
        out.push(("-d abs".into(), Box::new(NegSubdifferential(MaxOfSmooth::abs()))));
        out.push(("-d relu".into(), Box::new(NegSubdifferential(MaxOfSmooth::relu()))));
        out.push(("heavy ball abs".into(), Box::new(HeavyBallMap::new(MaxOfSmooth::abs(), 1.0))));
    }
    out
}

pub fn functions(n: usize) -> Vec<MaxOfSmooth> {
    if n == 1 {
        vec![MaxOfSmooth::abs(), MaxOfSmooth::relu(), MaxOfSmooth::quadratic(1), MaxOfSmooth::max_of_squares(1)]
    } else {
        vec![MaxOfSmooth::quadratic(n), MaxOfSmooth::max_of_squares(n)]
    }
}

// ---------------------------------------------------------------- strategies

pub fn polytope_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=3).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, n), 1..=4))
}

pub fn point_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, n)
}

pub fn weights_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.001f64..1.0, m).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    })
}

pub fn rule_strategy() -> impl Strategy<Value = SelectionRule> {
    prop_oneof![
        Just(SelectionRule::MinNorm),
        Just(SelectionRule::RandomVertex),
        Just(SelectionRule::RandomHull)
    ]
}

/// Samples `(x, v, weight)` in dimension `n` with dyadic weights.
pub fn samples_strategy(n: usize, max: usize) -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>, f64)>> {
    proptest::collection::vec(
        (point_strategy(n), point_strategy(n), (1u32..64).prop_map(|k| k as f64 / 64.0)),
        1..=max,
    )
}

pub fn measure_from(n: usize, s: &[(Vec<f64>, Vec<f64>, f64)]) -> OccupationMeasure {
    let mut m = OccupationMeasure::new(n);
    for (x, v, w) in s {
        m.push(x, v, *w);
    }
    m
}

// ------------------------------------------------------------------- checks

/// Wolfe certificate `min_g ⟨p, g - p⟩ ≥ -1e-9`.
pub fn check_wolfe_certificate(gens: &[Vec<f64>]) -> Check {
    let p = Polytope::new(gens.to_vec()).unwrap();
    let sol = p.min_norm_solution();
    let point = &sol.point;
    let cert = gens
        .iter()
        .map(|g| point.iter().zip(g).map(|(a, b)| a * (b - a)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    ensure!(cert >= -1e-9, "certificate {cert} for {gens:?}");
    Ok(())
}

/// Convex combinations of generators are at distance 0.
pub fn check_combination_inside(gens: &[Vec<f64>], w: &[f64]) -> Check {
    let p = Polytope::new(gens.to_vec()).unwrap();
    let y = combo(gens, w);
    let d = p.distance_to(&y).unwrap();
    ensure!(d <= 1e-9, "distance {d} of {y:?} to hull of {gens:?}");
    Ok(())
}

/// Agreement with the grid-search oracle within 1e-3.
pub fn check_grid_oracle(gens: &[Vec<f64>], y: &[f64]) -> Check {
    let p = Polytope::new(gens.to_vec()).unwrap();
    let (d_grid, _) = grid_min_distance(gens, y);
    let d = p.distance_to(y).unwrap();
    ensure!((d - d_grid).abs() <= 1e-3, "distance {d} vs grid {d_grid} for {gens:?}, y={y:?}");
    let zero = vec![0.0; y.len()];
    let (_, q_grid) = grid_min_distance(gens, &zero);
    let q = p.min_norm_point();
    let err = q.iter().zip(&q_grid).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(err <= 1e-3, "min-norm point {q:?} vs grid {q_grid:?}");
    Ok(())
}

pub fn check_support_homogeneity(gens: &[Vec<f64>], d: &[f64]) -> Check {
    let p = Polytope::new(gens.to_vec()).unwrap();
    if d.iter().all(|v| *v == 0.0) {
        return Ok(());
    }
    let d2: Vec<f64> = d.iter().map(|v| 2.0 * v).collect();
    let (a, b) = (p.support_value(d).unwrap(), p.support_value(&d2).unwrap());
    ensure!(b == 2.0 * a, "support {b} != 2 * {a}");
    Ok(())
}

/// `enlargement_sample` at level δ lands inside `H^{δ'}` for `δ' ≥ δ`.
pub fn check_enlargement_monotone(x: &[f64], delta: f64, extra: f64, rule: SelectionRule, seed: u64) -> Check {
    let mut rng = rng_from_seed(seed);
    for (name, h) in example_maps(x.len()) {
        let xx: Vec<f64> = if h.dim() == x.len() { x.to_vec() } else { x.iter().chain(x).copied().collect() };
        let y = enlargement_sample(&*h, &xx, delta, rule, &mut rng);
        let s = enlargement_slack(&*h, &xx, &y, delta + extra, 64);
        ensure!(s <= 1e-9, "{name}: slack {s} at x={xx:?}, y={y:?}, delta={delta}, extra={extra}");
    }
    Ok(())
}

/// Support function of `∂f(x)` matches the finite-difference directional
/// derivative where one piece is active.
pub fn check_clarke_support(x: &[f64], d: &[f64]) -> Check {
    let nd = sq(d).sqrt();
    if nd < 1e-3 {
        return Ok(());
    }
    let d: Vec<f64> = d.iter().map(|v| v / nd).collect();
    for f in functions(x.len()) {
        if f.active_pieces(x).len() != 1 {
            continue;
        }
        let h = 1e-6;
        let plus: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - h * b).collect();
        // Skip points whose finite-difference stencil crosses a kink.
        if f.active_pieces(&plus) != f.active_pieces(x) || f.active_pieces(&minus) != f.active_pieces(x) {
            continue;
        }
        let fd = (f.value(&plus) - f.value(&minus)) / (2.0 * h);
        let s = clarke_subdifferential(&f, x).support_value(&d).unwrap();
        ensure!((s - fd).abs() <= 1e-4, "support {s} vs fd {fd} at {x:?}");
    }
    Ok(())
}

pub fn check_selection_in_hull(x: &[f64], rule: SelectionRule, seed: u64) -> Check {
    let mut rng = rng_from_seed(seed);
    for (name, h) in example_maps(x.len()) {
        let xx: Vec<f64> = if h.dim() == x.len() { x.to_vec() } else { x.iter().chain(x).copied().collect() };
        let y = selection(&*h, &xx, rule, &mut rng);
        let d = h.evaluate(&xx).distance_to(&y).unwrap();
        ensure!(d <= 1e-9, "{name}: selection {y:?} at distance {d}");
    }
    Ok(())
}

fn sa_run(x0: f64, sigma: f64, d: f64, rule: SelectionRule, n: usize, seed: u64) -> (Trajectory, FnMap) {
    // H(x) = -∂|x| as a generic map so that δ > 0 runs through the enlargement.
    let h = FnMap::new(1, |x| NegSubdifferential(MaxOfSmooth::abs()).evaluate(x));
    let opts = SaOptions::new(StepSchedule::Power { a: 0.5, rho: 0.7 })
        .noise(NoiseModel::Gaussian { sigma })
        .delta(DeltaSchedule::Power { d, sigma: 0.5 })
        .rule(rule);
    (run_sa(&[x0], &h, &opts, n, seed).unwrap(), h)
}

/// `v_{i+1} = (x_{i+1} - x_i)/ε_i` exactly, clock monotone from 0.
pub fn check_velocity_identity(x0: f64, sigma: f64, d: f64, rule: SelectionRule, seed: u64) -> Check {
    let (t, _) = sa_run(x0, sigma, d, rule, 300, seed);
    ensure!(t.clock(0) == 0.0, "clock starts at {}", t.clock(0));
    for i in 0..t.len() {
        let expect = (t.state(i + 1)[0] - t.state(i)[0]) / t.step(i);
        ensure!(t.velocity(i)[0] == expect, "step {i}: {} != {expect}", t.velocity(i)[0]);
        ensure!(t.clock(i + 1) > t.clock(i), "clock not increasing at {i}");
    }
    Ok(())
}

/// `v_{i+1} - η_{i+1} ∈ H^{δ_i}(x_i)` on every recorded step.
pub fn check_recorded_slack(x0: f64, sigma: f64, d: f64, rule: SelectionRule, seed: u64) -> Check {
    let (t, h) = sa_run(x0, sigma, d, rule, 300, seed);
    for i in 0..t.len() {
        let y = [t.velocity(i)[0] - t.noise(i)[0]];
        let s = enlargement_slack(&h, t.state(i), &y, t.delta(i), 64);
        ensure!(s <= 1e-9, "step {i}: slack {s}");
    }
    Ok(())
}

pub fn check_reproducible(x0: f64, seed: u64) -> Check {
    let f = MaxOfSmooth::abs();
    let opts = SaOptions::new(StepSchedule::Power { a: 1.0, rho: 0.6 }).noise(NoiseModel::Gaussian { sigma: 0.5 });
    let a = run_sgd(&f, &[x0], &opts, 500, seed).unwrap();
    let b = run_sgd(&f, &[x0], &opts, 500, seed).unwrap();
    ensure!(a == b, "trajectories differ for seed {seed}");
    Ok(())
}

/// Guard semantics: escaped at step i iff ‖x_i‖ > R.
pub fn check_escape_semantics(radius: f64, seed: u64) -> Check {
    let h = FnMap::affine(vec![0.5], vec![0.0]);
    let opts = SaOptions::new(StepSchedule::Constant { a: 1.0 }).noise(NoiseModel::Gaussian { sigma: 0.1 }).guard_radius(radius);
    let t = run_sa(&[1.0], &h, &opts, 200, seed).unwrap();
    let first = (1..=t.len()).find(|&i| t.state(i)[0].abs() > radius);
    match t.status {
        RunStatus::Escaped { step, norm } => {
            ensure!(first == Some(step) && step == t.len(), "escape at {step}, first exceed {first:?}");
            ensure!(norm == t.state(step)[0].abs(), "escape norm mismatch");
        }
        RunStatus::Completed => ensure!(first.is_none(), "exceeded radius without escape"),
    }
    Ok(())
}

/// Telescoping identity against Simpson quadrature, within 1e-8.
pub fn check_telescoping(x0: f64, center: f64, weight: f64, seed: u64) -> Check {
    let (t, _) = sa_run(x0, 0.5, 0.0, SelectionRule::RandomHull, 200, seed);
    let g = Quadratic::new(vec![center], vec![weight]);
    let exact = interpolated_residual(&t, &g).unwrap();
    let quad = quadrature_residual(&t, &g, 2);
    ensure!((exact - quad).abs() <= 1e-8, "{exact} vs quadrature {quad}");
    let direct = (g.value(t.last_state()) - g.value(t.state(0))) / t.elapsed();
    ensure!(exact == direct, "interpolated residual not bit-exact");
    Ok(())
}

/// `|closed - interpolated| ≤ bound + 1e-9` for every bank function.
pub fn check_sandwich(x0: f64, sigma: f64, seed: u64) -> Check {
    let (t, _) = sa_run(x0, sigma, 0.0, SelectionRule::RandomHull, 400, seed);
    let m = accumulate(&t);
    let (lo, hi) = m.bounding_box().unwrap();
    let lo = vec![lo[0].min(t.last_state()[0])];
    let hi = vec![hi[0].max(t.last_state()[0])];
    let bank = BankSpec::over_box(lo, hi).build();
    for (k, g) in bank.iter().enumerate() {
        let gap = (m.closed_residual(g) - interpolated_residual(&t, g).unwrap()).abs();
        let b = interpolation_bound(&t, bank.constant(k));
        ensure!(gap <= b + 1e-9, "{}: gap {gap} > bound {b}", g.label());
    }
    Ok(())
}

/// Total weight, merge-as-concatenation and normalized mass.
pub fn check_merge(n: usize, a: &[(Vec<f64>, Vec<f64>, f64)], b: &[(Vec<f64>, Vec<f64>, f64)]) -> Check {
    let ma = measure_from(n, a);
    let mb = measure_from(n, b);
    let merged = ma.merge(&mb).unwrap();
    let all: Vec<_> = a.iter().chain(b).cloned().collect();
    let cat = measure_from(n, &all);
    ensure!(merged == cat, "merge differs from concatenation");
    let sum: f64 = all.iter().map(|s| s.2).sum();
    ensure!((cat.total_weight() - sum).abs() <= 1e-12 * sum, "total weight {} vs {sum}", cat.total_weight());
    let everything = Region::Ball { center: vec![0.0; n], radius: 1e6 };
    ensure!(cat.residence_time(&everything) == 1.0, "mass is not 1");
    let g = Quadratic::new(vec![0.5; n], vec![1.0; n]);
    ensure!(merged.closed_residual(&g) == cat.closed_residual(&g), "query mismatch after merge");
    ensure!(merged.velocity_moment(2.0) == cat.velocity_moment(2.0), "moment mismatch after merge");
    Ok(())
}

/// Adjacent half-open boxes: residence of the union is the sum.
pub fn check_residence_additivity(n: usize, s: &[(Vec<f64>, Vec<f64>, f64)], cut: f64) -> Check {
    let m = measure_from(n, s);
    let lo = vec![-3.0; n];
    let hi = vec![3.0; n];
    let mut mid_hi = hi.clone();
    mid_hi[0] = cut;
    let mut mid_lo = lo.clone();
    mid_lo[0] = cut;
    let left = m.residence_time(&Region::Box { lo: lo.clone(), hi: mid_hi });
    let right = m.residence_time(&Region::Box { lo: mid_lo, hi: hi.clone() });
    let union = m.residence_time(&Region::Box { lo, hi });
    ensure!((left + right - union).abs() <= 4.0 * f64::EPSILON, "{left} + {right} != {union}");
    Ok(())
}

/// `oscillation(ψ1 + ψ2) = oscillation(ψ1) + oscillation(ψ2)`.
pub fn check_oscillation_linearity(n: usize, s: &[(Vec<f64>, Vec<f64>, f64)], c: f64) -> Check {
    let m = measure_from(n, s);
    let w1 = Weight::Sigmoid { coord: 0, center: c, scale: 0.7 };
    let w2 = Weight::Bump { center: vec![c; n], radius: 2.0 };
    let a = m.oscillation_statistic(|x| w1.eval(x));
    let b = m.oscillation_statistic(|x| w2.eval(x));
    let ab = m.oscillation_statistic(|x| w1.eval(x) + w2.eval(x));
    let scale = 1.0 + m.velocity_moment(2.0).sqrt();
    for k in 0..n {
        let err = (ab.average[k] - a.average[k] - b.average[k]).abs();
        ensure!(err <= 1e-13 * scale, "coordinate {k}: linearity error {err}");
    }
    ensure!((ab.psi_mass - a.psi_mass - b.psi_mass).abs() <= 1e-13, "mass not additive");
    let zero = m.oscillation_statistic(|_| 0.0);
    ensure!(zero.average.iter().all(|v| *v == 0.0), "ψ = 0 gives non-zero statistic");
    Ok(())
}

pub fn check_circulation_is_closed_residual(n: usize, s: &[(Vec<f64>, Vec<f64>, f64)]) -> Check {
    let m = measure_from(n, s);
    let bank = BankSpec::over_box(vec![-3.0; n], vec![3.0; n]).build();
    for g in bank.iter() {
        let a = m.circulation(|x| g.gradient(x));
        let b = m.closed_residual(g);
        ensure!(a.to_bits() == b.to_bits(), "{}: {a} vs {b}", g.label());
    }
    Ok(())
}

/// Every Euler curve is consistent with its map.
pub fn check_euler_consistency(x: &[f64], dt: f64, rule: SelectionRule, seed: u64) -> Check {
    let mut rng = rng_from_seed(seed);
    for (name, h) in example_maps(x.len()) {
        let xx: Vec<f64> = if h.dim() == x.len() { x.to_vec() } else { x.iter().chain(x).copied().collect() };
        let c = euler_di(&*h, &xx, dt, 50.0 * dt, rule, &mut rng).unwrap();
        let defect = c.consistency_defect(&*h);
        ensure!(defect <= 1e-9, "{name}: Euler defect {defect}");
    }
    Ok(())
}

/// Affine single-valued map against the closed-form recursion.
pub fn check_affine_euler(a: &[f64], b: &[f64], x0: &[f64], dt: f64) -> Check {
    let n = x0.len();
    let h = FnMap::affine(a.to_vec(), b.to_vec());
    let mut rng = rng_from_seed(0);
    let c = euler_di(&h, x0, dt, 40.0 * dt, SelectionRule::MinNorm, &mut rng).unwrap();
    let mut x = x0.to_vec();
    for k in 0..c.len() {
        let err = c.point(k).iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        ensure!(err <= 1e-10, "step {k}: error {err}");
        let ax: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>() + b[i]).collect();
        x = x.iter().zip(&ax).map(|(p, q)| p + dt * q).collect();
    }
    Ok(())
}

/// Gradient flows never increase `f` beyond the Euler tolerance.
pub fn check_lyapunov_gradient_flow(x: &[f64], dt: f64, rule: SelectionRule, seed: u64) -> Check {
    let mut rng = rng_from_seed(seed);
    for f in functions(x.len()) {
        let h = NegSubdifferential(f.clone());
        let c = euler_di(&h, x, dt, 200.0 * dt, rule, &mut rng).unwrap();
        // Local Lipschitz constant of f over the visited region.
        let lip = c
            .points()
            .map(|p| f.subdifferential(p).generators().iter().map(|g| sq(g).sqrt()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
            * 2.0
            + 1.0;
        let rep = &lyapunov_check(|p| f.value(p), lip, &[c], |_| false)[0];
        ensure!(rep.max_increase <= rep.tolerance * (1.0 + 1e-9), "increase {} > tol {}", rep.max_increase, rep.tolerance);
    }
    Ok(())
}

/// Scaling one player's payoffs by λ > 0 leaves best responses unchanged.
pub fn check_br_scaling(u1: &[Vec<f64>], u2: &[Vec<f64>], xi: &[f64], lambda: f64) -> Check {
    let g = Game::bimatrix(u1, u2).unwrap();
    let s1: Vec<Vec<f64>> = u1.iter().map(|r| r.iter().map(|v| lambda * v).collect()).collect();
    let gs = Game::bimatrix(&s1, u2).unwrap();
    let a = g.best_response(0, xi).unwrap();
    let b = gs.best_response(0, xi).unwrap();
    ensure!(a == b, "best responses changed under scaling");
    // The returned vertices attain the maximum within τ_BR.
    let payoff = g.pure_payoffs(0, xi);
    let top = payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for act in g.best_response_actions(0, xi).unwrap() {
        ensure!(payoff[act] >= top - sadi::games::BR_TOL, "action {act} is not a best response");
    }
    Ok(())
}

/// Every fictitious-play average stays on the product of simplices.
pub fn check_simplex_preservation(u1: &[Vec<f64>], u2: &[Vec<f64>], seed: u64) -> Check {
    let g = Game::bimatrix(u1, u2).unwrap();
    let k1 = u1.len();
    let mut xi0 = vec![0.0; g.profile_dim()];
    xi0[0] = 1.0;
    xi0[k1] = 1.0;
    let t = run_fictitious_play(&g, &xi0, 300, seed).unwrap();
    for i in 0..=t.len() {
        let x = t.state(i);
        for (lo, hi) in [(0, k1), (k1, x.len())] {
            let s: f64 = x[lo..hi].iter().sum();
            ensure!((s - 1.0).abs() <= 1e-9, "stage {i}: block sum {s}");
            ensure!(x[lo..hi].iter().all(|v| *v >= -1e-12), "stage {i}: negative coordinate");
        }
    }
    Ok(())
}

/// Builds `k1 × k2` payoff matrices from a flat list.
pub fn matrices(k1: usize, k2: usize, flat: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let u1 = (0..k1).map(|a| flat[a * k2..(a + 1) * k2].to_vec()).collect();
    let u2 = (0..k1).map(|a| flat[k1 * k2 + a * k2..k1 * k2 + (a + 1) * k2].to_vec()).collect();
    (u1, u2)
}

pub fn game_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..=3, 2usize..=3).prop_flat_map(|(k1, k2)| {
        (Just(k1), Just(k2), proptest::collection::vec((-3i32..=3).prop_map(f64::from), 2 * k1 * k2))
    })
}

pub fn simplex_point(k: usize, raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw[..k].iter().sum();
    raw[..k].iter().map(|v| v / s).collect()
}

// ---------------------------------------------------------------- shared runs

pub const SGD_N: usize = 1_000_000;
pub const SGD_SEEDS: u64 = 10;

/// The SGD example: `f = |x|`, `ε_i = 1/(i+1)^0.6`, Gaussian noise `σ = 0.5`,
/// `x_0 = 1`, one run per seed `0..10`, computed in parallel.
pub fn sgd_example_runs() -> Vec<Trajectory> {
    use rayon::prelude::*;
    let f = MaxOfSmooth::abs();
    let opts = SaOptions::new(StepSchedule::Power { a: 1.0, rho: 0.6 }).noise(NoiseModel::Gaussian { sigma: 0.5 });
    (0..SGD_SEEDS)
        .into_par_iter()
        .map(|seed| run_sgd(&f, &[1.0], &opts, SGD_N, seed).expect("valid run"))
        .collect()
}

/// Plain fictitious play with uniform tie-breaking over pure best responses.
pub fn fictitious_play_oracle(
    u1: &[Vec<f64>],
    u2: &[Vec<f64>],
    xi0: &[f64],
    n: usize,
    seed: u64,
) -> Vec<f64> {
    use rand::{Rng as _, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x0ac1e);
    let k1 = u1.len();
    let k2 = u1[0].len();
    let mut sum = xi0.to_vec();
    let pick = |v: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> usize {
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let best: Vec<usize> = (0..v.len()).filter(|&i| v[i] >= m - 1e-12).collect();
        best[rng.random_range(0..best.len())]
    };
    for stage in 0..n {
        let c = (stage + 1) as f64;
        let x: Vec<f64> = sum[..k1].iter().map(|s| s / c).collect();
        let y: Vec<f64> = sum[k1..].iter().map(|s| s / c).collect();
        let p1: Vec<f64> = (0..k1).map(|a| (0..k2).map(|b| u1[a][b] * y[b]).sum()).collect();
        let p2: Vec<f64> = (0..k2).map(|b| (0..k1).map(|a| u2[a][b] * x[a]).sum()).collect();
        let a = pick(&p1, &mut rng);
        let b = pick(&p2, &mut rng);
        sum[a] += 1.0;
        sum[k1 + b] += 1.0;
    }
    let c = (n + 1) as f64;
    sum.iter().map(|s| s / c).collect()
}
