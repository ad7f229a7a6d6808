//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.
//!
//! Run with `cargo test -p sadi --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::*;
use sadi::engine::*;
use sadi::experiment::checkpoint_schedule;
use sadi::flow::euler_di_seeded;
use sadi::games::Game;
use sadi::linalg::{dist, max_abs_diff, norm_sq};
use sadi::occupation::*;
use sadi::setvalued::*;
use sadi::testfn::*;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Per-seed measurements on the SGD example shared by criteria 1 to 5.
struct SgdSeed {
    seed: u64,
    seconds: f64,
    sandwich_ratio: f64,
    sandwich_ok: bool,
    telescoping_exact: bool,
    residual_ratio: f64,
    farthest_cell: f64,
    cells: usize,
    osc_ratio_const: f64,
    osc_ratio_bump: f64,
    gap: Option<f64>,
    defined_probes: usize,
}

fn measure_sgd(seed: u64) -> SgdSeed {
    let start = Instant::now();
    let f = MaxOfSmooth::abs();
    let opts = SaOptions::new(StepSchedule::Power { a: 1.0, rho: 0.6 }).noise(NoiseModel::Gaussian { sigma: 0.5 });
    let traj = run_sgd(&f, &[1.0], &opts, SGD_N, seed).expect("valid run");
    let seconds = start.elapsed().as_secs_f64();

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=traj.len() {
        lo = lo.min(traj.state(i)[0]);
        hi = hi.max(traj.state(i)[0]);
    }
    let bank = BankSpec::over_box(vec![lo], vec![hi]).build();
    let checkpoints: Vec<OccupationMeasure> =
        checkpoint_schedule(10_000, SGD_N).into_iter().map(|k| accumulate_prefix(&traj, k)).collect();
    let (first, last) = (&checkpoints[0], checkpoints.last().unwrap());

    let t_n: f64 = traj.steps().iter().sum();
    let (mut sandwich_ratio, mut sandwich_ok, mut telescoping_exact) = (0.0f64, true, true);
    for (k, g) in bank.iter().enumerate() {
        let interp = interpolated_residual(&traj, g).unwrap();
        let exact = (g.value(traj.last_state()) - g.value(traj.state(0))) / t_n;
        telescoping_exact &= interp.to_bits() == exact.to_bits();
        let gap = (last.closed_residual(g) - interp).abs();
        let bound = interpolation_bound(&traj, bank.constant(k));
        sandwich_ok &= gap <= bound + 1e-9;
        sandwich_ratio = sandwich_ratio.max(gap / bound);
    }

    let max_residual = |m: &OccupationMeasure| bank.iter().map(|g| m.closed_residual(g).abs()).fold(0.0, f64::max);
    let residual_ratio = max_residual(last) / max_residual(first);

    let cells = essential_accumulation_estimate(&checkpoints, 0.02, 0.05).unwrap();
    let farthest_cell = cells.iter().map(|c| c.max_distance_to(&[0.0])).fold(0.0, f64::max);

    let osc = |m: &OccupationMeasure, w: &Weight| m.oscillation_statistic(|x| w.eval(x)).norm();
    let one = Weight::Constant { value: 1.0 };
    let bump = Weight::Bump { center: vec![0.0], radius: 0.25 };
    let osc_ratio_const = osc(last, &one) / osc(first, &one);
    let osc_ratio_bump = osc(last, &bump) / osc(first, &bump);

    let probes: Vec<Vec<f64>> = (0..=20).map(|j| vec![-0.5 + 0.05 * j as f64]).collect();
    let h = NegSubdifferential(f);
    let (gap, defined_probes) = match last.centroid_membership_gap(&h, &probes, last.bandwidth_rule()) {
        Ok(g) => (Some(g.max_gap), g.per_probe.iter().filter(|p| p.is_some()).count()),
        Err(_) => (None, 0),
    };

    SgdSeed {
        seed,
        seconds,
        sandwich_ratio,
        sandwich_ok,
        telescoping_exact,
        residual_ratio,
        farthest_cell,
        cells: cells.len(),
        osc_ratio_const,
        osc_ratio_bump,
        gap,
        defined_probes,
    }
}

fn criterion_1(runs: &[SgdSeed]) -> Outcome {
    let ok = runs.iter().all(|r| r.sandwich_ok && r.telescoping_exact && r.seconds <= 120.0);
    let worst = runs.iter().map(|r| r.sandwich_ratio).fold(0.0, f64::max);
    let slowest = runs.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let exact = runs.iter().filter(|r| r.telescoping_exact).count();
    outcome(
        ok,
        format!("max |closed - interpolated| / bound = {worst:.3}, telescoping bit-exact {exact}/10, slowest run {slowest:.2}s"),
    )
}

fn criterion_2(runs: &[SgdSeed]) -> Outcome {
    let good = runs.iter().filter(|r| r.residual_ratio <= 1.0 / 3.0).count();
    let ratios: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.residual_ratio)).collect();
    outcome(good >= 8, format!("{good}/10 seeds with ratio <= 1/3; ratios [{}]", ratios.join(", ")))
}

fn criterion_3(runs: &[SgdSeed]) -> Outcome {
    let ok = runs.iter().all(|r| r.farthest_cell <= 0.05 && r.cells > 0);
    let far = runs.iter().map(|r| r.farthest_cell).fold(0.0, f64::max);
    let cells: Vec<String> = runs.iter().map(|r| r.cells.to_string()).collect();
    outcome(ok, format!("farthest cell point {far:.3} from 0; cells per seed [{}]", cells.join(", ")))
}

fn criterion_4(runs: &[SgdSeed]) -> Outcome {
    let good = runs.iter().filter(|r| r.osc_ratio_const <= 0.5 && r.osc_ratio_bump <= 0.5).count();
    let worst_c = runs.iter().map(|r| r.osc_ratio_const).fold(0.0, f64::max);
    let worst_b = runs.iter().map(|r| r.osc_ratio_bump).fold(0.0, f64::max);
    outcome(good >= 8, format!("{good}/10 seeds with both ratios <= 1/2; worst ratio {worst_c:.3} (psi = 1), {worst_b:.3} (bump)"))
}

fn criterion_5(runs: &[SgdSeed]) -> Outcome {
    let ok = runs.iter().all(|r| r.gap.is_some_and(|g| g <= 0.1));
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| match r.gap {
            Some(g) => format!("{}:{g:.3}/{}", r.seed, r.defined_probes),
            None => format!("{}:undefined", r.seed),
        })
        .collect();
    outcome(ok, format!("max gap / defined probes per seed [{}]", per_seed.join(", ")))
}

fn criterion_6() -> Outcome {
    let f = MaxOfSmooth::quadratic(2);
    let sched = StepSchedule::Power { a: 0.5, rho: 0.6 };
    let noisy = ShbOptions {
        alpha: sched,
        beta: sched,
        noise: NoiseModel::Gaussian { sigma: 0.5 },
        rule: SelectionRule::RandomHull,
        guard_radius: 1e3,
    };
    let far: Vec<f64> = (0..SGD_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let traj = run_shb(&f, &[1.0, 1.0], &[0.0, 0.0], &noisy, SGD_N, seed).expect("valid run");
            let cps: Vec<OccupationMeasure> =
                checkpoint_schedule(10_000, SGD_N).into_iter().map(|k| accumulate_prefix(&traj, k)).collect();
            let cells = essential_accumulation_estimate(&cps, 0.02, 0.05).unwrap();
            if cells.is_empty() {
                f64::INFINITY
            } else {
                cells.iter().map(|c| c.max_distance_to(&[0.0; 4])).fold(0.0, f64::max)
            }
        })
        .collect();
    let far_max = far.iter().copied().fold(0.0, f64::max);

    let h = HeavyBallMap::new(f.clone(), 1.0);
    let dt = 1e-3;
    let curve = euler_di_seeded(&h, &[1.0, 1.0, 0.0, 0.0], dt, 10.0, SelectionRule::MinNorm, 0).unwrap();
    let mut v_err = 0.0f64;
    for k in 0..curve.len() - 1 {
        let dv = (h.lyapunov(curve.point(k + 1)) - h.lyapunov(curve.point(k))) / dt;
        v_err = v_err.max((dv + norm_sq(&curve.point(k)[2..])).abs());
    }

    let quiet = ShbOptions { noise: NoiseModel::None, rule: SelectionRule::MinNorm, ..noisy };
    let (q0, p0) = ([1.0, 1.0], [0.0, 0.0]);
    let traj = run_shb(&f, &q0, &p0, &quiet, 100_000, 0).unwrap();
    let qs = run_shb_single_line(&f, &q0, &p0, &quiet, 100_000, 0).unwrap();
    let line_err = qs.iter().enumerate().map(|(i, q)| max_abs_diff(&traj.state(i)[..2], q)).fold(0.0, f64::max);

    outcome(
        far_max <= 0.1 && v_err <= 5.0 * dt && line_err <= 1e-12,
        format!(
            "farthest ess-acc cell point {far_max:.3} from origin over 10 seeds; max |V' + |p|^2| = {v_err:.2e} (5 dt = {:.0e}); two-line vs single-line {line_err:.1e}",
            5.0 * dt
        ),
    )
}

fn criterion_7() -> Outcome {
    let g = Game::matching_pennies();
    let runs: Vec<(f64, f64)> = (0..SGD_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let start = Instant::now();
            let t = run_fictitious_play(&g, &[1.0, 0.0, 1.0, 0.0], 100_000, seed).unwrap();
            (max_abs_diff(t.last_state(), &[0.5; 4]), start.elapsed().as_secs_f64())
        })
        .collect();
    let worst = runs.iter().map(|r| r.0).fold(0.0, f64::max);
    let slowest = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(worst <= 0.05 && slowest <= 30.0, format!("max distance to Nash {worst:.4}, slowest run {slowest:.2}s"))
}

fn simplex_error(x: &[f64]) -> f64 {
    let blocks = [&x[..3], &x[3..]];
    blocks
        .iter()
        .map(|b| b.iter().fold((b.iter().sum::<f64>() - 1.0).abs(), |m, v| m.max(-v)))
        .fold(0.0, f64::max)
}

/// Lower bound on the diameter: spread along each coordinate and distance
/// from the first point.
fn diameter_lower_bound(points: &[&[f64]]) -> f64 {
    let n = points[0].len();
    let spread = (0..n)
        .map(|k| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[k]), b.max(p[k])));
            hi - lo
        })
        .fold(0.0, f64::max);
    let radial = points.iter().map(|p| dist(p, points[0])).fold(0.0, f64::max);
    spread.max(radial)
}

fn criterion_8() -> Outcome {
    let g = Game::generalized_rps(1.0, 2.0).unwrap();
    let xi0 = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let n = 100_000;
    let runs: Vec<(f64, f64)> = (0..SGD_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let t = run_fictitious_play(&g, &xi0, n, seed).unwrap();
            let window: Vec<&[f64]> = (n / 2..=n).map(|i| t.state(i)).collect();
            let simplex = (0..=t.len()).map(|i| simplex_error(t.state(i))).fold(0.0, f64::max);
            (diameter_lower_bound(&window), simplex)
        })
        .collect();

    let u1 = vec![vec![0.0, -2.0, 1.0], vec![1.0, 0.0, -2.0], vec![-2.0, 1.0, 0.0]];
    let u2: Vec<Vec<f64>> = (0..3).map(|r| (0..3).map(|c| u1[c][r]).collect()).collect();
    let dt = 1e-3;
    let flow = best_response_flow(&u1, &u2, &xi0, dt, (n as f64).ln());
    let from = ((n as f64 / 2.0).ln() / dt) as usize;
    let oracle_diam = diameter(&flow[from..]);

    let diam = runs.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let simplex = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(
        diam >= 0.1 && simplex <= 1e-9 && oracle_diam >= 0.1,
        format!("min diameter over [N/2, N] {diam:.3} across 10 seeds (oracle flow {oracle_diam:.3}); max simplex error {simplex:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e0);
    let cases: Vec<(Vec<Vec<f64>>, Vec<f64>)> = (0..100)
        .map(|_| {
            let n = rng.random_range(1..=3);
            let m = rng.random_range(1..=4);
            let gens = (0..m).map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let y = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            (gens, y)
        })
        .collect();
    let failures: Vec<String> = cases
        .par_iter()
        .filter_map(|(gens, y)| check_grid_oracle(gens, y).err().map(|e| e.to_string()))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let mut detail = format!("{}/100 polytopes agree within 1e-3, {secs:.1}s", 100 - failures.len());
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first failure: {f}"));
    }
    outcome(failures.is_empty() && secs <= 60.0, detail)
}

fn run_property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Check,
) -> Option<String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).err().map(|e| format!("{name}: {e}"))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let polytope_point = || polytope_strategy().prop_flat_map(|g| {
        let n = g[0].len();
        (Just(g), point_strategy(n))
    });
    let mut failures = Vec::new();
    let mut count = 0;
    let mut record = |r: Option<String>| {
        count += 1;
        failures.extend(r);
    };
    record(run_property("wolfe certificate", 256, polytope_strategy(), |g| check_wolfe_certificate(&g)));
    record(run_property(
        "combinations inside hull",
        256,
        polytope_strategy().prop_flat_map(|g| {
            let m = g.len();
            (Just(g), weights_strategy(m))
        }),
        |(g, w)| check_combination_inside(&g, &w),
    ));
    record(run_property("support homogeneity", 256, polytope_point(), |(g, d)| check_support_homogeneity(&g, &d)));
    record(run_property(
        "selection in hull",
        256,
        ((1usize..=3).prop_flat_map(point_strategy), rule_strategy(), any::<u64>()),
        |(x, r, s)| check_selection_in_hull(&x, r, s),
    ));
    record(run_property(
        "enlargement monotone",
        128,
        ((1usize..=2).prop_flat_map(point_strategy), 0.0f64..0.5, 0.0f64..0.5, rule_strategy(), any::<u64>()),
        |(x, d, e, r, s)| check_enlargement_monotone(&x, d, e, r, s),
    ));
    record(run_property(
        "clarke support",
        256,
        (1usize..=3).prop_flat_map(|n| (point_strategy(n), point_strategy(n))),
        |(x, d)| check_clarke_support(&x, &d),
    ));
    let run_args = || (-3.0f64..3.0, 0.0f64..1.0, 0.0f64..0.5, rule_strategy(), any::<u64>());
    record(run_property("velocity identity", 128, run_args(), |(x, s, d, r, seed)| {
        check_velocity_identity(x, s, d, r, seed)
    }));
    record(run_property("enlargement slack on recorded steps", 128, run_args(), |(x, s, d, r, seed)| {
        check_recorded_slack(x, s, d, r, seed)
    }));
    record(run_property("reproducibility", 64, (-3.0f64..3.0, any::<u64>()), |(x, s)| check_reproducible(x, s)));
    record(run_property("escape semantics", 64, (1.5f64..1e4, any::<u64>()), |(r, s)| check_escape_semantics(r, s)));
    record(run_property(
        "telescoping",
        64,
        (-3.0f64..3.0, -1.0f64..1.0, 0.1f64..3.0, any::<u64>()),
        |(x, c, w, s)| check_telescoping(x, c, w, s),
    ));
    record(run_property("residual sandwich", 64, (-3.0f64..3.0, 0.0f64..1.5, any::<u64>()), |(x, s, seed)| {
        check_sandwich(x, s, seed)
    }));
    record(run_property(
        "measure merge",
        256,
        (1usize..=3).prop_flat_map(|n| (Just(n), samples_strategy(n, 30), samples_strategy(n, 30))),
        |(n, a, b)| check_merge(n, &a, &b),
    ));
    record(run_property(
        "residence additivity",
        256,
        ((1usize..=3).prop_flat_map(|n| (Just(n), samples_strategy(n, 60))), -3.0f64..3.0),
        |((n, s), cut)| check_residence_additivity(n, &s, cut),
    ));
    record(run_property(
        "oscillation linearity",
        256,
        ((1usize..=3).prop_flat_map(|n| (Just(n), samples_strategy(n, 60))), -1.0f64..1.0),
        |((n, s), c)| check_oscillation_linearity(n, &s, c),
    ));
    record(run_property(
        "circulation of gradients",
        256,
        (1usize..=2).prop_flat_map(|n| (Just(n), samples_strategy(n, 40))),
        |(n, s)| check_circulation_is_closed_residual(n, &s),
    ));
    record(run_property(
        "euler consistency",
        128,
        ((1usize..=2).prop_flat_map(point_strategy), 1e-3f64..0.1, rule_strategy(), any::<u64>()),
        |(x, dt, r, s)| check_euler_consistency(&x, dt, r, s),
    ));
    record(run_property(
        "affine euler",
        128,
        (
            (1usize..=3).prop_flat_map(|n| {
                (proptest::collection::vec(-1.0f64..1.0, n * n), point_strategy(n), point_strategy(n))
            }),
            1e-3f64..0.1,
        ),
        |((a, b, x), dt)| check_affine_euler(&a, &b, &x, dt),
    ));
    record(run_property(
        "lyapunov on gradient flows",
        64,
        ((1usize..=2).prop_flat_map(point_strategy), 1e-3f64..0.05, rule_strategy(), any::<u64>()),
        |(x, dt, r, s)| check_lyapunov_gradient_flow(&x, dt, r, s),
    ));
    record(run_property(
        "best-response scaling",
        256,
        (game_strategy(), proptest::collection::vec(0.01f64..1.0, 6), 0.1f64..10.0),
        |((k1, k2, flat), raw, lambda)| {
            let (u1, u2) = matrices(k1, k2, &flat);
            let mut xi = simplex_point(k1, &raw);
            xi.extend(simplex_point(k2, &raw[3..]));
            check_br_scaling(&u1, &u2, &xi, lambda)
        },
    ));
    record(run_property("simplex preservation", 64, (game_strategy(), any::<u64>()), |((k1, k2, flat), s)| {
        let (u1, u2) = matrices(k1, k2, &flat);
        check_simplex_preservation(&u1, &u2, s)
    }));
    let secs = start.elapsed().as_secs_f64();
    let mut detail = format!("{}/{count} property suites pass, {secs:.1}s", count - failures.len());
    for f in &failures {
        detail.push_str(&format!("; {f}"));
    }
    outcome(failures.is_empty() && secs <= 600.0, detail)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let sgd: Vec<SgdSeed> = (0..SGD_SEEDS).into_par_iter().map(measure_sgd).collect();
    let results = [
        ("residual sandwich", criterion_1(&sgd)),
        ("closed-measure decay", criterion_2(&sgd)),
        ("essential accumulation in critical set", criterion_3(&sgd)),
        ("oscillation compensation", criterion_4(&sgd)),
        ("centroid membership", criterion_5(&sgd)),
        ("heavy ball", criterion_6()),
        ("fictitious play, zero-sum", criterion_7()),
        ("fictitious play, non-convergent", criterion_8()),
        ("convex-geometry oracle", criterion_9()),
        ("invariant suites", criterion_10()),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {name}: {tag} ({})", k + 1, o.detail);
        failed += usize::from(!o.passed);
    }
    println!(
        "acceptance: {}/{} criteria pass in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
