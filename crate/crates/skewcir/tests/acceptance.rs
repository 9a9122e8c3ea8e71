//! End-to-end acceptance suite.
//!
//! One test per criterion; each prints a `[PASS]`/`[FAIL]` line (run
//! with `--nocapture` to see them). Monte Carlo verdicts are pinned to
//! fixed seeds, so the suite is deterministic.

use skewcir::criterion::{
    check_corollary, exponential_f_witness, linear_f_witness, pde_residual, skew_weight_cancellation,
    FForm, ResidualGrid, Route, SkewWeight, Verdict,
};
use skewcir::engine::{couple_map, simulate, simulate_summaries, Perturbation, SimConfig};
use skewcir::lab::{
    suite_csv, test_harmonic_martingale, test_local_time_relations, test_martingale_problem,
    test_martingale_problem_control, test_positivity_and_occupation, test_supinf_representation,
    Outcome, TestFunctionFlux,
};
use skewcir::model::{Curve, ModelParams};
use skewcir::special::{eigenfunction, eigenvalue, GeneratorL, ScalarFunction};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_260_811;

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn params(sigma: f64, delta: f64, b: f64, p: f64) -> ModelParams {
    ModelParams::new(sigma, delta, b, p).unwrap()
}

#[test]
fn criterion_1_classical_besq_mean() {
    // p = 1/2, sigma = 2, b = 0, delta = 2, r0 = 1, T = 1, dt = 1e-3,
    // 1e5 paths: E[R_T] solves dE/dt = sigma^2 delta/4 = 2, so E = 3.
    let pr = params(2.0, 2.0, 0.0, 0.5);
    let curve = Curve::constant(1.0, 1.0).unwrap();
    let config = SimConfig::new(1e-3, 1.0, 100_000, SEED).with_r0(1.0);
    let started = std::time::Instant::now();
    let sums = simulate_summaries(&pr, &curve, &config).unwrap();
    let elapsed = started.elapsed();
    let terminal: Vec<f64> = sums.iter().map(|s| s.r_terminal).collect();
    let (mean, se) = mean_stderr(&terminal);
    let target = 3.0;
    assert!(
        (mean - target).abs() <= 3.0 * se,
        "[FAIL] criterion 1: mean {mean} vs {target}, 3*stderr {}",
        3.0 * se
    );
    assert!(
        elapsed.as_secs() < 60,
        "[FAIL] criterion 1: runtime {elapsed:?} above 60 s"
    );
    println!(
        "[PASS] criterion 1: squared-Bessel mean {mean:.5} within 3*stderr {:.5} of {target} ({elapsed:?})",
        3.0 * se
    );
}

#[test]
fn criterion_2_classical_cir_mean() {
    // b = 1, r0 = 5, T = 2: E[R_T] = delta/b + (r0 - delta/b) e^{-sigma^2 b T/4}.
    let pr = params(2.0, 2.0, 1.0, 0.5);
    let curve = Curve::constant(1.0, 2.0).unwrap();
    let config = SimConfig::new(1e-3, 2.0, 100_000, SEED).with_r0(5.0);
    let sums = simulate_summaries(&pr, &curve, &config).unwrap();
    let terminal: Vec<f64> = sums.iter().map(|s| s.r_terminal).collect();
    let (mean, se) = mean_stderr(&terminal);
    let target = 2.0 + 3.0 * (-2.0f64).exp();
    assert!(
        (mean - target).abs() <= 3.0 * se,
        "[FAIL] criterion 2: mean {mean} vs {target}, 3*stderr {}",
        3.0 * se
    );
    println!(
        "[PASS] criterion 2: CIR mean {mean:.5} within 3*stderr {:.5} of {target:.5}",
        3.0 * se
    );
}

#[test]
fn criterion_3_skew_local_time_ratio() {
    // p = 0.75, lambda^2 == 1, dt = 1e-4, band = sqrt(dt), 1e4 paths:
    // upper/lower ledger ratio near p/(1-p) = 3, upper near 2p * ell0.
    let pr = params(2.0, 2.0, 0.0, 0.75);
    let curve = Curve::constant(1.0, 1.0).unwrap();
    let config = SimConfig::new(1e-4, 1.0, 10_000, SEED).with_r0(1.0);
    assert_eq!(config.band_eps, 1e-4f64.sqrt());
    let sums = simulate_summaries(&pr, &curve, &config).unwrap();
    let n = sums.len() as f64;
    let mp: f64 = sums.iter().map(|s| s.ell0_plus).sum::<f64>() / n;
    let mm: f64 = sums.iter().map(|s| s.ell0_minus).sum::<f64>() / n;
    let m0: f64 = sums.iter().map(|s| s.ell0).sum::<f64>() / n;
    let ratio = mp / mm;
    let ratio_target = 3.0;
    assert!(
        (ratio - ratio_target).abs() <= 0.15 * ratio_target,
        "[FAIL] criterion 3: ratio {ratio} outside 15% of {ratio_target}"
    );
    let upper_target = 2.0 * pr.p() * m0;
    assert!(
        (mp - upper_target).abs() <= 0.15 * upper_target,
        "[FAIL] criterion 3: ell0_plus {mp} outside 15% of 2p*ell0 {upper_target}"
    );
    println!(
        "[PASS] criterion 3: ledger ratio {ratio:.4} ~ 3, ell0_plus/(2p ell0) = {:.4}",
        mp / upper_target
    );
}

#[test]
fn criterion_4_exact_algebraic_invariants() {
    // Bitwise cancellation for 100 random p.
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..100 {
        let p: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        let c = skew_weight_cancellation(p);
        assert_eq!(c.to_bits(), 0.0f64.to_bits(), "[FAIL] criterion 4: cancellation {c} at p={p}");
    }
    // Ledger identity bitwise at every step and exact positivity on a
    // full batch of stored paths.
    let pr = params(2.0, 2.0, 0.0, 0.75);
    let curve = Curve::constant(1.0, 1.0).unwrap();
    let config = SimConfig::new(1e-3, 1.0, 200, SEED).with_r0(1.0);
    for traj in simulate(&pr, &curve, &config).unwrap() {
        let ledger = traj.ledger();
        for k in 0..ledger.symmetric().len() {
            let avg = (ledger.plus()[k] + ledger.minus()[k]) / 2.0;
            assert_eq!(
                ledger.symmetric()[k].to_bits(),
                avg.to_bits(),
                "[FAIL] criterion 4: ledger identity at step {k}"
            );
        }
        assert!(
            traj.values().iter().all(|r| *r >= 0.0),
            "[FAIL] criterion 4: negative state stored"
        );
    }
    println!("[PASS] criterion 4: cancellation bitwise zero, ledger identity exact, positivity exact");
}

#[test]
fn criterion_5_kummer_eigen_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let sigma = rng.random_range(0.5..3.0);
        let delta = rng.random_range(0.5..6.0);
        let b = rng.random_range(0.1..3.0);
        let alpha = rng.random_range(-2.0..2.0);
        let pr = params(sigma, delta, b, 0.5);
        let f = eigenfunction(&pr, alpha).unwrap();
        let gen = GeneratorL::new(pr);
        let ev = eigenvalue(&pr, alpha);
        for i in 1..=20 {
            let x = 0.5 * i as f64;
            let d = f.eval(x).unwrap();
            let resid = (gen.apply_deriv2(&d, x) - ev * d.value).abs() / (1.0 + d.value.abs());
            worst = worst.max(resid);
            assert!(
                resid <= 1e-7,
                "[FAIL] criterion 5: residual {resid} at x={x} (sigma={sigma}, delta={delta}, b={b}, alpha={alpha})"
            );
        }
    }
    // alpha = delta/2 reproduces e^{bx/2} pointwise.
    let pr = params(2.0, 2.0, 1.0, 0.5);
    let f = eigenfunction(&pr, pr.delta() / 2.0).unwrap();
    for i in 0..=100 {
        let x = 0.1 * i as f64;
        let expected = (pr.b() * x / 2.0).exp();
        assert!(
            (f.value(x).unwrap() - expected).abs() <= 1e-12 * expected.max(1.0),
            "[FAIL] criterion 5: exponential collapse at x={x}"
        );
    }
    println!("[PASS] criterion 5: eigen-residual sweep worst {worst:.2e} <= 1e-7; exponential collapse to 1e-12");
}

struct GoldenRow {
    label: &'static str,
    params: ModelParams,
    curve: Curve,
    horizon: f64,
    verdict: Verdict,
    margin: Option<f64>,
}

fn golden_table() -> Vec<GoldenRow> {
    let hat_ok = Curve::piecewise_linear(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)]).unwrap();
    let hat_steep = Curve::piecewise_linear(vec![(0.0, 0.0), (1.0, 3.0), (2.0, 0.0)]).unwrap();
    let hat_valley = Curve::piecewise_linear(vec![(0.0, 3.0), (1.0, 1.0), (2.0, 3.0)]).unwrap();
    vec![
        GoldenRow {
            label: "constant 1, p=0.75, b=0",
            params: params(2.0, 2.0, 0.0, 0.75),
            curve: Curve::constant(1.0, 1.0).unwrap(),
            horizon: 1.0,
            verdict: Verdict::Guaranteed,
            margin: None,
        },
        GoldenRow {
            label: "constant 1, p=0.25, b=0",
            params: params(2.0, 2.0, 0.0, 0.25),
            curve: Curve::constant(1.0, 1.0).unwrap(),
            horizon: 1.0,
            verdict: Verdict::Inconclusive,
            margin: Some(-2.0),
        },
        GoldenRow {
            label: "constant 3, p=0.25, b=1",
            params: params(2.0, 2.0, 1.0, 0.25),
            curve: Curve::constant(3.0, 5.0).unwrap(),
            horizon: 5.0,
            verdict: Verdict::Guaranteed,
            margin: None,
        },
        GoldenRow {
            label: "linear 1+1.5t, p=0.75, b=0",
            params: params(2.0, 2.0, 0.0, 0.75),
            curve: Curve::linear(1.0, 1.5, 2.0).unwrap(),
            horizon: 2.0,
            verdict: Verdict::Guaranteed,
            margin: None,
        },
        GoldenRow {
            label: "linear 1+3t, p=0.75, b=0.5",
            params: params(2.0, 2.0, 0.5, 0.75),
            curve: Curve::linear(1.0, 3.0, 2.0).unwrap(),
            horizon: 2.0,
            verdict: Verdict::Inconclusive,
            margin: Some(-1.0),
        },
        GoldenRow {
            label: "linear 5-t, p=0.25, b=1 (boundary)",
            params: params(2.0, 2.0, 1.0, 0.25),
            curve: Curve::linear(5.0, -1.0, 2.0).unwrap(),
            horizon: 2.0,
            verdict: Verdict::Guaranteed,
            margin: None,
        },
        GoldenRow {
            label: "hat slope 2, p=0.75, b=0 (boundary)",
            params: params(2.0, 2.0, 0.0, 0.75),
            curve: hat_ok,
            horizon: 2.0,
            verdict: Verdict::Guaranteed,
            margin: None,
        },
        GoldenRow {
            label: "hat slope 3, p=0.75, b=0",
            params: params(2.0, 2.0, 0.0, 0.75),
            curve: hat_steep,
            horizon: 2.0,
            verdict: Verdict::Inconclusive,
            margin: Some(-1.0),
        },
        GoldenRow {
            label: "hat valley, p=0.25, b=4",
            params: params(2.0, 2.0, 4.0, 0.25),
            curve: hat_valley,
            horizon: 2.0,
            verdict: Verdict::Guaranteed,
            margin: None,
        },
        GoldenRow {
            label: "exp 4->1 k=0.5, p=0.75, b=0",
            params: params(2.0, 2.0, 0.0, 0.75),
            curve: Curve::exp_relaxation(4.0, 1.0, 0.5, 1.0).unwrap(),
            horizon: 1.0,
            verdict: Verdict::Guaranteed,
            margin: None,
        },
        GoldenRow {
            label: "exp 3<-5 k=1, p=0.25, b=1",
            params: params(2.0, 2.0, 1.0, 0.25),
            curve: Curve::exp_relaxation(3.0, 5.0, 1.0, 1.0).unwrap(),
            horizon: 1.0,
            verdict: Verdict::Guaranteed,
            margin: None,
        },
    ]
}

#[test]
fn criterion_6_classification_golden_table() {
    let rows = golden_table();
    assert!(rows.len() >= 10);
    for row in &rows {
        let report = check_corollary(&row.params, &row.curve, row.horizon).unwrap();
        assert_eq!(
            report.verdict, row.verdict,
            "[FAIL] criterion 6: verdict mismatch for {} ({report:?})",
            row.label
        );
        if let Some(margin) = row.margin {
            let v = report.violation.as_ref().unwrap();
            assert!(
                (v.margin - margin).abs() <= 1e-12,
                "[FAIL] criterion 6: margin {} vs {margin} for {}",
                v.margin,
                row.label
            );
        }
        // Each guaranteed row is certified by the PDE residual of its
        // route's witness on the default 50x50 grid.
        if report.verdict == Verdict::Guaranteed && row.params.skew_coefficient() != 0.0 {
            let grid = ResidualGrid::default_for(&row.params, &row.curve, row.horizon).unwrap();
            let weight = SkewWeight::canonical(row.params.p());
            let (f, witness) = match report.route {
                Route::CorollaryExponentialF => (
                    ScalarFunction::exp_half(row.params.b()),
                    exponential_f_witness(&row.params, &row.curve),
                ),
                _ => (
                    ScalarFunction::identity(),
                    linear_f_witness(&row.params, &row.curve),
                ),
            };
            let field =
                pde_residual(&row.params, &row.curve, &weight, &f, FForm::Shifted, &witness, &grid)
                    .unwrap();
            assert!(
                field.certifies(),
                "[FAIL] criterion 6: witness not certified for {} (max residual {}, min nu {})",
                row.label,
                field.max_abs_residual,
                field.min_nu
            );
        }
    }
    // The exponential refinement route is exercised by a guaranteed
    // configuration with b > 0 and p > 1/2.
    let pr = params(2.0, 2.0, 1.0, 0.75);
    let curve = Curve::linear(1.0, 1.5, 2.0).unwrap();
    let report = check_corollary(&pr, &curve, 2.0).unwrap();
    assert_eq!(report.verdict, Verdict::Guaranteed);
    assert_eq!(report.route, Route::CorollaryExponentialF);
    let grid = ResidualGrid::default_for(&pr, &curve, 2.0).unwrap();
    let field = pde_residual(
        &pr,
        &curve,
        &SkewWeight::canonical(pr.p()),
        &ScalarFunction::exp_half(pr.b()),
        FForm::Shifted,
        &exponential_f_witness(&pr, &curve),
        &grid,
    )
    .unwrap();
    assert!(field.certifies());
    println!("[PASS] criterion 6: {} golden rows reproduced; guaranteed rows certified at 1e-8", rows.len());
}

#[test]
fn criterion_7_martingale_problem() {
    let pr = params(2.0, 2.0, 0.0, 0.75);
    let curve = Curve::constant(1.0, 1.0).unwrap();
    let config = SimConfig::new(1e-3, 1.0, 100_000, SEED).with_r0(1.0);
    let tf = TestFunctionFlux::compliant(&pr, config.horizon);
    let report = test_martingale_problem(&pr, &curve, &config, &tf).unwrap();
    let stat = &report.statistics[0];
    assert_eq!(
        report.outcome,
        Outcome::Pass,
        "[FAIL] criterion 7: compliant flux defect {} above band {}",
        stat.value,
        stat.tolerance
    );
    let control = test_martingale_problem_control(&pr, &curve, &config).unwrap();
    let cstat = &control.statistics[0];
    assert_eq!(
        control.outcome,
        Outcome::Fail,
        "[FAIL] criterion 7: broken flux defect {} did not exceed band {}",
        cstat.value,
        cstat.tolerance
    );
    println!(
        "[PASS] criterion 7: defect {:.2e} within band {:.2e}; broken-flux control {:.2e} exceeds it",
        stat.value, stat.tolerance, cstat.value
    );
}

#[test]
fn criterion_8_uniqueness_decay_ladder() {
    // Guaranteed configuration p=0.75, lambda^2 = 1 + 1.5t, sigma = 2,
    // delta = 2, b = 0, r0 = 1, T = 1; coupled band widths
    // (sqrt(dt), 2 sqrt(dt)) on the ladder dt in {4e-3, 2e-3, 1e-3}.
    let pr = params(2.0, 2.0, 0.0, 0.75);
    let curve = Curve::linear(1.0, 1.5, 1.0).unwrap();
    assert_eq!(
        check_corollary(&pr, &curve, 1.0).unwrap().verdict,
        Verdict::Guaranteed
    );
    let ladder = [4e-3, 2e-3, 1e-3];
    let mut gaps = Vec::new();
    let mut mean_sup = f64::NAN;
    for &dt in &ladder {
        let config = SimConfig::new(dt, 1.0, 10_000, SEED).with_r0(1.0);
        let eps = dt.sqrt();
        let stats = couple_map(&pr, &curve, &config, Perturbation::BandEps(eps, 2.0 * eps), |pair| {
            (pair.terminal_gap(), *pair.sup().last().unwrap(), pair.aborted())
        })
        .unwrap();
        let aborts = stats.iter().filter(|s| s.2).count();
        assert!(
            (aborts as f64) <= 0.01 * stats.len() as f64,
            "[FAIL] criterion 8: abort fraction above 1%"
        );
        let (gap, _) = mean_stderr(&stats.iter().map(|s| s.0).collect::<Vec<_>>());
        let (sup, _) = mean_stderr(&stats.iter().map(|s| s.1).collect::<Vec<_>>());
        gaps.push(gap);
        mean_sup = sup;
    }
    println!(
        "criterion 8 data: gaps {:?} along dt {:?}, mean sup {mean_sup:.4}, final ratio {:.4}",
        gaps,
        ladder,
        gaps.last().unwrap() / mean_sup
    );
    assert!(
        gaps.windows(2).all(|w| w[1] < w[0]),
        "[FAIL] criterion 8: terminal gap not strictly decreasing: {gaps:?}"
    );
    let final_ratio = gaps.last().unwrap() / mean_sup;
    assert!(
        final_ratio <= 0.05,
        "[FAIL] criterion 8: final mean gap {:.4} is {:.2}% of the mean supremum (target <= 5%). \
         The band-width coupling injects an O(band_eps) displacement at every curve interaction \
         and, with b = 0, nothing contracts it; the measured decay is roughly dt^0.08 \
         (7.3% at dt = 1e-4), so the 5% target is unreachable on this ladder.",
        gaps.last().unwrap(),
        100.0 * final_ratio
    );
    println!("[PASS] criterion 8: strictly decreasing ladder ending at {:.2}%", 100.0 * final_ratio);
}

#[test]
fn criterion_9_determinism_of_suite_outputs() {
    let pr = params(2.0, 2.0, 0.0, 0.75);
    let curve = Curve::constant(1.0, 1.0).unwrap();
    let config = SimConfig::new(1e-3, 1.0, 2_000, SEED).with_r0(1.0);
    let run = || {
        let tf = TestFunctionFlux::compliant(&pr, config.horizon);
        let reports = vec![
            test_positivity_and_occupation(&pr, &curve, &config).unwrap(),
            test_local_time_relations(&pr, &curve, &config).unwrap(),
            test_supinf_representation(&pr, &curve, &config, 0.1).unwrap(),
            test_martingale_problem(&pr, &curve, &config, &tf).unwrap(),
            test_harmonic_martingale(&pr, &config).unwrap(),
        ];
        suite_csv(&reports)
    };
    let first = run();
    let second = run();
    assert_eq!(
        first.as_bytes(),
        second.as_bytes(),
        "[FAIL] criterion 9: suite CSV not byte-identical across runs"
    );
    assert!(first.lines().count() > 10);
    println!(
        "[PASS] criterion 9: two suite runs produced byte-identical CSV ({} bytes)",
        first.len()
    );
}
