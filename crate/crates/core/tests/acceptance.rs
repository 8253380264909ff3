//! Acceptance criteria. Each test writes one `criterion N: PASS|FAIL` line to
//! stderr, bypassing libtest capture, and then asserts the same condition.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::{json, Value};

use sil::estimator::{assemble_kernel, min_norm_oracle, solve_ridgeless, IndexRange};
use sil::fourier_basis::sample_design;
use sil::harness::noise_profile::{INVERSE_ID, REGRESSION_ID};
use sil::harness::{
    run_eigenspectrum, run_learning_curve, run_noise_profile, run_validation_suite, ExperimentConfig,
    LearningCurveReport, OutputDir,
};
use sil::risk::mc_excess_risk;
use sil::rng::stream_rng;
use sil::spectral_problem::{SpectralProfile, TruncationPolicy};

const ORACLE_INSTANCES: usize = 50;
const ORACLE_TOL: f64 = 1e-8;
const ORACLE_BUDGET: Duration = Duration::from_secs(30);

const MC_N: usize = 64;
const MC_REPLICATES: usize = 400;
const MC_STDERRS: f64 = 4.0;
const MC_BUDGET: Duration = Duration::from_secs(120);

const RATE_GRID: [usize; 5] = [64, 128, 256, 512, 1024];
const INTERPOLATION_REPLICATES: usize = 64;
const REGULARIZED_REPLICATES: usize = 32;
const INTERPOLATION_BUDGET: Duration = Duration::from_secs(600);
const VARIANCE_TARGET_A: f64 = -1.0;
const VARIANCE_TOL_A: f64 = 0.2;
const VARIANCE_TARGET_B: f64 = 0.0;
const VARIANCE_TOL_B: f64 = 0.15;
const BIAS_CEILING_A: f64 = -3.0;

const TOTAL_TARGET_C: f64 = -4.0 / 3.0;
const RATE_TOL: f64 = 0.2;
const INDEPENDENCE_TOL: f64 = 0.15;
/// `(g / (2p + lambda beta)) (-2p + lambda (beta' - 2 beta))` at `g = 2/15`, `beta = 0.6`.
const BIAS_TARGET_D: f64 = (2.0 / 15.0) / 0.4 * (2.0 + 4.0 * (0.0 - 1.2));
const SUBOPTIMALITY_GAP: f64 = 0.2;

const EIGEN_N: usize = 512;
const EIGEN_SEEDS: usize = 10;
const HEAD_SLOPE_TOL: f64 = 0.25;

const NOISE_RATIO: f64 = 0.1;
const FLAT_TOL: f64 = 0.1;

const SUITE_BUDGET: Duration = Duration::from_secs(60);

fn report(criterion: u32, passed: bool, detail: String) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    writeln!(err, "criterion {criterion}: {verdict}  {detail}").unwrap();
}

/// Config A with the given fields overridden.
fn config(overrides: Value) -> ExperimentConfig {
    let mut doc = json!({
        "experiment": "learning_curve", "lambda": 4, "p": -1, "r": 1, "beta": 1,
        "beta_eval": 0, "sigma2": 0.25, "master_seed": 20240601,
        "gamma": {"mode": "fixed", "value": 0}
    });
    for (k, v) in overrides.as_object().unwrap() {
        doc[k] = v.clone();
    }
    ExperimentConfig::from_json(&doc.to_string()).unwrap()
}

fn curve(overrides: Value) -> LearningCurveReport {
    run_learning_curve(&config(overrides), &OutputDir::none()).unwrap()
}

fn curve_a() -> &'static (LearningCurveReport, Duration) {
    static CELL: OnceLock<(LearningCurveReport, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let r = curve(json!({
            "truncation": "4n", "n_grid": RATE_GRID, "replicates": INTERPOLATION_REPLICATES
        }));
        (r, start.elapsed())
    })
}

fn curve_c() -> &'static LearningCurveReport {
    static CELL: OnceLock<LearningCurveReport> = OnceLock::new();
    CELL.get_or_init(|| {
        curve(json!({
            "truncation": "4n", "gamma": {"mode": "power", "exponent": 2.0 / 3.0},
            "n_grid": RATE_GRID, "replicates": REGULARIZED_REPLICATES
        }))
    })
}

fn slope(fit: &Option<sil::harness::SlopeFit>) -> f64 {
    fit.map_or(f64::NAN, |f| f.slope)
}

#[test]
fn criterion_01_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = stream_rng(1, 0);
    let mut worst = 0.0f64;
    for instance in 0..ORACLE_INSTANCES {
        let n = rng.random_range(2..=32usize);
        let big_n = rng.random_range((4 * n).max(64)..=512usize);
        let p = if instance % 2 == 0 { -1.0 } else { 0.0 };
        let profile =
            SpectralProfile::new(4.0, p, 1.0, 1.0, 0.0, 0.25, big_n).with_tail_policy(TruncationPolicy::report_only());
        let design = sample_design(n, rng.random()).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let system = assemble_kernel(&design, &profile, IndexRange::full(big_n)).unwrap();
        let closed = solve_ridgeless(&system, &y).unwrap().coefficients(&design, &profile);
        let oracle = min_norm_oracle(&design, &profile, &y).unwrap();
        worst = worst.max(closed.max_relative_deviation(&oracle));
    }
    let elapsed = start.elapsed();
    let passed = worst <= ORACLE_TOL && elapsed < ORACLE_BUDGET;
    report(
        1,
        passed,
        format!("max relative deviation {worst:.2e} (<= {ORACLE_TOL:e}), {elapsed:.1?}"),
    );
    assert!(passed);
}

#[test]
fn criterion_02_exact_matches_monte_carlo() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut passed = true;
    for (name, gamma) in [("A", 0.0), ("C", (MC_N as f64).powf(-2.0 / 3.0))] {
        let profile = SpectralProfile::new(4.0, -1.0, 1.0, 1.0, 0.0, 0.25, 4 * MC_N);
        let r = mc_excess_risk(&profile, MC_N, gamma, MC_REPLICATES, 7).unwrap();
        let (mean, se) = (r.mc_mean.unwrap(), r.mc_stderr.unwrap());
        let z = (mean - r.total).abs() / se;
        passed &= z <= MC_STDERRS;
        lines.push(format!("{name}: exact {:.4e} mc {mean:.4e} z {z:.2}", r.total));
    }
    let elapsed = start.elapsed();
    passed &= elapsed < MC_BUDGET;
    report(
        2,
        passed,
        format!("{} (z <= {MC_STDERRS}), {elapsed:.1?}", lines.join("; ")),
    );
    assert!(passed);
}

#[test]
fn criterion_03_interpolation_variance_rate() {
    let (a, elapsed_a) = curve_a();
    let start = Instant::now();
    let b = curve(json!({
        "p": 0, "truncation": "4n", "n_grid": RATE_GRID, "replicates": INTERPOLATION_REPLICATES
    }));
    let elapsed = *elapsed_a + start.elapsed();
    let (sa, sb) = (slope(&a.slopes.variance), slope(&b.slopes.variance));
    let passed = (sa - VARIANCE_TARGET_A).abs() <= VARIANCE_TOL_A
        && (sb - VARIANCE_TARGET_B).abs() <= VARIANCE_TOL_B
        && elapsed < INTERPOLATION_BUDGET;
    report(
        3,
        passed,
        format!(
            "variance slope A {sa:.3} ({VARIANCE_TARGET_A} +- {VARIANCE_TOL_A}), \
             B {sb:.3} ({VARIANCE_TARGET_B} +- {VARIANCE_TOL_B}), {elapsed:.1?}"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_04_interpolation_bias_rate() {
    let s = slope(&curve_a().0.slopes.bias);
    let passed = s <= BIAS_CEILING_A;
    report(4, passed, format!("bias slope A {s:.3} (<= {BIAS_CEILING_A})"));
    assert!(passed);
}

#[test]
fn criterion_05_regularized_total_rate() {
    let c = curve_c();
    let s = slope(&c.slopes.total);
    let passed = (s - TOTAL_TARGET_C).abs() <= RATE_TOL;
    report(
        5,
        passed,
        format!(
            "total slope C {s:.3} ({TOTAL_TARGET_C:.3} +- {RATE_TOL}); bias {:.3}, variance {:.3}",
            slope(&c.slopes.bias),
            slope(&c.slopes.variance)
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_06_bias_independence() {
    let sc = slope(&curve_c().slopes.total);
    let e = curve(json!({
        "beta": 0.8, "truncation": "4n", "gamma": {"mode": "power", "exponent": 0.4},
        "n_grid": RATE_GRID, "replicates": REGULARIZED_REPLICATES
    }));
    let se = slope(&e.slopes.total);
    let passed = (se - sc).abs() <= INDEPENDENCE_TOL;
    report(
        6,
        passed,
        format!(
            "total slope E {se:.3} vs C {sc:.3}, gap {:.3} (<= {INDEPENDENCE_TOL})",
            (se - sc).abs()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_07_threshold_violation() {
    let sc = slope(&curve_c().slopes.total);
    let d = curve(json!({
        "beta": 0.6, "truncation": "4n",
        "tail_policy": {"kernel_tail_rel_tol": null, "tail_closure": false},
        "gamma": {"mode": "power", "exponent": 2.0 / 15.0},
        "n_grid": RATE_GRID, "replicates": REGULARIZED_REPLICATES
    }));
    let sd = slope(&d.slopes.bias);
    let on_branch = (sd - BIAS_TARGET_D).abs() <= RATE_TOL;
    let worse = sd >= sc + SUBOPTIMALITY_GAP;
    report(
        7,
        on_branch && worse,
        format!(
            "bias slope D {sd:.3} ({BIAS_TARGET_D:.3} +- {RATE_TOL}: {}), \
             worse than C {sc:.3} by >= {SUBOPTIMALITY_GAP}: {}",
            if on_branch { "ok" } else { "no" },
            if worse { "ok" } else { "no" }
        ),
    );
    assert!(on_branch && worse);
}

#[test]
fn criterion_08_eigenspectrum() {
    let config = config(json!({
        "experiment": "eigenspectrum", "n_grid": [EIGEN_N], "replicates": EIGEN_SEEDS,
        "k_grid": [16, 64], "tolerance": HEAD_SLOPE_TOL
    }));
    let r = run_eigenspectrum(&config, &OutputDir::none()).unwrap();
    let get = |name: &str| r.checks.iter().find(|c| c.name == name).unwrap();
    let parts = ["head_slope", "tail_bracket_low", "tail_bracket_high", "psd"];
    let passed = parts.iter().all(|p| get(p).passed);
    let detail: Vec<String> = parts
        .iter()
        .map(|p| {
            let c = get(p);
            format!("{p} {:.3e} [{}]", c.measured, if c.passed { "ok" } else { "no" })
        })
        .collect();
    report(
        8,
        passed,
        format!(
            "N = {}, median head slope {:.3}, median tail ratio {:.3e}; {}",
            r.truncation,
            r.median_head_slope.unwrap_or(f64::NAN),
            r.median_tail_ratio.unwrap_or(f64::NAN),
            detail.join(", ")
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_09_noise_profile_stabilization() {
    let config = config(json!({
        "experiment": "noise_profile", "truncation": "4n",
        "n_grid": [128, 512], "sigma2_grid": [0, 0.25, 1], "replicates": 16
    }));
    let r = run_noise_profile(&config, &OutputDir::none()).unwrap();
    let v = |id: &str, n: usize| r.unit_variance(id, n).unwrap();
    let (a128, a512) = (v(INVERSE_ID, 128), v(INVERSE_ID, 512));
    let (b128, b512) = (v(REGRESSION_ID, 128), v(REGRESSION_ID, 512));
    let ratio_ok = a512 < NOISE_RATIO * b512;
    let a_drops = a512 < a128;
    let b_flat = b512 >= (1.0 - FLAT_TOL) * b128;
    let passed = ratio_ok && a_drops && b_flat;
    report(
        9,
        passed,
        format!(
            "V1 A {a128:.3e} -> {a512:.3e}, B {b128:.3e} -> {b512:.3e}; \
             ratio at 512 {:.3e} (< {NOISE_RATIO})",
            a512 / b512
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_invariant_suite() {
    let config = config(json!({"experiment": "validate", "n_grid": [8], "replicates": 2}));
    let start = Instant::now();
    let r = run_validation_suite(&config, &OutputDir::none()).unwrap();
    let elapsed = start.elapsed();
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let passed = r.passed && elapsed < SUITE_BUDGET;
    report(
        10,
        passed,
        format!("{} checks, failed {failed:?}, {elapsed:.1?}", r.checks.len()),
    );
    assert!(passed);
}
