use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{Check, OutputDir, ToolInfo};
use crate::error::Result;
use crate::estimator::{
    assemble_kernel, estimator_coefficients, min_norm_oracle, observe_targets, predict, solve_regularized,
    solve_ridgeless, IndexRange,
};
use crate::fourier_basis::{sample_design, DesignSample};
use crate::risk::{sobolev_norm_sq, summarize, ExactRisk};
use crate::rng::{derive_seed, stream_rng};
use crate::spectral_problem::{SpectralProfile, TruncationPolicy};

pub const SUITE_SIZES: [usize; 2] = [8, 32];
pub const SUITE_TRUNCATION: usize = 512;
pub const SPLIT_TOL: f64 = 1e-12;
pub const ORACLE_TOL: f64 = 1e-8;
pub const INTERPOLATION_TOL: f64 = 1e-8;
pub const NORM_TOL: f64 = 1e-10;
pub const AFFINE_TOL: f64 = 1e-12;
/// Summation over the truncated spectrum with a cancelling cross term.
pub const DECOMPOSITION_TOL: f64 = 1e-10;
pub const OPTIMALITY_TOL: f64 = 1e-12;
pub const PERTURBATIONS: usize = 20;
/// Ridge used by the optimality check.
pub const OPTIMALITY_GAMMA: f64 = 1e-3;
pub const MC_DRAWS: usize = 2000;
pub const MC_STDERRS: f64 = 4.0;

/// Relative size of the fault added to one off-diagonal kernel entry.
const FAULT_SIZE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tool: ToolInfo,
    pub config: ExperimentConfig,
    pub truncation: usize,
    pub fault_injected: bool,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Plain finite problem with the configured exponents.
fn suite_profile(config: &ExperimentConfig) -> SpectralProfile {
    config
        .profile(SUITE_SIZES[0])
        .with_truncation(SUITE_TRUNCATION)
        .with_tail_policy(TruncationPolicy::report_only())
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Regularized objective `(1/n) ||y - S A f||^2 + gamma ||f||_beta^2` in coordinates.
fn objective(c: &[f64], y: &[f64], design: &DesignSample, profile: &SpectralProfile, gamma: f64) -> f64 {
    let fit = predict(c, design, profile);
    let n = y.len() as f64;
    let loss = fit.iter().zip(y).map(|(f, y)| (y - f).powi(2)).sum::<f64>() / n;
    loss + gamma * sobolev_norm_sq(c, profile.bias, profile)
}

fn checks_at(config: &ExperimentConfig, profile: &SpectralProfile, n: usize) -> Result<Vec<Check>> {
    let seed = derive_seed(config.master_seed, n as u64);
    let design = sample_design(n, seed)?;
    let big_n = profile.truncation;
    let mut rng = stream_rng(seed, 7);
    let mut checks = Vec::new();

    // kernel split at the midpoint of the spectrum
    let mut full = assemble_kernel(&design, profile, IndexRange::full(big_n))?;
    let k = big_n / 2;
    let head = assemble_kernel(&design, profile, IndexRange::new(1, k, big_n)?)?;
    let tail = assemble_kernel(&design, profile, IndexRange::new(k + 1, big_n, big_n)?)?;
    if config.inject_fault && n > 1 {
        let bump = FAULT_SIZE * full.matrix[(0, 0)];
        full.matrix[(0, 1)] += bump;
        full.matrix[(1, 0)] += bump;
    }
    let mut split_gap = 0.0f64;
    let mut scale = 0.0f64;
    for j in 0..n {
        for l in 0..n {
            split_gap = split_gap.max((full.matrix[(j, l)] - head.matrix[(j, l)] - tail.matrix[(j, l)]).abs());
            scale = scale.max(full.matrix[(j, l)].abs());
        }
    }
    checks.push(Check::at_most(
        format!("kernel_split_n{n}"),
        split_gap / scale,
        SPLIT_TOL,
    ));

    let system = assemble_kernel(&design, profile, IndexRange::full(big_n))?;
    let obs = observe_targets(&design, profile, seed)?;

    // ridgeless coefficients against the brute-force oracle
    let sol = solve_ridgeless(&system, &obs.y)?;
    let closed = sol.coefficients(&design, profile);
    let oracle = min_norm_oracle(&design, profile, &obs.y)?;
    checks.push(Check::at_most(
        format!("oracle_equivalence_n{n}"),
        closed.max_relative_deviation(&oracle),
        ORACLE_TOL,
    ));

    let fitted = predict(&closed.coeffs, &design, profile);
    let y_scale = obs.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual = fitted.iter().zip(&obs.y).fold(0.0f64, |m, (f, y)| m.max((f - y).abs())) / y_scale;
    checks.push(Check::at_most(
        format!("interpolation_residual_n{n}"),
        residual,
        INTERPOLATION_TOL,
    ));

    // the ridge estimate minimizes its objective
    let reg = solve_regularized(&system, &obs.y, OPTIMALITY_GAMMA, n)?;
    let c_hat = reg.coefficients(&design, profile).coeffs;
    let j_hat = objective(&c_hat, &obs.y, &design, profile, OPTIMALITY_GAMMA);
    let rms = (c_hat.iter().map(|c| c * c).sum::<f64>() / c_hat.len() as f64).sqrt();
    let mut worst = f64::INFINITY;
    for _ in 0..PERTURBATIONS {
        let step: f64 = rng.random_range(1e-3..1e-1);
        let moved: Vec<f64> = c_hat
            .iter()
            .map(|c| {
                let z: f64 = rng.sample(StandardNormal);
                c + step * rms * z
            })
            .collect();
        let j = objective(&moved, &obs.y, &design, profile, OPTIMALITY_GAMMA);
        worst = worst.min((j - j_hat) / j_hat);
    }
    checks.push(Check::new(
        format!("representer_optimality_n{n}"),
        worst,
        format!("x >= -{OPTIMALITY_TOL:e}"),
        worst >= -OPTIMALITY_TOL,
    ));

    // ||f||_beta^2 = theta^T K theta for random dual vectors
    let mut norm_gap = 0.0f64;
    for _ in 0..5 {
        let theta: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let coeffs = estimator_coefficients(&theta, &design, profile);
        let sobolev = sobolev_norm_sq(&coeffs.coeffs, profile.bias, profile);
        let mut quad = 0.0;
        for j in 0..n {
            for l in 0..n {
                quad += theta[j] * system.matrix[(j, l)] * theta[l];
            }
        }
        norm_gap = norm_gap.max(relative_gap(sobolev, quad));
    }
    checks.push(Check::at_most(format!("norm_equivalence_n{n}"), norm_gap, NORM_TOL));

    // risk is affine in the noise variance
    let risks: Vec<f64> = [0.0, 0.3, 1.0]
        .iter()
        .map(|&s2| Ok(ExactRisk::new(&design, &profile.with_noise_var(s2), 0.0)?.total()))
        .collect::<Result<_>>()?;
    let predicted_mid = risks[0] + 0.3 * (risks[2] - risks[0]);
    checks.push(Check::at_most(
        format!("risk_affine_n{n}"),
        relative_gap(risks[1], predicted_mid),
        AFFINE_TOL,
    ));

    // realized risk splits into bias, noise and cross terms
    let exact = ExactRisk::new(&design, profile, 0.0)?;
    let c_clean = exact.coefficients_for_labels(&obs.clean)?;
    let noise: Vec<f64> = obs.y.iter().zip(&obs.clean).map(|(y, c)| y - c).collect();
    let c_noise = exact.coefficients_for_labels(&noise)?;
    let weight = |i: usize| profile.eigenvalue_at(i + 1).powf(1.0 - profile.eval);
    let target = exact.target();
    let (mut b, mut v, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..big_n {
        let e = c_clean[i] - target[i];
        b += weight(i) * e * e;
        v += weight(i) * c_noise[i] * c_noise[i];
        cross += weight(i) * e * c_noise[i];
    }
    let realized = exact.risk_for_labels(&obs.y)?;
    let assembled = b + v + 2.0 * cross + exact.tail_bias;
    checks.push(Check::at_most(
        format!("risk_decomposition_n{n}"),
        relative_gap(realized, assembled),
        DECOMPOSITION_TOL,
    ));

    // exact conditional risk against fresh noise draws on the same design
    let realized: Vec<f64> = (0..MC_DRAWS)
        .map(|m| {
            let o = observe_targets(&design, profile, derive_seed(seed, 1000 + m as u64))?;
            exact.risk_for_labels(&o.y)
        })
        .collect::<Result<_>>()?;
    let (mean, _, stderr) = summarize(&realized);
    let z = (mean - exact.total()).abs() / stderr;
    checks.push(Check::at_most(format!("mc_vs_exact_n{n}"), z, MC_STDERRS));

    Ok(checks)
}

/// Runs every machine-checkable identity on small designs. Failures are
/// report content, not errors.
pub fn run_validation_suite(config: &ExperimentConfig, out: &OutputDir) -> Result<ValidationReport> {
    let profile = suite_profile(config);
    let mut checks = Vec::new();
    for n in SUITE_SIZES {
        checks.extend(checks_at(config, &profile, n)?);
    }
    let passed = checks.iter().all(|c| c.passed);
    let report = ValidationReport {
        tool: ToolInfo::default(),
        config: config.clone(),
        truncation: profile.truncation,
        fault_injected: config.inject_fault,
        checks,
        passed,
    };
    out.json("validate.json", &report)?;
    Ok(report)
}
