//! Exact conditional excess risk in an evaluation Sobolev norm, split into
//! bias and variance, with a Monte Carlo cross-check.

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    assemble_kernel, estimator_coefficients_batch, observe_targets, IndexRange, KernelSystem, SolverOptions,
    SystemFactor, ASSEMBLY_BLOCK,
};
use crate::fourier_basis::{fill_scaled_block, sample_design, DesignSample};
use crate::rng::derive_seed;
use crate::spectral_problem::{power_tail_sum, SpectralProfile};

/// Relative size at which the unsummed variance remainder is neglected.
pub const VARIANCE_TAIL_REL_TOL: f64 = 1e-10;

/// `sum_i lambda_i^(1 - beta'') a_i^2`.
pub fn sobolev_norm_sq(coeffs: &[f64], beta_pp: f64, profile: &SpectralProfile) -> f64 {
    let e = profile.lambda_decay * (1.0 - beta_pp);
    coeffs
        .iter()
        .enumerate()
        .map(|(k, a)| ((k + 1) as f64).powf(-e) * a * a)
        .sum()
}

/// `||a - b||^2` in `H^beta''`.
pub fn sobolev_distance_sq(a: &[f64], b: &[f64], beta_pp: f64, profile: &SpectralProfile) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let e = profile.lambda_decay * (1.0 - beta_pp);
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(k, (x, y))| ((k + 1) as f64).powf(-e) * (x - y) * (x - y))
        .sum()
}

/// Target mass beyond the truncation, `sum_{i>N} lambda_i^(1-beta') c_i^2`.
pub fn tail_bias(profile: &SpectralProfile) -> f64 {
    power_tail_sum(profile.target_norm_exponent(), profile.truncation)
}

/// Exponent `e` of `D_i = p_i lambda_i^(beta - beta'/2) = i^-e`, the weight
/// turning `psi_i^T theta` into an evaluation-norm contribution.
fn evaluation_weight_exponent(profile: &SpectralProfile) -> f64 {
    profile.op_order + profile.lambda_decay * (profile.bias - profile.eval / 2.0)
}

/// `sum_{i>N} D_i^2`, the closed-tail energy per unit `||theta||^2`; zero
/// without a closure.
fn closure_energy(system: &KernelSystem, profile: &SpectralProfile) -> f64 {
    if system.closure > 0.0 {
        power_tail_sum(2.0 * evaluation_weight_exponent(profile), profile.truncation)
    } else {
        0.0
    }
}

/// Bias, variance and diagnostics of one estimator on one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub n: usize,
    pub gamma: f64,
    pub seed: u64,
    pub bias: f64,
    pub variance: f64,
    pub tail_bias: f64,
    pub total: f64,
    pub mc_mean: Option<f64>,
    pub mc_median: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub replicates: usize,
}

/// Exact risk engine for a fixed design, profile and ridge parameter.
///
/// Conditional on the design the estimator is linear in the labels, so the
/// risk for noise variance `s^2` is `bias + tail_bias + s^2 * variance_per_unit`.
#[derive(Debug, Clone)]
pub struct ExactRisk {
    pub design: DesignSample,
    pub profile: SpectralProfile,
    pub gamma: f64,
    pub system: KernelSystem,
    pub factor: SystemFactor,
    target: Vec<f64>,
    /// `||f(clean) - f*||^2` over the first `N` coordinates.
    pub bias: f64,
    /// Target mass beyond `N` plus, under the closure, the estimator's
    /// closed-tail energy on clean labels.
    pub tail_bias: f64,
    /// `sum_{i>N} D_i^2`, zero without a closure.
    pub closure_energy: f64,
    /// `E ||f(eps)||^2` for unit noise variance; `None` when not computed.
    pub variance_per_unit: Option<f64>,
    /// Bound on the variance terms left unsummed by early stopping.
    pub variance_tail_bound: f64,
}

impl ExactRisk {
    pub fn new(design: &DesignSample, profile: &SpectralProfile, gamma: f64) -> Result<Self> {
        Self::build(design, profile, gamma, SolverOptions::default(), true)
    }

    pub fn with_options(
        design: &DesignSample,
        profile: &SpectralProfile,
        gamma: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        Self::build(design, profile, gamma, options, true)
    }

    /// Skips the variance computation.
    pub fn bias_only(design: &DesignSample, profile: &SpectralProfile, gamma: f64) -> Result<Self> {
        Self::build(design, profile, gamma, SolverOptions::default(), false)
    }

    fn build(
        design: &DesignSample,
        profile: &SpectralProfile,
        gamma: f64,
        options: SolverOptions,
        with_variance: bool,
    ) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gamma must be finite and >= 0, got {gamma}"
            )));
        }
        let target = profile.target_coefficients()?;
        let system = assemble_kernel(design, profile, IndexRange::full(profile.truncation))?;
        let n = design.n();
        let factor = SystemFactor::new(&system, n as f64 * gamma, options)?;

        let clean = observe_targets(design, &profile.with_noise_var(0.0), design.seed)?.clean;
        let solution = factor.solve(&system, &clean)?;
        let theta = MatRef::from_column_major_slice(&solution.theta, n, 1);
        let c = estimator_coefficients_batch(theta, design, profile);
        let coeffs: Vec<f64> = (0..c.nrows()).map(|i| c[(i, 0)]).collect();
        let bias = sobolev_distance_sq(&coeffs, &target, profile.eval, profile);
        let energy = closure_energy(&system, profile);
        let theta_sq: f64 = solution.theta.iter().map(|t| t * t).sum();

        let mut risk = Self {
            design: design.clone(),
            profile: *profile,
            gamma,
            system,
            factor,
            target,
            bias,
            tail_bias: tail_bias(profile) + energy * theta_sq,
            closure_energy: energy,
            variance_per_unit: None,
            variance_tail_bound: 0.0,
        };
        if with_variance {
            let (v, bound) = risk.unit_variance();
            risk.variance_per_unit = Some(v);
            risk.variance_tail_bound = bound;
        }
        Ok(risk)
    }

    /// `sum_{i<=N} D_i^2 ||A^+ psi_i||^2` plus the closed tail
    /// `||A^+||_F^2 sum_{i>N} D_i^2`.
    ///
    /// Works on feature blocks directly rather than through a Gram matrix, so
    /// the conditioning of the system enters once and not squared. Stops once
    /// the remainder bound `||A^+||^2 * 2n * sum_{i>hi} D_i^2` is negligible
    /// against the partial sum, which is itself a lower bound.
    fn unit_variance(&self) -> (f64, f64) {
        let p = &self.profile;
        let n = self.design.n();
        let e = evaluation_weight_exponent(p);
        let scale = move |i: usize| (i as f64).powf(-e);
        let inv_sq = self.factor.inverse_norm_bound.powi(2);
        let mut total = 0.0;
        let mut remainder = 0.0;
        for (lo, hi) in IndexRange::full(p.truncation).blocks(ASSEMBLY_BLOCK) {
            let mut h = Mat::zeros(n, hi - lo + 1);
            fill_scaled_block(&self.design.points, lo, hi, &mut h, scale);
            total += self.factor.inverse_frobenius_sq(h.as_ref());
            remainder = if hi < p.truncation {
                inv_sq * 2.0 * n as f64 * (power_tail_sum(2.0 * e, hi) - power_tail_sum(2.0 * e, p.truncation))
            } else {
                0.0
            };
            if remainder <= VARIANCE_TAIL_REL_TOL * total {
                break;
            }
        }
        if self.closure_energy > 0.0 {
            total += self.closure_energy * self.factor.inverse_frobenius_sq_total();
        }
        (total, remainder)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn variance_per_unit(&self) -> f64 {
        self.variance_per_unit.unwrap_or(f64::NAN)
    }

    /// `sigma^2 * variance_per_unit` at the profile's noise level.
    pub fn variance(&self) -> f64 {
        if self.profile.noise_var == 0.0 {
            0.0
        } else {
            self.profile.noise_var * self.variance_per_unit()
        }
    }

    pub fn total(&self) -> f64 {
        self.bias + self.tail_bias + self.variance()
    }

    /// Estimator coordinates for arbitrary labels, reusing the factorization.
    pub fn coefficients_for_labels(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.fit_labels(y)?.0)
    }

    /// Head coordinates and `||theta||^2` for arbitrary labels.
    fn fit_labels(&self, y: &[f64]) -> Result<(Vec<f64>, f64)> {
        let s = self.factor.solve(&self.system, y)?;
        let theta = MatRef::from_column_major_slice(&s.theta, s.theta.len(), 1);
        let c = estimator_coefficients_batch(theta, &self.design, &self.profile);
        let theta_sq = s.theta.iter().map(|t| t * t).sum();
        Ok(((0..c.nrows()).map(|i| c[(i, 0)]).collect(), theta_sq))
    }

    /// Evaluation-norm energy of the closed tail for labels `y`.
    pub fn closure_energy_for_labels(&self, y: &[f64]) -> Result<f64> {
        Ok(self.closure_energy * self.fit_labels(y)?.1)
    }

    /// Realized risk `||f(y) - f*||^2_{H^beta'}` including the tail terms.
    pub fn risk_for_labels(&self, y: &[f64]) -> Result<f64> {
        let (c, theta_sq) = self.fit_labels(y)?;
        Ok(sobolev_distance_sq(&c, &self.target, self.profile.eval, &self.profile)
            + tail_bias(&self.profile)
            + self.closure_energy * theta_sq)
    }

    pub fn report(&self) -> RiskReport {
        RiskReport {
            n: self.design.n(),
            gamma: self.gamma,
            seed: self.design.seed,
            bias: self.bias,
            variance: self.variance(),
            tail_bias: self.tail_bias,
            total: self.total(),
            mc_mean: None,
            mc_median: None,
            mc_stderr: None,
            replicates: 1,
        }
    }
}

/// Exact squared bias including the analytic tail.
pub fn excess_bias_exact(design: &DesignSample, profile: &SpectralProfile, gamma: f64) -> Result<f64> {
    let r = ExactRisk::bias_only(design, profile, gamma)?;
    Ok(r.bias + r.tail_bias)
}

/// Exact conditional variance `sigma^2 * E||f(eps)||^2`.
pub fn excess_variance_exact(design: &DesignSample, profile: &SpectralProfile, gamma: f64) -> Result<f64> {
    if profile.noise_var == 0.0 {
        return Ok(0.0);
    }
    Ok(ExactRisk::new(design, profile, gamma)?.variance())
}

/// Mean, median and standard error of a sample.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    (mean, median, stderr)
}

/// Monte Carlo risk over fresh designs and noise, one child seed per replicate.
///
/// `bias`, `variance` and `tail_bias` hold the means of the exact values over
/// the same designs, so the two estimates can be compared directly.
pub fn mc_excess_risk(
    profile: &SpectralProfile,
    n: usize,
    gamma: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<RiskReport> {
    if replicates < 2 {
        return Err(Error::InvalidInput("Monte Carlo needs at least 2 replicates".into()));
    }
    let rows: Vec<(f64, f64, f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(master_seed, r as u64);
            let design = sample_design(n, seed)?;
            let exact = ExactRisk::new(&design, profile, gamma)?;
            let obs = observe_targets(&design, profile, seed)?;
            let risk = exact.risk_for_labels(&obs.y)?;
            Ok((risk, exact.bias, exact.variance(), exact.tail_bias))
        })
        .collect::<Result<_>>()?;
    let realized: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (mc_mean, mc_median, mc_stderr) = summarize(&realized);
    let k = replicates as f64;
    let bias = rows.iter().map(|r| r.1).sum::<f64>() / k;
    let variance = rows.iter().map(|r| r.2).sum::<f64>() / k;
    let tail = rows.iter().map(|r| r.3).sum::<f64>() / k;
    Ok(RiskReport {
        n,
        gamma,
        seed: master_seed,
        bias,
        variance,
        tail_bias: tail,
        total: bias + variance + tail,
        mc_mean: Some(mc_mean),
        mc_median: Some(mc_median),
        mc_stderr: Some(mc_stderr),
        replicates,
    })
}
