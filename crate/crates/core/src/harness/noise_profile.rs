use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{cell_seed, emit_rows, Check, OutputDir, ToolInfo};
use crate::error::Result;
use crate::fourier_basis::sample_design;
use crate::risk::{summarize, ExactRisk};
use crate::spectral_problem::SpectralProfile;

/// Collinearity tolerance for risks at three noise levels.
pub const AFFINE_TOL: f64 = 1e-12;
/// The operator profile must cut the per-unit variance by at least this factor.
pub const STABILIZATION_RATIO: f64 = 0.1;

pub const INVERSE_ID: &str = "inverse";
pub const REGRESSION_ID: &str = "regression";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub profile_id: String,
    pub n: usize,
    pub sigma2: f64,
    pub bias: f64,
    pub variance: f64,
    pub total: f64,
}

/// Replicate statistics of one profile at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileStats {
    pub profile_id: String,
    pub n: usize,
    pub mean_bias: f64,
    pub median_bias: f64,
    pub mean_unit_variance: f64,
    pub median_unit_variance: f64,
    /// Largest relative deviation from collinearity over the noise grid.
    pub affine_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfileReport {
    pub tool: ToolInfo,
    pub config: ExperimentConfig,
    pub stats: Vec<ProfileStats>,
    /// `(n, V1(inverse) / V1(regression))` on the headline statistic.
    pub variance_ratio: Vec<(usize, f64)>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl NoiseProfileReport {
    pub fn stats(&self, profile_id: &str, n: usize) -> Option<&ProfileStats> {
        self.stats.iter().find(|s| s.profile_id == profile_id && s.n == n)
    }

    /// Headline per-unit variance: the median for ridgeless runs, else the mean.
    pub fn unit_variance(&self, profile_id: &str, n: usize) -> Option<f64> {
        let s = self.stats(profile_id, n)?;
        Some(if self.config.gamma.is_ridgeless() {
            s.median_unit_variance
        } else {
            s.mean_unit_variance
        })
    }
}

/// Deviation of three `(sigma2, risk)` points from a common line, relative to
/// the largest risk.
fn collinearity_gap(points: &[(f64, f64)]) -> f64 {
    let (s0, r0) = points[0];
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    let (s_last, r_last) = points[points.len() - 1];
    let slope = (r_last - r0) / (s_last - s0);
    let gap = points
        .iter()
        .map(|&(s, r)| (r - (r0 + slope * (s - s0))).abs())
        .fold(0.0f64, f64::max);
    if scale > 0.0 {
        gap / scale
    } else {
        gap
    }
}

fn profile_stats(
    config: &ExperimentConfig,
    id: &str,
    profile_at: impl Fn(usize) -> SpectralProfile + Sync,
    n: usize,
) -> Result<ProfileStats> {
    let gamma = config.gamma.gamma_at(n);
    let per_design: Vec<(f64, f64)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let design = sample_design(n, cell_seed(config.master_seed, n, r))?;
            let risk = ExactRisk::new(&design, &profile_at(n), gamma)?;
            Ok((risk.bias + risk.tail_bias, risk.variance_per_unit()))
        })
        .collect::<Result<_>>()?;

    // independent recomputation at each noise level on the first design
    let design = sample_design(n, cell_seed(config.master_seed, n, 0))?;
    let points: Vec<(f64, f64)> = config
        .sigma2_grid
        .iter()
        .map(|&s2| {
            let risk = ExactRisk::new(&design, &profile_at(n).with_noise_var(s2), gamma)?;
            Ok((s2, risk.total()))
        })
        .collect::<Result<_>>()?;

    let bias: Vec<f64> = per_design.iter().map(|p| p.0).collect();
    let unit: Vec<f64> = per_design.iter().map(|p| p.1).collect();
    let (mean_bias, median_bias, _) = summarize(&bias);
    let (mean_unit_variance, median_unit_variance, _) = summarize(&unit);
    Ok(ProfileStats {
        profile_id: id.to_string(),
        n,
        mean_bias,
        median_bias,
        mean_unit_variance,
        median_unit_variance,
        affine_deviation: collinearity_gap(&points),
    })
}

/// Bias and per-unit-noise variance of the configured operator profile
/// against the same problem with the identity operator.
pub fn run_noise_profile(config: &ExperimentConfig, out: &OutputDir) -> Result<NoiseProfileReport> {
    config.validate()?;
    let mut csv = out.csv("noise_profile.csv")?;
    let mut stats = Vec::new();
    let mut variance_ratio = Vec::new();
    let mut checks = Vec::new();
    for &n in &config.n_grid {
        let inverse = profile_stats(config, INVERSE_ID, |n| config.profile(n), n)?;
        let regression = profile_stats(config, REGRESSION_ID, |n| config.profile(n).with_op_order(0.0), n)?;
        let mut rows = Vec::new();
        for s in [&inverse, &regression] {
            for &s2 in &config.sigma2_grid {
                let variance = s2 * s.mean_unit_variance;
                rows.push(NoiseRow {
                    profile_id: s.profile_id.clone(),
                    n,
                    sigma2: s2,
                    bias: s.mean_bias,
                    variance,
                    total: s.mean_bias + variance,
                });
            }
            checks.push(Check::at_most(
                format!("affine_{}_n{n}", s.profile_id),
                s.affine_deviation,
                AFFINE_TOL,
            ));
        }
        emit_rows(&mut csv, &rows)?;
        stats.push(inverse);
        stats.push(regression);
    }
    let mut report = NoiseProfileReport {
        tool: ToolInfo::default(),
        config: config.clone(),
        stats,
        variance_ratio: Vec::new(),
        checks: Vec::new(),
        passed: false,
    };
    for &n in &config.n_grid {
        let ratio = report.unit_variance(INVERSE_ID, n).unwrap() / report.unit_variance(REGRESSION_ID, n).unwrap();
        variance_ratio.push((n, ratio));
        checks.push(Check::new(
            format!("variance_ratio_n{n}"),
            ratio,
            format!("x < {STABILIZATION_RATIO}"),
            ratio < STABILIZATION_RATIO,
        ));
    }
    report.variance_ratio = variance_ratio;
    report.passed = checks.iter().all(|c| c.passed);
    report.checks = checks;
    out.json("noise_profile.json", &report)?;
    Ok(report)
}
