use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::fit::{fit_loglog_slope, SlopeFit};
use super::{emit_rows, median, Check, OutputDir, ToolInfo};
use crate::error::Result;
use crate::estimator::{assemble_kernel, IndexRange};
use crate::fourier_basis::sample_design;
use crate::rng::derive_seed;
use crate::theory::{concentration_coefficient, eigen_slope_prediction, tail_trace, TailTrace};

/// Negative eigenvalues down to this fraction of `mu_1` count as rounding.
pub const PSD_TOL: f64 = 1e-10;
/// `mu_n` must fall within this factor of `tail_trace(k') / n`.
pub const TAIL_BRACKET_FACTOR: f64 = 10.0;
/// `mu_1` must fall within this factor of the leading weight.
pub const TOP_EIGENVALUE_FACTOR: f64 = 5.0;
/// `k' = TAIL_INDEX_MULTIPLE * n` for the tail comparison.
pub const TAIL_INDEX_MULTIPLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub k: usize,
    pub mu_k: f64,
}

/// Spectrum statistics of one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpectrum {
    pub replicate: usize,
    pub seed: u64,
    pub head_slope: Option<SlopeFit>,
    pub mu_first: f64,
    pub mu_last: f64,
    /// Smallest eigenvalue relative to `mu_1`.
    pub min_relative: f64,
    /// `mu_n / (tail_trace(k') / n)`.
    pub tail_ratio: Option<f64>,
    /// `(k, rho_{k,n})` for every entry of the k-grid.
    pub concentration: Vec<(usize, f64)>,
    #[serde(skip)]
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenspectrumReport {
    pub tool: ToolInfo,
    pub config: ExperimentConfig,
    pub n: usize,
    pub truncation: usize,
    /// Head fit window `[2, k_max]`.
    pub head_window: (usize, usize),
    pub predicted_head_slope: f64,
    pub tail_index: usize,
    /// Tail trace at `k'` with its integral bracket, divided by `n`.
    pub tail_reference: Option<TailTrace>,
    pub designs: Vec<DesignSpectrum>,
    pub median_head_slope: Option<f64>,
    pub median_tail_ratio: Option<f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Upper end of the head window, `floor(n / (4 ln n))`.
pub fn head_window_end(n: usize) -> usize {
    let nf = n as f64;
    (nf / (4.0 * nf.ln())).floor() as usize
}

/// Eigenvalues of `K/n` over replicate designs at a single `n`.
pub fn run_eigenspectrum(config: &ExperimentConfig, out: &OutputDir) -> Result<EigenspectrumReport> {
    config.validate()?;
    let n = config.n_grid[0];
    let profile = config.profile(n);
    let gamma = config.gamma.gamma_at(n);
    let nf = n as f64;
    let k_max = head_window_end(n);
    let tail_index = TAIL_INDEX_MULTIPLE * n;
    let tail_reference = tail_trace(&profile, tail_index).ok().map(|t| TailTrace {
        value: t.value / nf,
        lower: t.lower / nf,
        upper: t.upper / nf,
    });

    let designs: Vec<DesignSpectrum> = (0..config.replicates)
        .into_par_iter()
        .map(|replicate| {
            let seed = derive_seed(config.master_seed, replicate as u64);
            let design = sample_design(n, seed)?;
            let kernel = assemble_kernel(&design, &profile, IndexRange::full(profile.truncation))?;
            let mut mu: Vec<f64> = kernel.eigenvalues()?.into_iter().map(|v| v / nf).collect();
            mu.reverse();
            let head_slope = if k_max >= 4 {
                let ks: Vec<f64> = (2..=k_max).map(|k| k as f64).collect();
                fit_loglog_slope(&ks, &mu[1..k_max]).ok()
            } else {
                None
            };
            let concentration = config
                .k_grid
                .iter()
                .map(|&k| Ok((k, concentration_coefficient(&design, &profile, k, gamma)?)))
                .collect::<Result<_>>()?;
            Ok(DesignSpectrum {
                replicate,
                seed,
                head_slope,
                mu_first: mu[0],
                mu_last: mu[n - 1],
                min_relative: mu[n - 1] / mu[0],
                tail_ratio: tail_reference.map(|t| mu[n - 1] / t.value),
                concentration,
                eigenvalues: mu,
            })
        })
        .collect::<Result<_>>()?;

    let mut csv = out.csv("eigenspectrum.csv")?;
    let rows: Vec<EigenRow> = (0..n)
        .map(|k| {
            let vals: Vec<f64> = designs.iter().map(|d| d.eigenvalues[k]).collect();
            EigenRow {
                k: k + 1,
                mu_k: median(&vals),
            }
        })
        .collect();
    emit_rows(&mut csv, &rows)?;

    let predicted_head_slope = eigen_slope_prediction(&profile);
    let slopes: Vec<f64> = designs.iter().filter_map(|d| d.head_slope.map(|f| f.slope)).collect();
    let ratios: Vec<f64> = designs.iter().filter_map(|d| d.tail_ratio).collect();
    let median_head_slope = (!slopes.is_empty()).then(|| median(&slopes));
    let median_tail_ratio = (!ratios.is_empty()).then(|| median(&ratios));

    let mut checks = Vec::new();
    if slopes.len() == designs.len() {
        let worst = slopes
            .iter()
            .copied()
            .max_by(|a, b| {
                (a - predicted_head_slope)
                    .abs()
                    .total_cmp(&(b - predicted_head_slope).abs())
            })
            .unwrap();
        checks.push(Check::within(
            "head_slope",
            worst,
            predicted_head_slope,
            config.tolerance,
        ));
    }
    if ratios.len() == designs.len() {
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        let lo_bound = 1.0 / TAIL_BRACKET_FACTOR;
        checks.push(Check::new(
            "tail_bracket_low",
            lo,
            format!("x >= {lo_bound}"),
            lo >= lo_bound,
        ));
        checks.push(Check::new(
            "tail_bracket_high",
            hi,
            format!("x <= {TAIL_BRACKET_FACTOR}"),
            hi <= TAIL_BRACKET_FACTOR,
        ));
    }
    let min_rel = designs.iter().map(|d| d.min_relative).fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        "psd",
        min_rel,
        format!("x >= -{PSD_TOL:e}"),
        min_rel >= -PSD_TOL,
    ));
    let lead = profile.transformed_weight(1);
    let worst_top = designs
        .iter()
        .map(|d| (d.mu_first / lead).ln().abs())
        .fold(0.0f64, f64::max)
        .exp();
    checks.push(Check::new(
        "top_eigenvalue",
        worst_top,
        format!("x <= {TOP_EIGENVALUE_FACTOR}"),
        worst_top <= TOP_EIGENVALUE_FACTOR,
    ));

    let passed = checks.iter().all(|c| c.passed);
    let report = EigenspectrumReport {
        tool: ToolInfo::default(),
        config: config.clone(),
        n,
        truncation: profile.truncation,
        head_window: (2, k_max),
        predicted_head_slope,
        tail_index,
        tail_reference,
        designs,
        median_head_slope,
        median_tail_ratio,
        checks,
        passed,
    };
    out.json("eigenspectrum.json", &report)?;
    Ok(report)
}
