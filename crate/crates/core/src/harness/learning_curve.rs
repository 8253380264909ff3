use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::fit::{fit_loglog_slope, SlopeFit};
use super::{cell_seed, emit_rows, median, Check, OutputDir, ToolInfo};
use crate::error::Result;
use crate::estimator::observe_targets;
use crate::fourier_basis::sample_design;
use crate::risk::{summarize, ExactRisk};
use crate::rng::derive_seed;
use crate::theory::{predicted_exponents, RatePrediction, Regime};

/// One `(n, replicate)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub gamma: f64,
    pub bias_exact: f64,
    pub variance_exact: f64,
    pub tail_bias: f64,
    pub total: f64,
    pub mc_risk: Option<f64>,
    pub cond_estimate: f64,
}

impl CellRecord {
    /// Squared bias including the tail terms.
    pub fn bias(&self) -> f64 {
        self.bias_exact + self.tail_bias
    }
}

/// Replicate statistics at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub truncation: usize,
    pub gamma: f64,
    pub mean_bias: f64,
    pub median_bias: f64,
    pub mean_variance: f64,
    pub median_variance: f64,
    pub mean_total: f64,
    pub median_total: f64,
    pub stderr_total: f64,
}

impl CurvePoint {
    fn from_cells(n: usize, truncation: usize, gamma: f64, cells: &[CellRecord]) -> Self {
        let bias: Vec<f64> = cells.iter().map(CellRecord::bias).collect();
        let var: Vec<f64> = cells.iter().map(|c| c.variance_exact).collect();
        let total: Vec<f64> = cells.iter().map(|c| c.total).collect();
        let (mean_bias, median_bias, _) = summarize(&bias);
        let (mean_variance, median_variance, _) = summarize(&var);
        let (mean_total, median_total, stderr_total) = summarize(&total);
        Self {
            n,
            truncation,
            gamma,
            mean_bias,
            median_bias,
            mean_variance,
            median_variance,
            mean_total,
            median_total,
            stderr_total,
        }
    }
}

/// Which replicate statistic the slopes are fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Median,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveSlopes {
    pub bias: Option<SlopeFit>,
    pub variance: Option<SlopeFit>,
    pub total: Option<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveReport {
    pub tool: ToolInfo,
    pub config: ExperimentConfig,
    pub statistic: Statistic,
    pub points: Vec<CurvePoint>,
    pub slopes: CurveSlopes,
    pub prediction: Option<RatePrediction>,
    /// Why no prediction is available, when it is not.
    pub prediction_error: Option<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
    #[serde(skip)]
    pub cells: Vec<CellRecord>,
}

impl LearningCurveReport {
    pub fn point(&self, n: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.n == n)
    }
}

fn run_cell(config: &ExperimentConfig, n: usize, replicate: usize) -> Result<CellRecord> {
    let profile = config.profile(n);
    let gamma = config.gamma.gamma_at(n);
    let seed = cell_seed(config.master_seed, n, replicate);
    let design = sample_design(n, seed)?;
    let risk = ExactRisk::new(&design, &profile, gamma)?;
    let mc_risk = if config.mc_replicates > 0 {
        let mut acc = 0.0;
        for k in 0..config.mc_replicates {
            let obs = observe_targets(&design, &profile, derive_seed(seed, k as u64))?;
            acc += risk.risk_for_labels(&obs.y)?;
        }
        Some(acc / config.mc_replicates as f64)
    } else {
        None
    };
    Ok(CellRecord {
        n,
        replicate,
        seed,
        gamma,
        bias_exact: risk.bias,
        variance_exact: risk.variance(),
        tail_bias: risk.tail_bias,
        total: risk.total(),
        mc_risk,
        cond_estimate: risk.factor.cond_estimate,
    })
}

/// Fit over the grid points with `n >= n_min`; `None` when fewer than three
/// remain or the series is not positive.
fn fit_series(points: &[CurvePoint], n_min: usize, value: impl Fn(&CurvePoint) -> f64) -> Option<SlopeFit> {
    let used: Vec<&CurvePoint> = points.iter().filter(|p| p.n >= n_min).collect();
    let xs: Vec<f64> = used.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = used.iter().map(|p| value(p)).collect();
    fit_loglog_slope(&xs, &ys).ok()
}

/// Exact bias, variance and total risk over the n-grid with replicate designs.
///
/// Rows are written and flushed one sample size at a time, so an error part
/// way through leaves the completed sizes on disk.
pub fn run_learning_curve(config: &ExperimentConfig, out: &OutputDir) -> Result<LearningCurveReport> {
    config.validate()?;
    let stem = config.experiment.name();
    let mut csv = out.csv(&format!("{stem}.csv"))?;
    let mut cells = Vec::with_capacity(config.n_grid.len() * config.replicates);
    let mut points = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let rows: Vec<CellRecord> = (0..config.replicates)
            .into_par_iter()
            .map(|r| run_cell(config, n, r))
            .collect::<Result<_>>()?;
        emit_rows(&mut csv, &rows)?;
        points.push(CurvePoint::from_cells(
            n,
            config.truncation.resolve(n),
            config.gamma.gamma_at(n),
            &rows,
        ));
        cells.extend(rows);
    }

    let statistic = if config.gamma.is_ridgeless() {
        Statistic::Median
    } else {
        Statistic::Mean
    };
    let pick = |mean: f64, med: f64| match statistic {
        Statistic::Mean => mean,
        Statistic::Median => med,
    };
    let slopes = CurveSlopes {
        bias: fit_series(&points, config.slope_n_min, |p| pick(p.mean_bias, p.median_bias)),
        variance: fit_series(&points, config.slope_n_min, |p| {
            pick(p.mean_variance, p.median_variance)
        }),
        total: fit_series(&points, config.slope_n_min, |p| pick(p.mean_total, p.median_total)),
    };

    let (regime, gamma_exponent) = match config.gamma.decay_exponent() {
        None => (Regime::Interpolation, 0.0),
        Some(g) => (Regime::Regularized, g),
    };
    let (prediction, prediction_error) =
        match predicted_exponents(&config.profile(config.n_grid[0]), gamma_exponent, regime) {
            Ok(p) => (Some(p), None),
            Err(e) => (None, Some(e.to_string())),
        };

    let mut checks = Vec::new();
    if let Some(pred) = &prediction {
        for (name, fit, target) in [
            ("variance_slope", &slopes.variance, pred.variance_exponent),
            ("bias_slope", &slopes.bias, pred.bias_exponent),
            ("total_slope", &slopes.total, pred.total_exponent),
        ] {
            if let Some(fit) = fit {
                checks.push(Check::within(name, fit.slope, target, config.tolerance));
            }
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    let report = LearningCurveReport {
        tool: ToolInfo::default(),
        config: config.clone(),
        statistic,
        points,
        slopes,
        prediction,
        prediction_error,
        checks,
        passed,
        cells,
    };
    out.json(&format!("{stem}.json"), &report)?;
    Ok(report)
}

/// Median per-unit-noise variance over the replicate cells at `n`.
pub fn median_variance_at(report: &LearningCurveReport, n: usize) -> Option<f64> {
    let v: Vec<f64> = report
        .cells
        .iter()
        .filter(|c| c.n == n)
        .map(|c| c.variance_exact)
        .collect();
    (!v.is_empty()).then(|| median(&v))
}
