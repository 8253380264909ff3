use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_problem::{validate_profile, Feature, RidgeSchedule, SpectralProfile, TruncationPolicy};

pub const MAX_N: usize = 4096;
pub const MAX_REPLICATES: usize = 512;
pub const DEFAULT_TOLERANCE: f64 = 0.2;
pub const DEFAULT_SLOPE_N_MIN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    LearningCurve,
    NoiseProfile,
    Eigenspectrum,
    RateCheck,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::LearningCurve => "learning_curve",
            Experiment::NoiseProfile => "noise_profile",
            Experiment::Eigenspectrum => "eigenspectrum",
            Experiment::RateCheck => "rate_check",
            Experiment::Validate => "validate",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::Config(format!("unknown experiment '{s}'")))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the spectral truncation `N` follows the sample size.
///
/// Serialized as `"auto"`, an integer, or a multiple of `n` written `"4n"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TruncationToken", into = "TruncationToken")]
pub enum TruncationRule {
    Auto,
    Fixed(usize),
    PerSample(usize),
}

impl TruncationRule {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            TruncationRule::Auto => SpectralProfile::default_truncation(n),
            TruncationRule::Fixed(big_n) => big_n,
            TruncationRule::PerSample(m) => m * n,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TruncationToken {
    Fixed(usize),
    Text(String),
}

impl TryFrom<TruncationToken> for TruncationRule {
    type Error = String;

    fn try_from(token: TruncationToken) -> std::result::Result<Self, String> {
        match token {
            TruncationToken::Fixed(0) => Err("truncation must be positive".into()),
            TruncationToken::Fixed(big_n) => Ok(TruncationRule::Fixed(big_n)),
            TruncationToken::Text(s) if s == "auto" => Ok(TruncationRule::Auto),
            TruncationToken::Text(s) => match s.strip_suffix('n').map(str::parse::<usize>) {
                Some(Ok(m)) if m > 0 => Ok(TruncationRule::PerSample(m)),
                _ => Err(format!(
                    "truncation must be \"auto\", a positive integer or \"<k>n\", got \"{s}\""
                )),
            },
        }
    }
}

impl From<TruncationRule> for TruncationToken {
    fn from(rule: TruncationRule) -> Self {
        match rule {
            TruncationRule::Auto => TruncationToken::Text("auto".into()),
            TruncationRule::Fixed(big_n) => TruncationToken::Fixed(big_n),
            TruncationRule::PerSample(m) => TruncationToken::Text(format!("{m}n")),
        }
    }
}

fn default_truncation_rule() -> TruncationRule {
    TruncationRule::Auto
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

fn default_slope_n_min() -> usize {
    DEFAULT_SLOPE_N_MIN
}

fn default_replicates() -> usize {
    16
}

/// A fully resolved experiment description.
///
/// Optional fields take their defaults at parse time, and the resolved value
/// is what every summary embeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub lambda: f64,
    pub p: f64,
    pub r: f64,
    pub beta: f64,
    pub beta_eval: f64,
    pub sigma2: f64,
    #[serde(default = "default_truncation_rule")]
    pub truncation: TruncationRule,
    #[serde(default)]
    pub tail_policy: TruncationPolicy,
    pub gamma: RidgeSchedule,
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub sigma2_grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub k_grid: Vec<usize>,
    /// Absolute slope tolerance for pass/fail checks.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Grid points below this `n` are left out of slope fits.
    #[serde(default = "default_slope_n_min")]
    pub slope_n_min: usize,
    /// Noise draws per design for the optional Monte Carlo column; 0 disables it.
    #[serde(default)]
    pub mc_replicates: usize,
    #[serde(default)]
    pub allow_high_bias: bool,
    /// Corrupts one kernel entry inside the validation suite.
    #[serde(default)]
    pub inject_fault: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Reference profile at `n` with the configured truncation rule.
    pub fn profile(&self, n: usize) -> SpectralProfile {
        SpectralProfile::new(
            self.lambda,
            self.p,
            self.r,
            self.beta,
            self.beta_eval,
            self.sigma2,
            self.truncation.resolve(n),
        )
        .with_tail_policy(self.tail_policy)
        .with_high_bias_override(self.allow_high_bias)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_grid.is_empty() {
            return bad("n_grid is empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("n_grid must be strictly ascending, got {:?}", self.n_grid));
        }
        if self.n_grid[0] == 0 || *self.n_grid.last().unwrap() > MAX_N {
            return bad(format!("n_grid entries must lie in [1, {MAX_N}]"));
        }
        if !(2..=MAX_REPLICATES).contains(&self.replicates) {
            return bad(format!(
                "replicates must lie in [2, {MAX_REPLICATES}], got {}",
                self.replicates
            ));
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.sigma2_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("sigma2_grid entries must be finite and >= 0".into());
        }
        self.gamma.validate().map_err(|e| Error::Config(e.to_string()))?;
        for &n in &self.n_grid {
            let big_n = self.truncation.resolve(n);
            if big_n > 1 << 20 {
                return bad(format!("truncation {big_n} at n = {n} exceeds 2^20"));
            }
        }
        validate_profile(&self.profile(self.n_grid[0]), &[Feature::Target])
            .into_result()
            .map_err(|e| Error::Config(e.to_string()))?;
        match self.experiment {
            Experiment::NoiseProfile if self.sigma2_grid.len() < 3 => {
                bad("noise_profile needs at least three sigma2_grid values".into())
            }
            Experiment::Eigenspectrum if self.n_grid.len() != 1 => bad("eigenspectrum runs a single n".into()),
            Experiment::Eigenspectrum => {
                let n = self.n_grid[0];
                if let Some(k) = self.k_grid.iter().find(|&&k| k >= n) {
                    return bad(format!("k_grid entry {k} must be below n = {n}"));
                }
                if self.truncation.resolve(n) < n {
                    return bad(format!("truncation must be at least n = {n}"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
