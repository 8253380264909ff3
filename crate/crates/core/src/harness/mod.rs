//! Experiment orchestration: configs, replicated runs, slope fits and
//! CSV/JSON artifacts.

pub mod config;
pub mod eigenspectrum;
pub mod fit;
pub mod learning_curve;
pub mod noise_profile;
pub mod validation;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::derive_seed;

pub use config::{Experiment, ExperimentConfig, TruncationRule};
pub use eigenspectrum::{run_eigenspectrum, EigenspectrumReport};
pub use fit::{fit_loglog_slope, SlopeFit};
pub use learning_curve::{run_learning_curve, LearningCurveReport};
pub use noise_profile::{run_noise_profile, NoiseProfileReport};
pub use validation::{run_validation_suite, ValidationReport};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One named pass/fail comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// Human-readable acceptance condition on `measured`.
    pub condition: String,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, condition: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            measured,
            condition: condition.into(),
            passed,
        }
    }

    /// `|measured - target| <= tolerance`.
    pub fn within(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        Self::new(
            name,
            measured,
            format!("|x - ({target})| <= {tolerance}"),
            (measured - target).abs() <= tolerance,
        )
    }

    /// `measured <= limit`.
    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self::new(name, measured, format!("x <= {limit:e}"), measured <= limit)
    }
}

/// Header fields shared by every JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
        }
    }
}

/// Seed of replicate `replicate` at sample size `n`.
pub fn cell_seed(master: u64, n: usize, replicate: usize) -> u64 {
    derive_seed(derive_seed(master, n as u64), replicate as u64)
}

/// Where an experiment writes its files; `None` keeps everything in memory.
#[derive(Debug, Clone, Default)]
pub struct OutputDir(Option<PathBuf>);

impl OutputDir {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self(Some(dir)))
    }

    pub fn none() -> Self {
        Self(None)
    }

    pub fn path(&self) -> Option<&Path> {
        self.0.as_deref()
    }

    pub(crate) fn csv(&self, file: &str) -> Result<Option<csv::Writer<File>>> {
        match &self.0 {
            Some(dir) => Ok(Some(csv::Writer::from_path(dir.join(file))?)),
            None => Ok(None),
        }
    }

    pub(crate) fn json<T: Serialize>(&self, file: &str, value: &T) -> Result<()> {
        if let Some(dir) = &self.0 {
            let mut w = BufWriter::new(File::create(dir.join(file))?);
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Writes `rows` and flushes so that a later failure leaves them on disk.
pub(crate) fn emit_rows<T: Serialize>(writer: &mut Option<csv::Writer<File>>, rows: &[T]) -> Result<()> {
    if let Some(w) = writer {
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Median of a non-empty sample.
pub(crate) fn median(values: &[f64]) -> f64 {
    crate::risk::summarize(values).1
}
