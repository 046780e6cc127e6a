//! Experiment runners behind the `drmpg` CLI.
//!
//! Each runner computes everything in memory first and only then writes its
//! artifacts, so an aborted run leaves no partial CSV behind. Output files:
//!
//! | file | columns |
//! |------|---------|
//! | `train.csv` | iteration, mean_return, batch_drm, grad_norm |
//! | `timing.csv` | iteration, wall_ms |
//! | `plot.csv` | iteration, mean_return, mean_return_smoothed, batch_drm, batch_drm_smoothed |
//! | `eval.csv` | policy, iterate, episodes, mean_return, empirical_drm |
//! | `mse.csv` | mode, m, batches, empirical_mse, lemma_bound, ratio, decay_4x |
//!
//! `manifest.json` records [`SCHEMA_VERSION`] and the column lists;
//! `config.toml` echoes the fully resolved configuration.

mod config;
mod mse;
mod suite;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{
    preset_names, BoundRule, EnvKind, EnvSpec, Experiment, ExperimentConfig, MseSection, ReturnBound,
    SuiteSection, TrainSection,
};
pub use mse::{run_mse_study, MseReport, MseRow};
pub use suite::{run_oracle_suite, run_oracle_suite_with, NamedConstants, SuiteOptions, SuiteReport};
pub use train::{run_train, EvalRow, RunOutcome, RunSummary, TrainReport};

/// Version of the CSV and JSON artifact layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Outcome of one named verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// The inputs that broke the check, if any.
    pub violations: Vec<String>,
}

impl Check {
    fn new(name: impl Into<String>, violations: Vec<String>, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: violations.is_empty(),
            detail,
            violations,
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    experiment: &'a str,
    seeds: &'a [u64],
    files: Vec<FileSchema<'a>>,
}

#[derive(Debug, Serialize)]
struct FileSchema<'a> {
    path: String,
    columns: &'a [&'a str],
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
