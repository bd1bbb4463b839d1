//! Command-line arguments and `--config` merging.
//!
//! Every subcommand's options can also come from a JSON file passed with
//! `--config`; keys are the long flag names in snake_case and unknown keys
//! are rejected. Flags given on the command line win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "representer", version, about = "Check, solve and explore regularizers with representer theorems")]
pub struct Cli {
    /// JSON file with defaults for the subcommand's options.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the admissibility suites on a regularizer.
    Check(CheckArgs),
    /// Solve a vector interpolation or regularization problem from CSV.
    Solve(SolveArgs),
    /// Solve a multi-task problem from CSV.
    Mtl(SolveArgs),
    /// Follow a regularization problem as gamma goes to zero.
    GammaPath(GammaPathArgs),
    /// Search for an orthogonal perturbation that lowers the regularizer.
    Counterexample(SearchArgs),
    /// Write a synthetic low-rank multi-task dataset.
    GenData(GenDataArgs),
    /// Summarize report files written by the other commands.
    Report(ReportArgs),
}

/// Accepts either a JSON string or an inline JSON object in config files.
fn string_or_object<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    Ok(match Option::<serde_json::Value>::deserialize(d)? {
        None => None,
        Some(serde_json::Value::String(s)) => Some(s),
        Some(other) => Some(other.to_string()),
    })
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckArgs {
    /// Regularizer as JSON, or @path to a JSON file.
    #[arg(long)]
    #[serde(deserialize_with = "string_or_object")]
    pub reg: Option<String>,
    /// Input dimension (vector regularizers; default 3).
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of tasks (overrides the regularizer's `n`).
    #[arg(long)]
    pub n: Option<usize>,
    /// Random trials per suite (default 1000).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Seed (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tolerance applied to every suite (default: per-suite).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Require a strict increase in the vector geometric suite.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,
    /// Comma-separated suites to run (default: all applicable).
    #[arg(long, value_delimiter = ',')]
    pub suites: Option<Vec<String>>,
    /// Report path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveArgs {
    /// Regularizer as JSON, or @path to a JSON file.
    #[arg(long)]
    #[serde(deserialize_with = "string_or_object")]
    pub reg: Option<String>,
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// full, reduced or both (default full).
    #[arg(long)]
    pub mode: Option<String>,
    /// square, hinge or logistic (default square; needs --gamma).
    #[arg(long)]
    pub loss: Option<String>,
    /// Regularization weight; without it the problem is interpolation.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Treat all tasks as sharing one input list (mtl only).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub shared: Option<bool>,
    /// Seed for the starting point (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Iteration cap (default 50000).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Trace-norm smoothing (default 1e-8).
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Decrease the smoothing from 1e-2 in stages.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub continuation: Option<bool>,
    /// Report path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of (iteration, objective).
    #[arg(long)]
    pub emit_plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaPathArgs {
    /// Regularizer as JSON, or @path (default squared_l2).
    #[arg(long)]
    #[serde(deserialize_with = "string_or_object")]
    pub reg: Option<String>,
    /// square, hinge or logistic (default square).
    #[arg(long)]
    pub loss: Option<String>,
    /// Comma-separated x (default 1,2).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// Comma-separated direction v (default 1,1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v: Option<Vec<f64>>,
    /// Comma-separated outputs y (default 1,1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y: Option<Vec<f64>>,
    /// Comma-separated decreasing gammas (default 13 points, 1 to 1e-6).
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Seed (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Summary path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of (gamma, objective, limit_gap).
    #[arg(long)]
    pub emit_plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchArgs {
    /// Regularizer as JSON, or @path to a JSON file.
    #[arg(long)]
    #[serde(deserialize_with = "string_or_object")]
    pub reg: Option<String>,
    /// Input dimension (vector regularizers; default 3).
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of tasks (overrides the regularizer's `n`).
    #[arg(long)]
    pub n: Option<usize>,
    /// Evaluation budget (default 1000).
    #[arg(long)]
    pub budget: Option<usize>,
    /// Seed (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Smallest drop reported (default 1e-9).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Report path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataArgs {
    /// Input dimension (default 10).
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of tasks (default 4).
    #[arg(long)]
    pub n: Option<usize>,
    /// Rank of the ground truth (default 1).
    #[arg(long)]
    pub rank: Option<usize>,
    /// Samples per task (default 5).
    #[arg(long)]
    pub m: Option<usize>,
    /// Output noise level (default 0).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Seed (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportArgs {
    /// Report files.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

/// Config file values overlaid with the flags that were given.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(flags).map_err(CliError::internal)?)
            .map_err(CliError::internal)?);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut base: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    serde_json::from_value::<T>(base.clone()).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let overlay = serde_json::to_value(flags).map_err(CliError::internal)?;
    let (Some(target), Some(given)) = (base.as_object_mut(), overlay.as_object()) else {
        return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
    };
    for (key, value) in given {
        if !value.is_null() {
            target.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}
