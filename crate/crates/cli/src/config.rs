use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rt_core::rt::SolverConfig;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "rtsmooth", version, about = "Smooth rough affine connections with the reduced RT iteration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Solve for J and B and write the dumps and diagnostics.
    Smooth,
    /// Run a property suite at three resolutions.
    Verify,
    /// Generate a corpus case.
    Corpus,
    /// Build a locally inertial frame for a smoothed connection.
    Inertial,
    /// Merge diagnostics files into one CSV.
    Report,
}

/// Every flag is optional so that the config file can supply it.
#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// Input dump (smooth, inertial) or diagnostics files/run directories (report).
    #[arg(long, global = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output directory, or the CSV path for report.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Points per axis (corpus) or coarsest level (verify).
    #[arg(long, global = true)]
    pub res: Option<usize>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Outer iteration tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Relative tolerance of the linear solves.
    #[arg(long, global = true)]
    pub linear_tol: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub amplitude: Option<f64>,
    #[arg(long, global = true)]
    pub suite: Option<String>,
    /// Point as comma-separated coordinates.
    #[arg(long, global = true, value_delimiter = ',')]
    pub point: Option<Vec<f64>>,
    /// Corpus case kind.
    #[arg(long, global = true)]
    pub kind: Option<String>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub family_size: Option<usize>,
    #[arg(long, global = true)]
    pub bound: Option<f64>,
    /// TOML file with the same keys as the flags (underscores instead of dashes).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<Vec<PathBuf>>,
    pub out: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub p: Option<f64>,
    pub res: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub linear_tol: Option<f64>,
    pub seed: Option<u64>,
    pub amplitude: Option<f64>,
    pub suite: Option<String>,
    pub point: Option<Vec<f64>>,
    pub kind: Option<String>,
    pub dim: Option<usize>,
    pub family_size: Option<usize>,
    pub bound: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub input: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub solver: SolverConfig,
    pub res: Option<usize>,
    pub seed: u64,
    pub amplitude: Option<f64>,
    pub suite: Option<String>,
    pub point: Option<Vec<f64>>,
    pub kind: Option<String>,
    pub dim: usize,
    pub family_size: usize,
    pub bound: f64,
}

impl RunConfig {
    /// Flags take precedence over the file.
    pub fn merge(command: Command, flags: Flags, file: FileConfig) -> Self {
        let mut solver = SolverConfig::default();
        if let Some(v) = flags.epsilon.or(file.epsilon) {
            solver.epsilon = v;
        }
        if let Some(v) = flags.p.or(file.p) {
            solver.p = v;
        }
        if let Some(v) = flags.max_iter.or(file.max_iter) {
            solver.max_iter = v;
        }
        if let Some(v) = flags.tol.or(file.tol) {
            solver.tol_iter = v;
        }
        if let Some(v) = flags.linear_tol.or(file.linear_tol) {
            solver.linear.tol_rel = v;
        }
        Self {
            command,
            input: if flags.input.is_empty() { file.input.unwrap_or_default() } else { flags.input },
            out: flags.out.or(file.out),
            solver,
            res: flags.res.or(file.res),
            seed: flags.seed.or(file.seed).unwrap_or(1),
            amplitude: flags.amplitude.or(file.amplitude),
            suite: flags.suite.or(file.suite),
            point: flags.point.or(file.point),
            kind: flags.kind.or(file.kind),
            dim: flags.dim.or(file.dim).unwrap_or(2),
            family_size: flags.family_size.or(file.family_size).unwrap_or(10),
            bound: flags.bound.or(file.bound).unwrap_or(2.0),
        }
    }

    pub fn single_input(&self) -> Result<&Path, String> {
        match self.input.as_slice() {
            [p] => Ok(p),
            [] => Err("--input is required".into()),
            _ => Err("expected a single --input".into()),
        }
    }

    pub fn out_dir(&self) -> Result<&Path, String> {
        match &self.out {
            Some(p) if !p.as_os_str().is_empty() => Ok(p),
            _ => Err("--out is required".into()),
        }
    }
}
