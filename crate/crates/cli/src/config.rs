use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hlmrf::{InferenceConfig, LearnConfig, LossKind, SolverConfig, StopMode, Variant};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Everything a command needs. Built from flags, then overlaid by the
/// `--config` file when one is given.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub head: Option<PathBuf>,
    pub inference: InferenceConfig,
    pub learn: LearnConfig,
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: None,
            samples: None,
            head: None,
            inference: InferenceConfig::default(),
            learn: LearnConfig::default(),
            seed: 0,
            output: PathBuf::from("out"),
        }
    }
}

/// Flags shared by the commands that run the solver.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct SolverFlags {
    /// Solver variant: serial, cc or lockfree.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Quadratic regularization of the compiled program.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Primal-dual gap tolerance.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Stopping rule: gap or primal-movement.
    #[arg(long, value_parser = parse_stop_mode)]
    pub stop_mode: Option<StopMode>,
    #[arg(long)]
    pub movement_tol: Option<f64>,
    #[arg(long)]
    pub feas_tol: Option<f64>,
}

fn parse_stop_mode(s: &str) -> Result<StopMode, String> {
    match s {
        "gap" => Ok(StopMode::Gap),
        "primal-movement" | "movement" => Ok(StopMode::PrimalMovement),
        other => Err(format!("unknown stop mode `{other}`")),
    }
}

impl SolverFlags {
    pub fn apply(&self, inf: &mut InferenceConfig) {
        if let Some(v) = self.variant {
            inf.variant = v;
        }
        if let Some(v) = self.workers {
            inf.workers = v;
        }
        if let Some(v) = self.epsilon {
            inf.epsilon = v;
        }
        apply_solver(self, &mut inf.solver);
    }
}

fn apply_solver(f: &SolverFlags, s: &mut SolverConfig) {
    if let Some(v) = f.delta {
        s.delta = v;
    }
    if let Some(v) = f.max_epochs {
        s.max_epochs = v;
    }
    if let Some(v) = f.stop_mode {
        s.stop_mode = v;
    }
    if let Some(v) = f.movement_tol {
        s.movement_tol = v;
    }
    if let Some(v) = f.feas_tol {
        s.feas_tol = v;
    }
}

/// Learning flags; unset ones keep the library defaults.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct LearnFlags {
    /// Loss: energy, sp, mse or bce.
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub step_w_sy: Option<f64>,
    #[arg(long)]
    pub step_w_nn: Option<f64>,
    #[arg(long)]
    pub step_y: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    /// Total inner epochs across the learning run.
    #[arg(long)]
    pub learn_max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub energy_coefficient: Option<f64>,
}

impl LearnFlags {
    pub fn apply(&self, l: &mut LearnConfig) {
        if let Some(v) = self.loss {
            l.loss = v;
        }
        if let Some(v) = self.step_w_sy {
            l.step_w_sy = v;
        }
        if let Some(v) = self.step_w_nn {
            l.step_w_nn = v;
        }
        if let Some(v) = self.step_y {
            l.step_y = v;
        }
        if let Some(v) = self.rho {
            l.rho = v;
        }
        if let Some(v) = self.max_inner {
            l.max_inner = v;
        }
        if let Some(v) = self.learn_max_epochs {
            l.max_epochs = v;
        }
        if let Some(v) = self.patience {
            l.patience = v;
        }
        if let Some(v) = self.energy_coefficient {
            l.energy_coefficient = v;
        }
    }
}

impl ExperimentConfig {
    /// Applies `file` on top of `self`: keys present in the file win.
    pub fn overlay_file(self, file: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(file).with_context(|| format!("reading config {}", file.display()))?;
        let patch: Value =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", file.display()))?;
        let mut base = serde_json::to_value(&self)?;
        merge(&mut base, patch);
        serde_json::from_value(base).with_context(|| format!("invalid config {}", file.display()))
    }

    pub fn check_files(&self) -> Result<()> {
        for p in [&self.model, &self.samples, &self.head].into_iter().flatten() {
            if !p.exists() {
                bail!("file not found: {}", p.display());
            }
        }
        Ok(())
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}
