//! Weight learning through the optimal inference value.
//!
//! Value-based losses (energy, structured perceptron) are minimized directly
//! using the value-function gradients. Minimizer-based losses (MSE, BCE) are
//! trained through per-sample target copies `y_i` constrained by
//! `M_i(y_i) - V_i <= iota`, where `M_i` is the Moreau envelope of the energy
//! and `V_i` the optimal value; the constraint is handled with slacks and an
//! augmented Lagrangian while `iota` is halved between stages.

mod framework;
mod lagrangian;
mod latent;
mod losses;
mod moreau;
mod optim;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::InferenceConfig;

pub use framework::{EpochRecord, LearnOutcome, Learner, LearnerState, Metrics};
pub use lagrangian::{AugmentedLagrangian, LagrangianGrads};
pub use latent::{latent_inference, LatentProblem, LatentSolution};
pub use losses::{energy_loss, sp_loss, supervised_loss, LossEval, LossKind};
pub use moreau::{moreau_envelope, MoreauResult};
pub use optim::{mirror_descent_step, Adam, AdamConfig};

/// One training example: labels for some targets, the rest latent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    /// Target index to label value in `[0, 1]`.
    pub labels: BTreeMap<usize, f64>,
    /// Symbolic inputs for this sample; the model's own inputs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_sy: Option<Vec<f64>>,
    /// Rows of features for the neural head.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x_nn: Vec<Vec<f64>>,
}

impl TrainingSample {
    pub fn latent(&self, n_y: usize) -> Vec<usize> {
        (0..n_y).filter(|v| !self.labels.contains_key(v)).collect()
    }

    pub fn label_pairs(&self) -> Vec<(usize, f64)> {
        self.labels.iter().map(|(&k, &v)| (k, v)).collect()
    }

    pub fn validate(&self, n_y: usize) -> Result<()> {
        for (&v, &t) in &self.labels {
            if v >= n_y {
                return Err(Error::IndexOutOfRange {
                    what: "label",
                    index: v,
                    dim: n_y,
                });
            }
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("label {t} for target {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn load_all(path: impl AsRef<std::path::Path>) -> Result<Vec<TrainingSample>> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save_all(samples: &[TrainingSample], path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(samples)?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub loss: LossKind,
    /// Weight of the latent value added to minimizer-based losses.
    pub energy_coefficient: f64,
    pub step_w_sy: f64,
    pub step_w_nn: f64,
    pub step_y: f64,
    pub step_s: f64,
    /// Coefficient of `-sum log w_sy`.
    pub neg_log_reg: f64,
    pub rho: f64,
    pub mu_pen_init: f64,
    pub sigma_star: f64,
    pub omega_star: f64,
    /// Inner epochs per augmented Lagrangian subproblem.
    pub max_inner: usize,
    /// Total inner epochs across the run.
    pub max_epochs: usize,
    /// Stop once `iota` falls to this after a converged stage.
    pub iota_final: f64,
    /// Epochs without improvement of the training metric before stopping.
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub inference: InferenceConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        let mut inference = InferenceConfig::default();
        inference.solver.delta = 1e-2;
        LearnConfig {
            loss: LossKind::Mse,
            energy_coefficient: 0.1,
            step_w_sy: 1e-3,
            step_w_nn: 1e-3,
            step_y: 1e-2,
            step_s: 1e-2,
            neg_log_reg: 1e-3,
            rho: 0.01,
            mu_pen_init: 2.0,
            sigma_star: 1e-2,
            omega_star: 1e-2,
            max_inner: 10,
            max_epochs: 500,
            iota_final: 1e-3,
            patience: 50,
            seed: 0,
            adam: AdamConfig::default(),
            inference,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_w_sy", self.step_w_sy),
            ("step_w_nn", self.step_w_nn),
            ("step_y", self.step_y),
            ("step_s", self.step_s),
            ("rho", self.rho),
            ("epsilon", self.inference.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.mu_pen_init > 1.0) {
            return Err(Error::Config(format!(
                "initial penalty must exceed 1, got {}",
                self.mu_pen_init
            )));
        }
        if self.energy_coefficient < 0.0 || self.neg_log_reg < 0.0 {
            return Err(Error::Config("loss coefficients must be nonnegative".into()));
        }
        if self.max_inner == 0 {
            return Err(Error::Config("max_inner must be at least 1".into()));
        }
        self.inference.solver.validate()
    }
}
