use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GroundedModel;
use crate::value::{value_function, InferenceConfig};

use super::latent::latent_inference;
use super::TrainingSample;

const BCE_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Latent optimal value.
    Energy,
    /// Latent minus full optimal value (structured perceptron).
    Sp,
    Mse,
    Bce,
}

impl LossKind {
    /// Losses on the inference minimizer, trained through target copies.
    pub fn is_supervised(self) -> bool {
        matches!(self, LossKind::Mse | LossKind::Bce)
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(LossKind::Energy),
            "sp" => Ok(LossKind::Sp),
            "mse" => Ok(LossKind::Mse),
            "bce" => Ok(LossKind::Bce),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

/// Mean squared error or binary cross-entropy between aligned `y` and `t`,
/// with the gradient in `y`. BCE clamps predictions to `[1e-7, 1 - 1e-7]`.
pub fn supervised_loss(kind: LossKind, y: &[f64], t: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(y.len(), t.len(), "supervised loss needs aligned vectors");
    let n = y.len().max(1) as f64;
    match kind {
        LossKind::Bce => {
            let mut value = 0.0;
            let grad = y
                .iter()
                .zip(t)
                .map(|(&yj, &tj)| {
                    let p = yj.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    value -= tj * p.ln() + (1.0 - tj) * (1.0 - p).ln();
                    if yj <= BCE_CLAMP || yj >= 1.0 - BCE_CLAMP {
                        0.0
                    } else {
                        (p - tj) / (p * (1.0 - p)) / n
                    }
                })
                .collect();
            (value / n, grad)
        }
        _ => {
            let value = y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
            let grad = y.iter().zip(t).map(|(a, b)| 2.0 * (a - b) / n).collect();
            (value, grad)
        }
    }
}

#[derive(Clone, Debug)]
pub struct LossEval {
    pub loss: f64,
    pub grad_w_sy: Vec<f64>,
    /// Cotangent on the neural outputs; chain through the head for `w_nn`.
    pub grad_g: Vec<f64>,
}

/// Latent optimal value and its gradients.
pub fn energy_loss(
    model: &GroundedModel,
    sample: &TrainingSample,
    g: &[f64],
    inference: &InferenceConfig,
) -> Result<LossEval> {
    let lat = latent_inference(model, sample, g, inference)?;
    Ok(LossEval {
        loss: lat.value,
        grad_w_sy: lat.phi,
        grad_g: lat.g_cotangent,
    })
}

/// Latent minus full optimal value and its gradients.
pub fn sp_loss(
    model: &GroundedModel,
    sample: &TrainingSample,
    g: &[f64],
    inference: &InferenceConfig,
) -> Result<LossEval> {
    let lat = latent_inference(model, sample, g, inference)?;
    let full_model = match &sample.x_sy {
        Some(x) => model.with_inputs(x),
        None => model.clone(),
    };
    let full = value_function(&full_model, g, inference)?;
    Ok(LossEval {
        loss: lat.value - full.value,
        grad_w_sy: lat.phi.iter().zip(&full.phi).map(|(a, b)| a - b).collect(),
        grad_g: lat.g_cotangent.iter().zip(&full.g_cotangent).map(|(a, b)| a - b).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_example() {
        let (v, g) = supervised_loss(LossKind::Mse, &[0.8], &[0.3]);
        assert!((v - 0.25).abs() < 1e-15);
        assert!((g[0] - 1.0).abs() < 1e-15);
        let (v, g) = supervised_loss(LossKind::Mse, &[0.4, 0.6], &[0.4, 0.6]);
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let y = [0.3, 0.85, 0.5];
        let t = [0.0, 1.0, 0.7];
        let (_, grad) = supervised_loss(LossKind::Bce, &y, &t);
        let h = 1e-6;
        for j in 0..3 {
            let mut yp = y;
            yp[j] += h;
            let mut ym = y;
            ym[j] -= h;
            let fd = (supervised_loss(LossKind::Bce, &yp, &t).0 - supervised_loss(LossKind::Bce, &ym, &t).0) / (2.0 * h);
            assert!((fd - grad[j]).abs() <= 1e-6 * fd.abs().max(1.0), "{fd} vs {}", grad[j]);
        }
    }
}
