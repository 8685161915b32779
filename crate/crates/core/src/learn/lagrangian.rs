use crate::error::Result;
use crate::value::value_of;

use super::framework::{Learner, LearnerState};
use super::moreau::moreau_envelope;
use super::losses::{supervised_loss, LossKind};

/// Per-sample pieces of the training objective at the current state.
#[derive(Clone, Debug)]
pub(crate) struct SampleTerms {
    /// Loss contribution without penalty terms.
    pub loss_part: f64,
    /// Relaxed value-function constraint `M(y_i) - V_i - iota` (0 for
    /// value-based losses).
    pub c: f64,
    /// `mu_pen (c + s) + lambda`, the derivative of the penalty terms in `c`.
    pub kappa: f64,
    pub grad_w: Vec<f64>,
    pub grad_g: Vec<f64>,
    pub grad_y: Vec<f64>,
    pub grad_s: f64,
    pub train_mse: f64,
    pub inference_epochs: usize,
}

/// Value and gradients of the full augmented Lagrangian.
#[derive(Clone, Debug)]
pub struct AugmentedLagrangian {
    pub value: f64,
    pub grads: LagrangianGrads,
    /// `c_i + s_i` per sample.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LagrangianGrads {
    pub w_sy: Vec<f64>,
    pub w_nn: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub s: Vec<f64>,
}

impl Learner {
    /// Neural outputs for sample `i` under `w_nn`.
    pub(crate) fn outputs(&self, i: usize, w_nn: &[f64]) -> Result<Vec<f64>> {
        match &self.head {
            None => Ok(Vec::new()),
            Some(head) => {
                let mut h = head.clone();
                h.set_weights(w_nn)?;
                h.forward(&self.samples[i].x_nn)
            }
        }
    }

    pub(crate) fn neural_grad(&self, i: usize, w_nn: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        match &self.head {
            None => Ok(Vec::new()),
            Some(head) => {
                let mut h = head.clone();
                h.set_weights(w_nn)?;
                h.vjp(&self.samples[i].x_nn, u)
            }
        }
    }

    /// Solves everything sample `i` needs and assembles its terms. Updates the
    /// sample's warm-start caches.
    pub(crate) fn sample_terms(&mut self, i: usize, state: &LearnerState) -> Result<SampleTerms> {
        let g = self.outputs(i, &state.w_nn)?;
        let cfg = &self.config;
        let inf = &cfg.inference;
        let loss = cfg.loss;
        let ctx = &mut self.samples[i];
        ctx.set_weights(&state.w_sy)?;
        let mut epochs = 0;

        let full = value_of(&ctx.lcqp, &ctx.model, &g, inf, ctx.warm_full.as_deref())?;
        epochs += full.solution.stats.epochs;
        ctx.warm_full = Some(full.mu.clone());

        let labeled_y: Vec<f64> = ctx.labels.iter().map(|&(v, _)| full.y[v]).collect();
        let labels: Vec<f64> = ctx.labels.iter().map(|&(_, t)| t).collect();
        let train_mse = supervised_loss(LossKind::Mse, &labeled_y, &labels).0;

        let need_latent = !loss.is_supervised() || cfg.energy_coefficient > 0.0;
        let latent = if need_latent {
            let lat = ctx.latent.solve(&ctx.model, &g, inf, ctx.warm_latent.as_deref())?;
            epochs += lat.solution.stats.epochs;
            ctx.warm_latent = Some(lat.mu.clone());
            Some(lat)
        } else {
            None
        };

        let n_w = state.w_sy.len();
        let n_g = g.len();
        let mut terms = SampleTerms {
            loss_part: 0.0,
            c: 0.0,
            kappa: 0.0,
            grad_w: vec![0.0; n_w],
            grad_g: vec![0.0; n_g],
            grad_y: vec![0.0; ctx.model.n_y],
            grad_s: 0.0,
            train_mse,
            inference_epochs: 0,
        };

        match loss {
            LossKind::Energy | LossKind::Sp => {
                let lat = latent.expect("latent solve for value-based loss");
                terms.loss_part = lat.value;
                terms.grad_w.clone_from(&lat.phi);
                terms.grad_g.clone_from(&lat.g_cotangent);
                if loss == LossKind::Sp {
                    terms.loss_part -= full.value;
                    for (a, b) in terms.grad_w.iter_mut().zip(&full.phi) {
                        *a -= b;
                    }
                    for (a, b) in terms.grad_g.iter_mut().zip(&full.g_cotangent) {
                        *a -= b;
                    }
                }
            }
            LossKind::Mse | LossKind::Bce => {
                let y_i = &state.y[i];
                let y_lab: Vec<f64> = ctx.labels.iter().map(|&(v, _)| y_i[v]).collect();
                let (d, d_grad) = supervised_loss(loss, &y_lab, &labels);
                terms.loss_part = d;
                for (k, &(v, _)) in ctx.labels.iter().enumerate() {
                    terms.grad_y[v] += d_grad[k];
                }
                if let Some(lat) = &latent {
                    let ec = cfg.energy_coefficient;
                    terms.loss_part += ec * lat.value;
                    for (a, b) in terms.grad_w.iter_mut().zip(&lat.phi) {
                        *a += ec * b;
                    }
                    for (a, b) in terms.grad_g.iter_mut().zip(&lat.g_cotangent) {
                        *a += ec * b;
                    }
                }
                let warm = ctx.warm_prox.as_deref().or(ctx.warm_full.as_deref());
                let env = moreau_envelope(&ctx.lcqp, &ctx.model, y_i, &g, cfg.rho, inf, warm)?;
                epochs += env.solution.stats.epochs;
                ctx.warm_prox = Some(env.mu.clone());

                let c = env.value - full.value - state.iota;
                let r = c + state.s[i];
                let kappa = state.mu_pen * r + state.lambda[i];
                terms.loss_part += 0.5 * state.mu_pen * r * r + state.lambda[i] * r;
                terms.c = c;
                terms.kappa = kappa;
                for k in 0..n_w {
                    terms.grad_w[k] += kappa * (env.phi[k] - full.phi[k]);
                }
                for k in 0..n_g {
                    terms.grad_g[k] += kappa * (env.g_cotangent[k] - full.g_cotangent[k]);
                }
                for (gy, e) in terms.grad_y.iter_mut().zip(&env.grad_y) {
                    *gy += kappa * e;
                }
                terms.grad_s = kappa;
            }
        }
        terms.inference_epochs = epochs;
        Ok(terms)
    }

    /// Negative-log regularizer value and gradient at `w_sy`.
    pub(crate) fn regularizer(&self, w_sy: &[f64]) -> (f64, Vec<f64>) {
        let reg = self.config.neg_log_reg;
        if reg == 0.0 {
            return (0.0, vec![0.0; w_sy.len()]);
        }
        let value = -reg * w_sy.iter().map(|w| w.ln()).sum::<f64>();
        (value, w_sy.iter().map(|w| -reg / w).collect())
    }

    /// Full-batch augmented Lagrangian (or plain loss for value-based
    /// losses) with all gradients, at `state`.
    pub fn augmented_lagrangian(&mut self, state: &LearnerState) -> Result<AugmentedLagrangian> {
        let (reg_value, reg_grad) = self.regularizer(&state.w_sy);
        let mut value = reg_value;
        let mut w_sy = reg_grad;
        let mut w_nn = vec![0.0; state.w_nn.len()];
        let mut y = Vec::with_capacity(self.samples.len());
        let mut s = Vec::with_capacity(self.samples.len());
        let mut residuals = Vec::with_capacity(self.samples.len());
        for i in 0..self.samples.len() {
            let t = self.sample_terms(i, state).map_err(|e| e.for_sample(i))?;
            value += t.loss_part;
            for (a, b) in w_sy.iter_mut().zip(&t.grad_w) {
                *a += b;
            }
            for (a, b) in w_nn.iter_mut().zip(self.neural_grad(i, &state.w_nn, &t.grad_g)?) {
                *a += b;
            }
            y.push(t.grad_y);
            s.push(t.grad_s);
            residuals.push(t.c + state.s[i]);
        }
        Ok(AugmentedLagrangian {
            value,
            grads: LagrangianGrads { w_sy, w_nn, y, s },
            residuals,
        })
    }
}
