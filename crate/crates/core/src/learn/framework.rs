use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lcqp::CompiledLcqp;
use crate::model::GroundedModel;
use crate::neural::DifferentiableHead;

use super::latent::LatentProblem;
use super::moreau::moreau_envelope;
use super::optim::{mirror_descent_step, Adam};
use super::{LearnConfig, TrainingSample};

/// Per-sample compiled problems and warm-start duals.
#[derive(Clone, Debug)]
pub(crate) struct SampleCtx {
    pub model: GroundedModel,
    pub lcqp: CompiledLcqp,
    pub latent: LatentProblem,
    pub labels: Vec<(usize, f64)>,
    pub x_nn: Vec<Vec<f64>>,
    pub warm_full: Option<Vec<f64>>,
    pub warm_latent: Option<Vec<f64>>,
    pub warm_prox: Option<Vec<f64>>,
}

impl SampleCtx {
    pub fn set_weights(&mut self, w_sy: &[f64]) -> Result<()> {
        if self.model.w_sy != w_sy {
            self.model.w_sy = w_sy.to_vec();
            self.lcqp.reweight(w_sy)?;
            self.latent.reweight(w_sy)?;
        }
        Ok(())
    }

    fn clear_warm(&mut self) {
        self.warm_full = None;
        self.warm_latent = None;
        self.warm_prox = None;
    }
}

/// Everything the learner optimizes, plus the augmented Lagrangian's
/// multipliers and schedules.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LearnerState {
    pub w_sy: Vec<f64>,
    pub w_nn: Vec<f64>,
    /// Per-sample target copies.
    pub y: Vec<Vec<f64>>,
    /// Per-sample slacks, nonnegative.
    pub s: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu_pen: f64,
    pub iota: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    /// Sum over samples of the loss (without penalty terms).
    pub loss: f64,
    /// Mean over samples of the MSE between the inference minimizer and the labels.
    pub train_mse: f64,
    /// Largest `|c_i + s_i|`.
    pub violation: f64,
    /// Augmented Lagrangian value including the regularizer.
    pub objective: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_mse: f64,
    pub constraint_violation_max: f64,
    pub iota: f64,
    pub mu_pen: f64,
    pub inference_epochs_total: usize,
    pub wall_ns: u128,
}

#[derive(Clone, Debug, Serialize)]
pub struct LearnOutcome {
    pub w_sy: Vec<f64>,
    pub w_nn: Vec<f64>,
    pub initial: Metrics,
    pub last: Metrics,
    pub history: Vec<EpochRecord>,
    pub converged: bool,
    pub iota_halvings: usize,
    pub epochs: usize,
}

pub struct Learner {
    pub(crate) config: LearnConfig,
    pub(crate) base: GroundedModel,
    pub(crate) head: Option<DifferentiableHead>,
    pub(crate) samples: Vec<SampleCtx>,
    adam: Option<Adam>,
    rng: ChaCha8Rng,
    inference_epochs: usize,
    start: Instant,
    /// Lowest training loss among epochs within the violation target, with
    /// the state that started that epoch.
    best: Option<(f64, LearnerState)>,
    since_best: usize,
}

impl Learner {
    pub fn new(
        model: &GroundedModel,
        samples: &[TrainingSample],
        head: Option<DifferentiableHead>,
        config: LearnConfig,
    ) -> Result<Self> {
        config.validate()?;
        model.ensure_valid()?;
        if samples.is_empty() {
            return Err(Error::Config("no training samples".into()));
        }
        let mut ctxs = Vec::with_capacity(samples.len());
        for (i, sample) in samples.iter().enumerate() {
            sample.validate(model.n_y).map_err(|e| e.for_sample(i))?;
            let m = match &sample.x_sy {
                Some(x) => model.with_inputs(x),
                None => model.clone(),
            };
            m.ensure_valid().map_err(|e| e.for_sample(i))?;
            let n_g_head = head
                .as_ref()
                .map_or(0, |h| h.outputs_per_row() * sample.x_nn.len());
            if n_g_head != m.n_g {
                return Err(Error::DimensionMismatch {
                    what: "neural outputs of the head",
                    expected: m.n_g,
                    found: n_g_head,
                }
                .for_sample(i));
            }
            let lcqp = CompiledLcqp::compile(&m, config.inference.epsilon)?;
            let labels = sample.label_pairs();
            let latent = LatentProblem::new(&m, &labels, config.inference.epsilon)?;
            ctxs.push(SampleCtx {
                model: m,
                lcqp,
                latent,
                labels,
                x_nn: sample.x_nn.clone(),
                warm_full: None,
                warm_latent: None,
                warm_prox: None,
            });
        }
        let adam = head
            .as_ref()
            .map(|h| Adam::new(h.n_weights(), config.step_w_nn, config.adam));
        Ok(Learner {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            base: model.clone(),
            head,
            samples: ctxs,
            adam,
            inference_epochs: 0,
            start: Instant::now(),
            best: None,
            since_best: 0,
        })
    }

    pub fn config(&self) -> &LearnConfig {
        &self.config
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Drops all cached duals so the next solves start cold.
    pub fn clear_warm_starts(&mut self) {
        self.samples.iter_mut().for_each(SampleCtx::clear_warm);
    }

    /// Inference epochs spent so far across all solves.
    pub fn inference_epochs_total(&self) -> usize {
        self.inference_epochs
    }

    /// Starting point: simplex-normalized weights, targets at the latent
    /// inference minimizers, `iota` at the largest envelope gap and slacks
    /// closing every constraint.
    pub fn initial_state(&mut self) -> Result<LearnerState> {
        let r = self.base.w_sy.len();
        let total: f64 = self.base.w_sy.iter().sum();
        let w_sy: Vec<f64> = if total > 0.0 {
            // keep every weight strictly inside the simplex
            let floor = 1e-3 / r as f64;
            let raw: Vec<f64> = self.base.w_sy.iter().map(|w| w / total + floor).collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / t).collect()
        } else {
            vec![1.0 / r as f64; r]
        };
        let w_nn = self.head.as_ref().map_or_else(Vec::new, |h| h.weights.clone());
        let p = self.samples.len();
        let mut state = LearnerState {
            w_sy,
            w_nn,
            y: Vec::with_capacity(p),
            s: vec![0.0; p],
            lambda: vec![0.0; p],
            mu_pen: self.config.mu_pen_init,
            iota: 0.0,
        };
        let inf = self.config.inference.clone();
        let mut gaps = Vec::with_capacity(p);
        for i in 0..p {
            let g = self.outputs(i, &state.w_nn)?;
            let ctx = &mut self.samples[i];
            ctx.set_weights(&state.w_sy)?;
            let lat = ctx
                .latent
                .solve(&ctx.model, &g, &inf, None)
                .map_err(|e| e.for_sample(i))?;
            ctx.warm_latent = Some(lat.mu.clone());
            if self.config.loss.is_supervised() {
                let full = crate::value::value_of(&ctx.lcqp, &ctx.model, &g, &inf, None)?;
                let env = moreau_envelope(&ctx.lcqp, &ctx.model, &lat.y, &g, self.config.rho, &inf, Some(&full.mu))?;
                ctx.warm_full = Some(full.mu.clone());
                ctx.warm_prox = Some(env.mu.clone());
                gaps.push(env.value - full.value);
            }
            state.y.push(lat.y);
        }
        if self.config.loss.is_supervised() {
            state.iota = gaps.iter().copied().fold(0.0, f64::max);
            for (s, gap) in state.s.iter_mut().zip(&gaps) {
                *s = (state.iota - gap).max(0.0);
            }
        }
        Ok(state)
    }

    /// One full pass without updates.
    pub fn evaluate(&mut self, state: &LearnerState) -> Result<Metrics> {
        let (reg, _) = self.regularizer(&state.w_sy);
        let mut m = Metrics {
            objective: reg,
            ..Metrics::default()
        };
        for i in 0..self.samples.len() {
            let t = self.sample_terms(i, state).map_err(|e| e.for_sample(i))?;
            self.inference_epochs += t.inference_epochs;
            m.objective += t.loss_part;
            m.loss += self.plain_loss(&t, state, i);
            m.train_mse += t.train_mse / self.samples.len() as f64;
            m.violation = m.violation.max((t.c + state.s[i]).abs());
        }
        if !self.config.loss.is_supervised() {
            m.violation = 0.0;
        }
        Ok(m)
    }

    /// Loss part without the penalty and multiplier terms.
    fn plain_loss(&self, t: &super::lagrangian::SampleTerms, state: &LearnerState, i: usize) -> f64 {
        if self.config.loss.is_supervised() {
            let r = t.c + state.s[i];
            t.loss_part - 0.5 * state.mu_pen * r * r - state.lambda[i] * r
        } else {
            t.loss_part
        }
    }

    /// Randomized incremental first-order epochs on the augmented Lagrangian
    /// until the scaled movement of an epoch is at most `omega` or `budget`
    /// epochs have run. Returns the last movement and the epochs used.
    pub fn inner_solve(
        &mut self,
        state: &mut LearnerState,
        omega: f64,
        budget: usize,
        history: &mut Vec<EpochRecord>,
    ) -> Result<(f64, usize)> {
        let p = self.samples.len();
        let mut order: Vec<usize> = (0..p).collect();
        let mut movement = f64::INFINITY;
        let mut used = 0;
        let supervised = self.config.loss.is_supervised();
        while used < budget {
            used += 1;
            order.shuffle(&mut self.rng);
            let snapshot = state.clone();
            movement = 0.0;
            let mut rec = Metrics::default();
            for &i in &order {
                let t = self.sample_terms(i, state).map_err(|e| e.for_sample(i))?;
                self.inference_epochs += t.inference_epochs;
                rec.loss += self.plain_loss(&t, state, i);
                rec.train_mse += t.train_mse / p as f64;
                rec.violation = rec.violation.max((t.c + state.s[i]).abs());

                let cfg = &self.config;
                if supervised {
                    for (yv, gv) in state.y[i].iter_mut().zip(&t.grad_y) {
                        let next = (*yv - cfg.step_y * gv).clamp(0.0, 1.0);
                        movement = movement.max((next - *yv).abs() / cfg.step_y);
                        *yv = next;
                    }
                    let next = (state.s[i] - cfg.step_s * t.grad_s).max(0.0);
                    movement = movement.max((next - state.s[i]).abs() / cfg.step_s);
                    state.s[i] = next;
                }
                let (_, reg_grad) = self.regularizer(&state.w_sy);
                let grad_w: Vec<f64> = t
                    .grad_w
                    .iter()
                    .zip(&reg_grad)
                    .map(|(a, r)| a + r / p as f64)
                    .collect();
                let w_next = mirror_descent_step(&state.w_sy, &grad_w, self.config.step_w_sy)?;
                for (a, b) in w_next.iter().zip(&state.w_sy) {
                    movement = movement.max((a - b).abs() / self.config.step_w_sy);
                }
                state.w_sy = w_next;
                if let Some(adam) = self.adam.as_mut() {
                    let grad_nn = match &self.head {
                        Some(head) => {
                            let mut h = head.clone();
                            h.set_weights(&state.w_nn)?;
                            h.vjp(&self.samples[i].x_nn, &t.grad_g)?
                        }
                        None => Vec::new(),
                    };
                    movement = movement.max(grad_nn.iter().fold(0.0, |m, g| m.max(g.abs())));
                    adam.step(&mut state.w_nn, &grad_nn)?;
                }
            }
            if !supervised {
                rec.violation = 0.0;
            }
            history.push(EpochRecord {
                epoch: history.len() + 1,
                loss: rec.loss,
                train_mse: rec.train_mse,
                constraint_violation_max: rec.violation,
                iota: state.iota,
                mu_pen: state.mu_pen,
                inference_epochs_total: self.inference_epochs,
                wall_ns: self.start.elapsed().as_nanos(),
            });
            self.track_best(rec.loss, rec.violation, snapshot);
            if movement <= omega {
                break;
            }
        }
        Ok((movement, used))
    }

    fn track_best(&mut self, loss: f64, violation: f64, snapshot: LearnerState) {
        let improved = violation <= self.config.sigma_star
            && self.best.as_ref().is_none_or(|(b, _)| loss < b - 1e-12);
        if improved {
            self.best = Some((loss, snapshot));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
    }

    /// Current `c_i + s_i` for every sample.
    fn residuals(&mut self, state: &LearnerState) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.samples.len());
        for i in 0..self.samples.len() {
            let t = self.sample_terms(i, state).map_err(|e| e.for_sample(i))?;
            self.inference_epochs += t.inference_epochs;
            out.push(t.c + state.s[i]);
        }
        Ok(out)
    }

    /// Full learning run: augmented Lagrangian stages with multiplier and
    /// penalty updates, halving `iota` after every converged stage.
    pub fn fit(&mut self) -> Result<LearnOutcome> {
        self.start = Instant::now();
        let mut state = self.initial_state()?;
        let initial = self.evaluate(&state)?;
        let cfg = self.config.clone();
        let mut history = Vec::new();
        let mut epochs = 0;
        let mut halvings = 0;
        let mut converged = false;
        let mut omega = 1.0 / state.mu_pen;
        let mut sigma = state.mu_pen.powf(-0.1);
        self.best = None;
        self.since_best = 0;

        while epochs < cfg.max_epochs {
            let budget = cfg.max_inner.min(cfg.max_epochs - epochs);
            let (movement, used) = self.inner_solve(&mut state, omega.max(cfg.omega_star), budget, &mut history)?;
            epochs += used;

            if !cfg.loss.is_supervised() {
                if movement <= cfg.omega_star {
                    converged = true;
                    break;
                }
            } else {
                let residuals = self.residuals(&state)?;
                let violation = residuals.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
                if violation <= sigma {
                    if violation <= cfg.sigma_star && movement <= cfg.omega_star.max(omega) {
                        if state.iota <= cfg.iota_final {
                            converged = true;
                            break;
                        }
                        state.iota *= 0.5;
                        halvings += 1;
                        omega = 1.0 / state.mu_pen;
                        sigma = state.mu_pen.powf(-0.1);
                    } else {
                        for (l, r) in state.lambda.iter_mut().zip(&residuals) {
                            *l += state.mu_pen * r;
                        }
                        sigma = (sigma / state.mu_pen.powf(0.9)).max(cfg.sigma_star);
                        omega = (omega / state.mu_pen).max(cfg.omega_star);
                    }
                } else {
                    state.mu_pen *= 2.0;
                    sigma = state.mu_pen.powf(-0.1);
                    omega = 1.0 / state.mu_pen;
                }
            }
            if self.since_best >= cfg.patience {
                break;
            }
        }
        if !converged {
            if let Some((_, best)) = self.best.take() {
                state = best;
            }
        }
        let last = self.evaluate(&state)?;
        Ok(LearnOutcome {
            w_sy: state.w_sy,
            w_nn: state.w_nn,
            initial,
            last,
            history,
            converged,
            iota_halvings: halvings,
            epochs,
        })
    }

    /// The base model with learned symbolic weights.
    pub fn model_with_weights(&self, w_sy: &[f64]) -> GroundedModel {
        self.base.with_weights(w_sy)
    }
}
