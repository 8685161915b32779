use crate::error::{Error, Result};
use crate::model::GroundedModel;

/// Steplengths swept by [`projected_subgradient_sweep`].
pub const STEP_GRID: [f64; 5] = [10.0, 1.0, 0.1, 0.01, 0.001];

#[derive(Clone, Debug)]
pub struct SubgradientConfig {
    /// Initial steplength; iteration `k` uses `step / sqrt(k + 1)`.
    pub step: f64,
    /// Weight of `|y|^2 + sum of squared hinge values`, matching the LCQP
    /// regularizer. Zero gives the plain energy.
    pub epsilon: f64,
    pub penalty: f64,
    pub movement_tol: f64,
    pub max_iters: usize,
    /// Starting point; defaults to 0.5 everywhere.
    pub init: Option<Vec<f64>>,
}

impl Default for SubgradientConfig {
    fn default() -> Self {
        SubgradientConfig {
            step: 0.1,
            epsilon: 0.0,
            penalty: 1e3,
            movement_tol: 1e-3,
            max_iters: 100_000,
            init: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SubgradientResult {
    pub y: Vec<f64>,
    /// Best objective seen (penalized) and its iterate.
    pub best_y: Vec<f64>,
    pub best_objective: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

fn penalized(model: &GroundedModel, y: &[f64], g: &[f64], cfg: &SubgradientConfig, grad: Option<&mut [f64]>) -> Result<f64> {
    let mut grad = grad;
    if let Some(gr) = grad.as_deref_mut() {
        gr.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut value = 0.0;
    for pot in &model.potentials {
        let lin = pot.linear_value(y, &model.x_sy, g)?;
        if lin <= 0.0 {
            continue;
        }
        let w = model.w_sy[pot.partition];
        let (v, slope) = if pot.is_squared() {
            ((w + cfg.epsilon) * lin * lin, 2.0 * (w + cfg.epsilon) * lin)
        } else {
            (w * lin + cfg.epsilon * lin * lin, w + 2.0 * cfg.epsilon * lin)
        };
        value += v;
        if let Some(gr) = grad.as_deref_mut() {
            for (&j, &a) in &pot.y_coeffs {
                gr[j] += slope * a;
            }
        }
    }
    for con in &model.constraints {
        let lin = con.linear_value(y, &model.x_sy, g)?;
        if lin > 0.0 {
            value += cfg.penalty * lin;
            if let Some(gr) = grad.as_deref_mut() {
                for (&j, &a) in &con.y_coeffs {
                    gr[j] += cfg.penalty * a;
                }
            }
        }
    }
    for (j, &yj) in y.iter().enumerate() {
        value += cfg.epsilon * yj * yj;
        if let Some(gr) = grad.as_deref_mut() {
            gr[j] += 2.0 * cfg.epsilon * yj;
        }
    }
    Ok(value)
}

/// Projected subgradient descent on the (optionally regularized) energy with
/// a linear penalty on hard-constraint violation, stopped when an iterate
/// moves less than `movement_tol` in the infinity norm.
pub fn projected_subgradient(model: &GroundedModel, g: &[f64], cfg: &SubgradientConfig) -> Result<SubgradientResult> {
    if !(cfg.step > 0.0) {
        return Err(Error::Config(format!("steplength must be positive, got {}", cfg.step)));
    }
    let mut y = match &cfg.init {
        Some(init) if init.len() != model.n_y => {
            return Err(Error::DimensionMismatch {
                what: "initial point",
                expected: model.n_y,
                found: init.len(),
            })
        }
        Some(init) => init.clone(),
        None => vec![0.5; model.n_y],
    };
    let mut grad = vec![0.0; model.n_y];
    let mut trace = Vec::new();
    let mut best_y = y.clone();
    let mut best_objective = f64::INFINITY;
    for k in 0..cfg.max_iters {
        let value = penalized(model, &y, g, cfg, Some(&mut grad))?;
        trace.push(value);
        if value < best_objective {
            best_objective = value;
            best_y.clone_from(&y);
        }
        let eta = cfg.step / ((k + 1) as f64).sqrt();
        let mut moved: f64 = 0.0;
        for (yj, gj) in y.iter_mut().zip(&grad) {
            let next = (*yj - eta * gj).clamp(0.0, 1.0);
            moved = moved.max((next - *yj).abs());
            *yj = next;
        }
        if moved < cfg.movement_tol {
            let value = penalized(model, &y, g, cfg, None)?;
            trace.push(value);
            if value < best_objective {
                best_objective = value;
                best_y.clone_from(&y);
            }
            return Ok(SubgradientResult {
                y,
                best_y,
                best_objective,
                objective_trace: trace,
                iterations: k + 1,
            });
        }
    }
    Err(Error::Config(format!(
        "projected subgradient did not settle within {} iterations",
        cfg.max_iters
    )))
}

/// Runs [`projected_subgradient`] for every steplength in [`STEP_GRID`] and
/// returns the run with the lowest best objective.
pub fn projected_subgradient_sweep(model: &GroundedModel, g: &[f64], base: &SubgradientConfig) -> Result<(f64, SubgradientResult)> {
    let mut best: Option<(f64, SubgradientResult)> = None;
    for step in STEP_GRID {
        let cfg = SubgradientConfig { step, ..base.clone() };
        let Ok(run) = projected_subgradient(model, g, &cfg) else { continue };
        if best.as_ref().is_none_or(|(_, b)| run.best_objective < b.best_objective) {
            best = Some((step, run));
        }
    }
    best.ok_or_else(|| Error::Config("no steplength in the grid settled".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HingePotential;

    #[test]
    fn zero_potential_model_stops_at_once() {
        let m = GroundedModel {
            n_y: 2,
            x_sy: vec![],
            n_g: 0,
            r: 0,
            w_sy: vec![],
            potentials: vec![],
            constraints: vec![],
        };
        let cfg = SubgradientConfig {
            init: Some(vec![1.5, 0.25]),
            ..Default::default()
        };
        let first = projected_subgradient(&m, &[], &cfg).unwrap();
        assert_eq!(first.y, vec![1.0, 0.25]);
        let cfg = SubgradientConfig {
            init: Some(vec![0.75, 0.25]),
            ..Default::default()
        };
        let run = projected_subgradient(&m, &[], &cfg).unwrap();
        assert_eq!(run.iterations, 1);
        assert_eq!(run.y, vec![0.75, 0.25]);
    }

    #[test]
    fn single_hinge_reaches_kink() {
        let m = GroundedModel {
            n_y: 1,
            x_sy: vec![],
            n_g: 0,
            r: 1,
            w_sy: vec![1.0],
            potentials: vec![HingePotential::over_targets([(0, -1.0)], 0.7, 1, 0)],
            constraints: vec![],
        };
        let cfg = SubgradientConfig {
            epsilon: 0.1,
            ..Default::default()
        };
        let (_, run) = projected_subgradient_sweep(&m, &[], &cfg).unwrap();
        assert!((run.best_y[0] - 0.7).abs() < 1e-2, "{:?}", run.best_y);
    }
}
