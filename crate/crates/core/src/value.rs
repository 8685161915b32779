//! Optimal inference value as a function of weights and neural outputs.
//!
//! At the optimum of the regularized problem the gradient of the value with
//! respect to the symbolic weights is the potential vector at the minimizer,
//! and its gradient with respect to the constraint constants is the optimal
//! dual vector. Neural weights enter only through `b(g)`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lcqp::CompiledLcqp;
use crate::model::GroundedModel;
use crate::neural::DifferentiableHead;
use crate::solver::{solve_variant, Solution, SolverConfig, Variant};

/// Which solver runs an inference and with how many workers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub epsilon: f64,
    pub solver: SolverConfig,
    pub variant: Variant,
    pub workers: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            epsilon: 0.1,
            solver: SolverConfig::default(),
            variant: Variant::Serial,
            workers: 1,
        }
    }
}

impl InferenceConfig {
    pub fn run(&self, lcqp: &CompiledLcqp, b: &[f64], warm: Option<&[f64]>) -> Result<Solution> {
        solve_variant(self.variant, lcqp, b, &self.solver, self.workers, warm)
    }
}

#[derive(Clone, Debug)]
pub struct ValueSolution {
    pub value: f64,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    /// Potential vector at `y`; the gradient of the value in the symbolic weights.
    pub phi: Vec<f64>,
    /// `B_g' mu`: gradient of the value in the neural outputs.
    pub g_cotangent: Vec<f64>,
    pub solution: Solution,
}

/// Solves an already compiled problem for `model`'s potentials at outputs `g`.
pub fn value_of(
    lcqp: &CompiledLcqp,
    model: &GroundedModel,
    g: &[f64],
    inference: &InferenceConfig,
    warm: Option<&[f64]>,
) -> Result<ValueSolution> {
    let b = lcqp.build_b(g)?;
    let solution = inference.run(lcqp, &b, warm)?;
    let y = solution.targets(lcqp).to_vec();
    let phi = model.potential_vector(&y, g)?;
    Ok(ValueSolution {
        value: solution.objective,
        g_cotangent: lcqp.neural_cotangent(&solution.mu),
        mu: solution.mu.clone(),
        y,
        phi,
        solution,
    })
}

/// Compiles `model` at `inference.epsilon` and solves it.
pub fn value_function(model: &GroundedModel, g: &[f64], inference: &InferenceConfig) -> Result<ValueSolution> {
    let lcqp = CompiledLcqp::compile(model, inference.epsilon)?;
    value_of(&lcqp, model, g, inference, None)
}

/// Subgradient of the value in the neural weights: `B_g' mu` pulled back
/// through the head's vector-Jacobian product.
pub fn neural_weight_subgradient(
    lcqp: &CompiledLcqp,
    mu: &[f64],
    head: &DifferentiableHead,
    x_nn: &[Vec<f64>],
) -> Result<Vec<f64>> {
    head.vjp(x_nn, &lcqp.neural_cotangent(mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HingePotential;

    #[test]
    fn zero_weights_leave_only_regularizer() {
        // min eps (s^2 + y0^2 + y1^2) with s >= y0 - y1 + 0.2: s = y1 = 0.1
        let m = GroundedModel {
            n_y: 2,
            x_sy: vec![],
            n_g: 0,
            r: 1,
            w_sy: vec![0.0],
            potentials: vec![HingePotential::over_targets([(0, 1.0), (1, -1.0)], 0.2, 1, 0)],
            constraints: vec![],
        };
        let mut inf = InferenceConfig::default();
        inf.solver.delta = 1e-12;
        let v = value_function(&m, &[], &inf).unwrap();
        assert!((v.value - 0.002).abs() < 1e-6);
        assert!(v.y[0].abs() < 1e-3 && (v.y[1] - 0.1).abs() < 1e-3);
    }

    #[test]
    fn zero_duals_give_zero_neural_gradient() {
        let mut m = GroundedModel {
            n_y: 1,
            x_sy: vec![],
            n_g: 2,
            r: 1,
            w_sy: vec![1.0],
            potentials: vec![HingePotential::over_targets([(0, 1.0)], -0.5, 1, 0)],
            constraints: vec![],
        };
        m.potentials[0].g_coeffs.insert(1, 1.0);
        let l = CompiledLcqp::compile(&m, 0.1).unwrap();
        let head = DifferentiableHead::linear_sigmoid(2, 2, 3);
        let x = vec![vec![0.2, 0.4]];
        let grad = neural_weight_subgradient(&l, &vec![0.0; l.rows()], &head, &x).unwrap();
        assert!(grad.iter().all(|&v| v == 0.0));
    }
}
