use crate::error::Result;
use crate::lcqp::CompiledLcqp;
use crate::model::GroundedModel;
use crate::solver::Solution;
use crate::value::InferenceConfig;

#[derive(Clone, Debug)]
pub struct MoreauResult {
    /// `min over yhat in Omega of E(yhat) + |yhat - y|^2 / (2 rho)`.
    pub value: f64,
    /// `(y - prox) / rho`.
    pub grad_y: Vec<f64>,
    pub prox: Vec<f64>,
    /// Potential vector at the proximal point; the gradient in the symbolic weights.
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub g_cotangent: Vec<f64>,
    pub solution: Solution,
}

/// Moreau envelope of the regularized energy at `y`, computed by solving the
/// problem with a proximal term folded into its diagonal and linear parts.
pub fn moreau_envelope(
    lcqp: &CompiledLcqp,
    model: &GroundedModel,
    y: &[f64],
    g: &[f64],
    rho: f64,
    inference: &InferenceConfig,
    warm: Option<&[f64]>,
) -> Result<MoreauResult> {
    let prox_lcqp = lcqp.with_prox(y, rho)?;
    let b = prox_lcqp.build_b(g)?;
    let solution = inference.run(&prox_lcqp, &b, warm)?;
    let prox = prox_lcqp.targets_of(&solution.nu).to_vec();
    let grad_y = y.iter().zip(&prox).map(|(a, p)| (a - p) / rho).collect();
    Ok(MoreauResult {
        value: solution.objective,
        grad_y,
        phi: model.potential_vector(&prox, g)?,
        g_cotangent: prox_lcqp.neural_cotangent(&solution.mu),
        mu: solution.mu.clone(),
        prox,
        solution,
    })
}
