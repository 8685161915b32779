use crate::error::{Error, Result};
use crate::lcqp::CompiledLcqp;
use crate::model::{GroundedModel, HardConstraint, SparseCoeffs, DEFAULT_FEASIBILITY_TOL};
use crate::solver::Solution;
use crate::value::InferenceConfig;

use super::TrainingSample;

/// Inference over the latent targets with the labeled ones held at their
/// labels. Labeled coefficients are folded into the potential and constraint
/// constants; constraints left without latent targets become data checks.
#[derive(Clone, Debug)]
pub struct LatentProblem {
    pub reduced: GroundedModel,
    pub lcqp: CompiledLcqp,
    /// Reduced target index to full target index.
    pub latent: Vec<usize>,
    labels: Vec<(usize, f64)>,
    /// Constraints without latent targets, by original index.
    checks: Vec<(usize, HardConstraint)>,
    n_y: usize,
}

#[derive(Clone, Debug)]
pub struct LatentSolution {
    /// Full target vector: labels plus the latent minimizer.
    pub y: Vec<f64>,
    /// Optimal value of the full regularized objective with labels fixed.
    pub value: f64,
    pub phi: Vec<f64>,
    /// Duals of the reduced problem.
    pub mu: Vec<f64>,
    /// Cotangent of the value on the neural outputs.
    pub g_cotangent: Vec<f64>,
    pub solution: Solution,
}

fn fold(coeffs: &SparseCoeffs, labels: &[Option<f64>], remap: &[usize]) -> (SparseCoeffs, f64) {
    let mut kept = SparseCoeffs::new();
    let mut constant = 0.0;
    for (&v, &a) in coeffs {
        match labels[v] {
            Some(t) => constant += a * t,
            None => {
                kept.insert(remap[v], a);
            }
        }
    }
    (kept, constant)
}

impl LatentProblem {
    pub fn new(model: &GroundedModel, labels: &[(usize, f64)], epsilon: f64) -> Result<Self> {
        let mut label_of = vec![None; model.n_y];
        for &(v, t) in labels {
            if v >= model.n_y {
                return Err(Error::IndexOutOfRange {
                    what: "label",
                    index: v,
                    dim: model.n_y,
                });
            }
            label_of[v] = Some(t);
        }
        let latent: Vec<usize> = (0..model.n_y).filter(|&v| label_of[v].is_none()).collect();
        let mut remap = vec![usize::MAX; model.n_y];
        for (k, &v) in latent.iter().enumerate() {
            remap[v] = k;
        }
        let mut reduced = GroundedModel {
            n_y: latent.len(),
            potentials: Vec::with_capacity(model.potentials.len()),
            constraints: Vec::new(),
            ..model.clone()
        };
        for pot in &model.potentials {
            let (y_coeffs, shift) = fold(&pot.y_coeffs, &label_of, &remap);
            let mut p = pot.clone();
            p.y_coeffs = y_coeffs;
            p.constant += shift;
            reduced.potentials.push(p);
        }
        let mut checks = Vec::new();
        for (k, con) in model.constraints.iter().enumerate() {
            let (y_coeffs, shift) = fold(&con.y_coeffs, &label_of, &remap);
            let mut c = con.clone();
            c.y_coeffs = y_coeffs;
            c.constant += shift;
            if c.y_coeffs.is_empty() {
                checks.push((k, c));
            } else {
                reduced.constraints.push(c);
            }
        }
        let lcqp = CompiledLcqp::compile_unchecked(&reduced, epsilon)?;
        Ok(LatentProblem {
            reduced,
            lcqp,
            latent,
            labels: labels.to_vec(),
            checks,
            n_y: model.n_y,
        })
    }

    pub fn reweight(&mut self, w_sy: &[f64]) -> Result<()> {
        self.reduced.w_sy = w_sy.to_vec();
        self.lcqp.reweight(w_sy)
    }

    /// Solves the reduced problem; `model` supplies the full potentials for `phi`.
    pub fn solve(
        &self,
        model: &GroundedModel,
        g: &[f64],
        inference: &InferenceConfig,
        warm: Option<&[f64]>,
    ) -> Result<LatentSolution> {
        for (k, check) in &self.checks {
            let lin = check.linear_value(&[], &self.reduced.x_sy, g)?;
            if lin > DEFAULT_FEASIBILITY_TOL {
                return Err(Error::Infeasible(format!(
                    "labels violate hard constraint {k} by {lin}"
                )));
            }
        }
        let b = self.lcqp.build_b(g)?;
        let solution = inference.run(&self.lcqp, &b, warm)?;
        let mut y = vec![0.0; self.n_y];
        for &(v, t) in &self.labels {
            y[v] = t;
        }
        for (k, &z) in self.lcqp.targets_of(&solution.nu).iter().enumerate() {
            y[self.latent[k]] = z;
        }
        let eps = self.lcqp.epsilon();
        let value = solution.objective + eps * self.labels.iter().map(|&(_, t)| t * t).sum::<f64>();
        let phi = model.potential_vector(&y, g)?;
        Ok(LatentSolution {
            y,
            value,
            phi,
            g_cotangent: self.lcqp.neural_cotangent(&solution.mu),
            mu: solution.mu.clone(),
            solution,
        })
    }
}

/// Compiles the latent problem for `sample` and solves it once.
pub fn latent_inference(
    model: &GroundedModel,
    sample: &TrainingSample,
    g: &[f64],
    inference: &InferenceConfig,
) -> Result<LatentSolution> {
    sample.validate(model.n_y)?;
    let model = match &sample.x_sy {
        Some(x) => model.with_inputs(x),
        None => model.clone(),
    };
    model.ensure_valid()?;
    let problem = LatentProblem::new(&model, &sample.label_pairs(), inference.epsilon)?;
    problem.solve(&model, g, inference, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HingePotential;
    use crate::value::value_function;

    fn chain() -> GroundedModel {
        GroundedModel {
            n_y: 2,
            x_sy: vec![],
            n_g: 0,
            r: 2,
            w_sy: vec![1.0, 0.5],
            potentials: vec![
                HingePotential::over_targets([(0, 1.0), (1, -1.0)], 0.0, 1, 0),
                HingePotential::over_targets([(1, 1.0)], -0.2, 2, 1),
            ],
            constraints: vec![],
        }
    }

    fn tight() -> InferenceConfig {
        let mut cfg = InferenceConfig::default();
        cfg.solver.delta = 1e-10;
        cfg
    }

    #[test]
    fn fully_labeled_is_plain_energy() {
        let m = chain();
        let sample = TrainingSample {
            labels: [(0, 0.9), (1, 0.4)].into_iter().collect(),
            ..Default::default()
        };
        let sol = latent_inference(&m, &sample, &[], &tight()).unwrap();
        let y = [0.9, 0.4];
        let eps = 0.1;
        let pots = m.potential_vector(&y, &[]).unwrap();
        // the regularizer also covers the slacks, which equal the hinge values
        let hinge0 = 0.5;
        let hinge1: f64 = 0.2;
        let expect = m.energy(&y, &[]).unwrap() + eps * (0.81 + 0.16 + hinge0 * hinge0 + hinge1 * hinge1);
        assert!((sol.value - expect).abs() < 1e-9, "{} vs {expect}", sol.value);
        assert_eq!(sol.phi, pots);
    }

    #[test]
    fn nothing_labeled_matches_full_inference() {
        let m = chain();
        let sol = latent_inference(&m, &TrainingSample::default(), &[], &tight()).unwrap();
        let full = value_function(&m, &[], &tight()).unwrap();
        assert!((sol.value - full.value).abs() < 1e-8);
    }

    #[test]
    fn violated_data_check_is_infeasible() {
        let mut m = chain();
        m.constraints.push(HardConstraint::over_targets([(0, 1.0)], -0.5));
        let sample = TrainingSample {
            labels: [(0, 0.9)].into_iter().collect(),
            ..Default::default()
        };
        let err = latent_inference(&m, &sample, &[], &tight()).unwrap_err();
        assert!(err.to_string().contains("hard constraint 0"), "{err}");
    }
}
