//! Seeded synthetic models: small random instances for cross-checks plus the
//! collective-classification, chain and many-components families.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::TrainingSample;
use crate::model::{GroundedModel, HardConstraint, HingePotential};
use crate::neural::DifferentiableHead;

/// Size limits for [`random_model`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomSpec {
    pub max_targets: usize,
    pub max_potentials: usize,
    pub max_constraints: usize,
    /// Neural slots; each potential gets a slot coefficient with probability 1/2.
    pub n_g: usize,
    pub partitions: usize,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            max_targets: 5,
            max_potentials: 6,
            max_constraints: 2,
            n_g: 0,
            partitions: 2,
        }
    }
}

/// Random model with hard constraints that `y = 0.5` satisfies strictly or
/// with slack in `[0, 0.5]`.
pub fn random_model(spec: &RandomSpec, rng: &mut impl Rng) -> GroundedModel {
    let n_y = rng.gen_range(1..=spec.max_targets.max(1));
    let m = rng.gen_range(1..=spec.max_potentials.max(1));
    let q = rng.gen_range(0..=spec.max_constraints);
    let r = spec.partitions.max(1).min(m);
    let pick_coeffs = |rng: &mut dyn rand::RngCore| {
        let k = rng.gen_range(1..=n_y.min(3));
        let mut vars: Vec<usize> = (0..n_y).collect();
        vars.shuffle(rng);
        vars.truncate(k);
        vars.sort_unstable();
        vars.into_iter()
            .map(|v| (v, rng.gen_range(-1.0..1.0)))
            .collect::<Vec<_>>()
    };
    let mut potentials = Vec::with_capacity(m);
    for i in 0..m {
        let coeffs = pick_coeffs(rng);
        let exponent = if rng.gen_bool(0.5) { 1 } else { 2 };
        let partition = if i < r { i } else { rng.gen_range(0..r) };
        let mut p = HingePotential::over_targets(coeffs, rng.gen_range(-0.5..0.5), exponent, partition);
        if spec.n_g > 0 && rng.gen_bool(0.5) {
            p.g_coeffs.insert(rng.gen_range(0..spec.n_g), rng.gen_range(-1.0..1.0));
        }
        potentials.push(p);
    }
    let mut constraints = Vec::with_capacity(q);
    for _ in 0..q {
        let coeffs = pick_coeffs(rng);
        let at_half: f64 = coeffs.iter().map(|(_, a)| 0.5 * a).sum();
        let margin = rng.gen_range(0.0..0.5);
        constraints.push(HardConstraint::over_targets(coeffs, -at_half - margin));
    }
    GroundedModel {
        n_y,
        x_sy: vec![],
        n_g: spec.n_g,
        r,
        w_sy: (0..r).map(|_| rng.gen_range(0.5..2.0)).collect(),
        potentials,
        constraints,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    CollectiveClassification,
    Chain,
    ManyComponents,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collective-classification" => Ok(SyntheticKind::CollectiveClassification),
            "chain" => Ok(SyntheticKind::Chain),
            "many-components" => Ok(SyntheticKind::ManyComponents),
            other => Err(Error::Config(format!(
                "unknown synthetic kind `{other}` (expected collective-classification, chain or many-components)"
            ))),
        }
    }
}

impl std::fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SyntheticKind::CollectiveClassification => "collective-classification",
            SyntheticKind::Chain => "chain",
            SyntheticKind::ManyComponents => "many-components",
        })
    }
}

/// A generated model with training data and its planted truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Synthetic {
    pub model: GroundedModel,
    pub samples: Vec<TrainingSample>,
    pub truth: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<DifferentiableHead>,
    /// Number of connected components by construction.
    pub components: usize,
}

/// Generates `kind` at `size` (nodes, chain length or component count).
pub fn generate(kind: SyntheticKind, size: usize, seed: u64) -> Result<Synthetic> {
    if size == 0 {
        return Err(Error::Config("synthetic size must be positive".into()));
    }
    Ok(match kind {
        SyntheticKind::CollectiveClassification => collective_classification(size, (size / 4).max(1), false, seed),
        SyntheticKind::Chain => chain(size, seed),
        SyntheticKind::ManyComponents => many_components(size, 4, seed),
    })
}

/// Coefficient scale of the collective-classification and chain rules.
const SCALE: f64 = 2.0;

fn evidence(truth: f64, rng: &mut impl Rng) -> f64 {
    if truth > 0.5 {
        rng.gen_range(0.75..1.0)
    } else {
        rng.gen_range(0.0..0.25)
    }
}

fn squared(y: impl IntoIterator<Item = (usize, f64)>, constant: f64, partition: usize) -> HingePotential {
    HingePotential::over_targets(y, constant, 2, partition)
}

/// Pair of squared potentials pulling `y_v` toward input `x_v` (or neural slot
/// `v` when `neural`).
fn evidence_pair(v: usize, neural: bool, pos: usize, neg: usize) -> [HingePotential; 2] {
    let mut up = squared([(v, -SCALE)], 0.0, pos);
    let mut down = squared([(v, SCALE)], 0.0, neg);
    if neural {
        up.g_coeffs.insert(v, SCALE);
        down.g_coeffs.insert(v, -SCALE);
    } else {
        up.x_coeffs.insert(v, SCALE);
        down.x_coeffs.insert(v, -SCALE);
    }
    [up, down]
}

/// Homophily graph over `n` nodes with two planted classes. Rules: evidence
/// up and down (0, 1), neighbor agreement (2) and neighbor disagreement (3,
/// linear). One training sample labels
/// `labeled` nodes drawn from both classes. With `neural`, evidence comes
/// from a linear-sigmoid head over two noisy features per node.
pub fn collective_classification(n: usize, labeled: usize, neural: bool, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth: Vec<f64> = (0..n).map(|v| if v < n / 2 { 1.0 } else { 0.0 }).collect();
    truth.shuffle(&mut rng);
    let x: Vec<f64> = truth.iter().map(|&t| evidence(t, &mut rng)).collect();

    let mut potentials = Vec::new();
    for v in 0..n {
        potentials.extend(evidence_pair(v, neural, 0, 1));
    }
    for a in 0..n {
        for b in a + 1..n {
            let p = if truth[a] == truth[b] { 0.3 } else { 0.03 };
            if rng.gen_bool(p) {
                potentials.push(squared([(a, SCALE), (b, -SCALE)], 0.0, 2));
                potentials.push(squared([(b, SCALE), (a, -SCALE)], 0.0, 2));
                potentials.push(HingePotential::over_targets([(a, 1.0), (b, 1.0)], -1.0, 1, 3));
            }
        }
    }

    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&v| truth[v] > 0.5);
    let mut seeds = Vec::with_capacity(labeled);
    let (mut pi, mut ni) = (pos.iter(), neg.iter());
    while seeds.len() < labeled.min(n) {
        let next = if seeds.len() % 2 == 0 { pi.next().or_else(|| ni.next()) } else { ni.next().or_else(|| pi.next()) };
        match next {
            Some(&v) => seeds.push(v),
            None => break,
        }
    }
    let labels: BTreeMap<usize, f64> = seeds.iter().map(|&v| (v, truth[v])).collect();

    let (model, head, x_nn) = if neural {
        let rows: Vec<Vec<f64>> = x
            .iter()
            .map(|&xv| vec![2.0 * xv - 1.0, rng.gen_range(-0.2..0.2) - (2.0 * xv - 1.0)])
            .collect();
        let head = DifferentiableHead::linear_sigmoid(2, 1, rng.gen());
        let model = GroundedModel {
            n_y: n,
            x_sy: vec![],
            n_g: n,
            r: 4,
            w_sy: vec![1.0; 4],
            potentials,
            constraints: vec![],
        };
        (model, Some(head), rows)
    } else {
        let model = GroundedModel {
            n_y: n,
            x_sy: x,
            n_g: 0,
            r: 4,
            w_sy: vec![1.0; 4],
            potentials,
            constraints: vec![],
        };
        (model, None, vec![])
    };
    let components = crate::solver::connected_components(&model).len();
    Synthetic {
        model,
        samples: vec![TrainingSample {
            labels,
            x_sy: None,
            x_nn,
        }],
        truth,
        head,
        components,
    }
}

fn quarter_labels(truth: &[f64], rng: &mut impl Rng) -> BTreeMap<usize, f64> {
    let mut idx: Vec<usize> = (0..truth.len()).collect();
    idx.shuffle(rng);
    idx.truncate((truth.len() / 4).max(1));
    idx.into_iter().map(|v| (v, truth[v])).collect()
}

/// `n` targets in a line with squared smoothness between neighbors and
/// evidence on every node: a single connected component.
pub fn chain(n: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = Vec::with_capacity(n);
    let mut state = rng.gen_bool(0.5);
    for _ in 0..n {
        if rng.gen_bool(0.1) {
            state = !state;
        }
        truth.push(if state { 1.0 } else { 0.0 });
    }
    let x: Vec<f64> = truth.iter().map(|&t| evidence(t, &mut rng)).collect();
    let mut potentials = Vec::with_capacity(4 * n);
    for v in 0..n {
        potentials.extend(evidence_pair(v, false, 0, 0));
    }
    for v in 1..n {
        potentials.push(squared([(v - 1, 1.0), (v, -1.0)], 0.0, 1));
        potentials.push(squared([(v, 1.0), (v - 1, -1.0)], 0.0, 1));
    }
    let labels = quarter_labels(&truth, &mut rng);
    Synthetic {
        model: GroundedModel {
            n_y: n,
            x_sy: x,
            n_g: 0,
            r: 2,
            w_sy: vec![1.0, 1.0],
            potentials,
            constraints: vec![],
        },
        samples: vec![TrainingSample {
            labels,
            x_sy: None,
            x_nn: vec![],
        }],
        truth,
        head: None,
        components: 1,
    }
}

/// `k` disjoint copies of a `size`-node chain, each with a capacity
/// constraint `sum y <= 0.8 size`.
pub fn many_components(k: usize, size: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = k * size;
    let truth: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let x: Vec<f64> = truth.iter().map(|&t| evidence(t, &mut rng)).collect();
    let mut potentials = Vec::new();
    let mut constraints = Vec::with_capacity(k);
    for c in 0..k {
        let base = c * size;
        for v in base..base + size {
            potentials.extend(evidence_pair(v, false, 0, 0));
            if v > base {
                potentials.push(squared([(v - 1, 1.0), (v, -1.0)], 0.0, 1));
                potentials.push(squared([(v, 1.0), (v - 1, -1.0)], 0.0, 1));
            }
        }
        constraints.push(HardConstraint::over_targets((base..base + size).map(|v| (v, 1.0)), -0.8 * size as f64));
    }
    let labels = quarter_labels(&truth, &mut rng);
    Synthetic {
        model: GroundedModel {
            n_y: n,
            x_sy: x,
            n_g: 0,
            r: 2,
            w_sy: vec![1.0, 1.0],
            potentials,
            constraints,
        },
        samples: vec![TrainingSample {
            labels,
            x_sy: None,
            x_nn: vec![],
        }],
        truth,
        head: None,
        components: k,
    }
}

/// Seed of the default cross-check suite.
pub const ORACLE_SUITE_SEED: u64 = 20_240_601;

/// `count` random models from one seeded stream, each paired with its
/// regularization: 0.1 for even positions and 1 for odd ones.
pub fn oracle_suite(count: usize, seed: u64) -> Vec<(GroundedModel, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let eps = if i % 2 == 0 { 0.1 } else { 1.0 };
            (random_model(&RandomSpec::default(), &mut rng), eps)
        })
        .collect()
}

/// Random walk on the weights: each step moves by a random direction scaled
/// to between `rel/2` and `rel` of the current norm, floored at 1e-6.
pub fn perturbation_schedule(w0: &[f64], steps: usize, rel: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = w0.to_vec();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir: Vec<f64> = w.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = rel * norm * rng.gen_range(0.5..1.0) / dn;
        for (wk, d) in w.iter_mut().zip(&dir) {
            *wk = (*wk + scale * d).max(1e-6);
        }
        out.push(w.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::connected_components;

    #[test]
    fn random_models_are_valid_and_feasible_at_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = random_model(&RandomSpec::default(), &mut rng);
            m.ensure_valid().unwrap();
            assert!(m.is_feasible(&vec![0.5; m.n_y], &[], 1e-12));
        }
    }

    #[test]
    fn component_counts_match_construction() {
        assert_eq!(connected_components(&chain(50, 3).model).len(), 1);
        for k in [2, 8, 32] {
            let s = many_components(k, 4, 7);
            assert_eq!(connected_components(&s.model).len(), k);
            assert_eq!(s.components, k);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in [SyntheticKind::CollectiveClassification, SyntheticKind::Chain, SyntheticKind::ManyComponents] {
            let a = serde_json::to_string(&generate(kind, 12, 9).unwrap()).unwrap();
            let b = serde_json::to_string(&generate(kind, 12, 9).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn collective_classification_labels_both_classes() {
        let s = collective_classification(20, 5, false, 0);
        s.model.ensure_valid().unwrap();
        let labels = &s.samples[0].labels;
        assert_eq!(labels.len(), 5);
        assert!(labels.values().any(|&t| t == 1.0) && labels.values().any(|&t| t == 0.0));
        let n = collective_classification(20, 5, true, 0);
        n.model.ensure_valid().unwrap();
        assert_eq!(n.samples[0].x_nn.len(), 20);
    }
}
