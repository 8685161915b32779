//! Small differentiable heads producing neural outputs `g in [0, 1]^n_g`.
//!
//! Neural input is a list of feature rows. A head maps every row to `out`
//! values, and output slot `row * out + j` holds value `j` of row `row`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// `sigmoid(W x + b)`, elementwise.
    LinearSigmoid,
    /// `softmax(W2 tanh(W1 x + b1) + b2)` over the `out` values of a row.
    MlpSoftmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferentiableHead {
    pub kind: HeadKind,
    /// `[in_dim, hidden, out]`; `hidden` is 0 for the linear head.
    pub shape: [usize; 3],
    pub weights: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DifferentiableHead {
    pub fn linear_sigmoid(in_dim: usize, out: usize, seed: u64) -> Self {
        let mut head = DifferentiableHead {
            kind: HeadKind::LinearSigmoid,
            shape: [in_dim, 0, out],
            weights: Vec::new(),
        };
        head.init(seed);
        head
    }

    pub fn mlp_softmax(in_dim: usize, hidden: usize, out: usize, seed: u64) -> Self {
        let mut head = DifferentiableHead {
            kind: HeadKind::MlpSoftmax,
            shape: [in_dim, hidden, out],
            weights: Vec::new(),
        };
        head.init(seed);
        head
    }

    pub fn n_weights(&self) -> usize {
        let [i, h, o] = self.shape;
        match self.kind {
            HeadKind::LinearSigmoid => o * i + o,
            HeadKind::MlpSoftmax => h * i + h + o * h + o,
        }
    }

    pub fn outputs_per_row(&self) -> usize {
        self.shape[2]
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer.
    fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [i, h, o] = self.shape;
        let layers: Vec<(usize, usize)> = match self.kind {
            HeadKind::LinearSigmoid => vec![(o * i + o, i)],
            HeadKind::MlpSoftmax => vec![(h * i + h, i), (o * h + o, h)],
        };
        self.weights.clear();
        for (count, fan_in) in layers {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            self.weights.extend((0..count).map(|_| rng.gen_range(-bound..=bound)));
        }
    }

    pub fn zeroed(mut self) -> Self {
        self.weights.iter_mut().for_each(|w| *w = 0.0);
        self
    }

    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.n_weights() {
            return Err(Error::DimensionMismatch {
                what: "neural weights",
                expected: self.n_weights(),
                found: weights.len(),
            });
        }
        self.weights.copy_from_slice(weights);
        Ok(())
    }

    fn check_input(&self, x_nn: &[Vec<f64>]) -> Result<()> {
        if self.weights.len() != self.n_weights() {
            return Err(Error::DimensionMismatch {
                what: "neural weights",
                expected: self.n_weights(),
                found: self.weights.len(),
            });
        }
        for row in x_nn {
            if row.len() != self.shape[0] {
                return Err(Error::DimensionMismatch {
                    what: "neural input row",
                    expected: self.shape[0],
                    found: row.len(),
                });
            }
        }
        Ok(())
    }

    /// Pre-activation `W x + b` for a dense layer stored row-major at `offset`.
    fn affine(&self, offset: usize, rows: usize, x: &[f64]) -> Vec<f64> {
        let cols = x.len();
        let w = &self.weights[offset..offset + rows * cols];
        let bias = &self.weights[offset + rows * cols..offset + rows * cols + rows];
        (0..rows)
            .map(|r| bias[r] + w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.affine(0, self.shape[1], x).into_iter().map(f64::tanh).collect()
    }

    fn softmax(z: &[f64]) -> Vec<f64> {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|v| v / total).collect()
    }

    pub fn forward(&self, x_nn: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_input(x_nn)?;
        let [_, h, o] = self.shape;
        let mut g = Vec::with_capacity(x_nn.len() * o);
        for x in x_nn {
            match self.kind {
                HeadKind::LinearSigmoid => g.extend(self.affine(0, o, x).into_iter().map(sigmoid)),
                HeadKind::MlpSoftmax => {
                    let hid = self.hidden(x);
                    g.extend(Self::softmax(&self.affine(h * x.len() + h, o, &hid)));
                }
            }
        }
        Ok(g)
    }

    /// Gradient of `u' forward(x_nn)` with respect to the weights.
    pub fn vjp(&self, x_nn: &[Vec<f64>], u: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x_nn)?;
        let [i, h, o] = self.shape;
        if u.len() != x_nn.len() * o {
            return Err(Error::DimensionMismatch {
                what: "neural cotangent",
                expected: x_nn.len() * o,
                found: u.len(),
            });
        }
        let mut grad = vec![0.0; self.n_weights()];
        for (r, x) in x_nn.iter().enumerate() {
            let ur = &u[r * o..(r + 1) * o];
            match self.kind {
                HeadKind::LinearSigmoid => {
                    let z = self.affine(0, o, x);
                    for j in 0..o {
                        let s = sigmoid(z[j]);
                        let dz = ur[j] * s * (1.0 - s);
                        for k in 0..i {
                            grad[j * i + k] += dz * x[k];
                        }
                        grad[o * i + j] += dz;
                    }
                }
                HeadKind::MlpSoftmax => {
                    let hid = self.hidden(x);
                    let off2 = h * i + h;
                    let p = Self::softmax(&self.affine(off2, o, &hid));
                    let dot: f64 = p.iter().zip(ur).map(|(a, b)| a * b).sum();
                    let dlogit: Vec<f64> = (0..o).map(|j| p[j] * (ur[j] - dot)).collect();
                    let mut dhid = vec![0.0; h];
                    for j in 0..o {
                        for k in 0..h {
                            grad[off2 + j * h + k] += dlogit[j] * hid[k];
                            dhid[k] += dlogit[j] * self.weights[off2 + j * h + k];
                        }
                        grad[off2 + o * h + j] += dlogit[j];
                    }
                    for k in 0..h {
                        let dz = dhid[k] * (1.0 - hid[k] * hid[k]);
                        for l in 0..i {
                            grad[k * i + l] += dz * x[l];
                        }
                        grad[h * i + k] += dz;
                    }
                }
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> Vec<Vec<f64>> {
        vec![vec![0.3, -1.2, 0.5], vec![1.0, 0.0, -0.4]]
    }

    fn fd_check(head: &DifferentiableHead) {
        let x = inputs();
        let n_g = x.len() * head.outputs_per_row();
        let u: Vec<f64> = (0..n_g).map(|k| 0.3 * k as f64 - 0.5).collect();
        let grad = head.vjp(&x, &u).unwrap();
        let h = 1e-6;
        for k in 0..head.n_weights() {
            let mut plus = head.clone();
            plus.weights[k] += h;
            let mut minus = head.clone();
            minus.weights[k] -= h;
            let f = |hd: &DifferentiableHead| -> f64 {
                hd.forward(&x).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum()
            };
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "{k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn zero_weights_give_midpoints() {
        let lin = DifferentiableHead::linear_sigmoid(3, 2, 0).zeroed();
        assert_eq!(lin.forward(&inputs()).unwrap(), vec![0.5; 4]);
        let mlp = DifferentiableHead::mlp_softmax(3, 4, 5, 0).zeroed();
        for g in mlp.forward(&inputs()).unwrap() {
            assert!((g - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        fd_check(&DifferentiableHead::linear_sigmoid(3, 2, 7));
        fd_check(&DifferentiableHead::mlp_softmax(3, 4, 3, 7));
    }

    #[test]
    fn shape_errors() {
        let lin = DifferentiableHead::linear_sigmoid(3, 2, 0);
        assert!(lin.forward(&[vec![1.0]]).is_err());
        assert!(lin.vjp(&inputs(), &[0.0]).is_err());
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = DifferentiableHead::mlp_softmax(4, 8, 3, 11);
        let b = DifferentiableHead::mlp_softmax(4, 8, 3, 11);
        assert_eq!(a, b);
        assert_eq!(a.weights.len(), a.n_weights());
        assert!(a.weights[..40].iter().all(|w| w.abs() <= 0.5));
    }
}
