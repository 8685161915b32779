//! Regularized linearly constrained quadratic program (LCQP) form of inference.
//!
//! Primal, over `nu = [s_S; s_L; y]`:
//!
//! ```text
//!     min  nu' (D + eps I) nu + c' nu      s.t.  A nu + b <= 0
//! ```
//!
//! Rows of `A` are laid out as
//! `[hard constraints | potential rows (squared, then linear) | linear-slack
//! nonnegativity | y lower bounds | y upper bounds]`, giving
//! `q + m_S + 2 m_L + 2 n_y` rows and `m_S + m_L + n_y` columns.
//!
//! The dual objective minimized by the block coordinate descent solver is the
//! negated Lagrange dual function
//!
//! ```text
//!     h(mu) = 1/4 mu' A Q^-1 A' mu + 1/2 (A Q^-1 c - 2 b)' mu,   Q = D + eps I
//! ```
//!
//! and the Lagrange dual value at `mu` is `-h(mu) - 1/4 c' Q^-1 c`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::GroundedModel;
use crate::sparse::CsrMatrix;

/// Sizes that determine the row and column layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub n_y: usize,
    pub q: usize,
    pub m_s: usize,
    pub m_l: usize,
}

/// What a row of `A` encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Constraint(usize),
    /// Potential row for the given slack column.
    Potential(usize),
    /// `-s_L <= 0` for the given slack column.
    SlackBound(usize),
    Lower(usize),
    Upper(usize),
}

impl Layout {
    pub fn rows(&self) -> usize {
        self.q + self.m_s + 2 * self.m_l + 2 * self.n_y
    }

    pub fn cols(&self) -> usize {
        self.m_s + self.m_l + self.n_y
    }

    pub fn n_slack(&self) -> usize {
        self.m_s + self.m_l
    }

    pub fn potential_row(&self, slack: usize) -> usize {
        self.q + slack
    }

    /// Nonnegativity row of a slack column, if it has one (linear slacks only).
    pub fn slack_bound_row(&self, slack: usize) -> Option<usize> {
        (slack >= self.m_s && slack < self.n_slack())
            .then(|| self.q + self.n_slack() + (slack - self.m_s))
    }

    pub fn lower_row(&self, var: usize) -> usize {
        self.q + self.m_s + 2 * self.m_l + var
    }

    pub fn upper_row(&self, var: usize) -> usize {
        self.q + self.m_s + 2 * self.m_l + self.n_y + var
    }

    pub fn y_col(&self, var: usize) -> usize {
        self.n_slack() + var
    }

    pub fn row_kind(&self, row: usize) -> RowKind {
        let slack_end = self.q + self.n_slack();
        let bound_end = slack_end + self.m_l;
        let lower_end = bound_end + self.n_y;
        if row < self.q {
            RowKind::Constraint(row)
        } else if row < slack_end {
            RowKind::Potential(row - self.q)
        } else if row < bound_end {
            RowKind::SlackBound(self.m_s + row - slack_end)
        } else if row < lower_end {
            RowKind::Lower(row - bound_end)
        } else {
            RowKind::Upper(row - lower_end)
        }
    }
}

/// Primal-dual gap at a dual point, with the feasible certificate used.
#[derive(Clone, Debug)]
pub struct GapReport {
    pub gap: f64,
    /// Objective at the clamped, slack-recomputed primal certificate.
    pub primal: f64,
    /// Lagrange dual value.
    pub dual: f64,
    /// Largest hard-constraint violation of the certificate.
    pub violation: f64,
    pub certificate: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CompiledLcqp {
    layout: Layout,
    n_g: usize,
    a: Arc<CsrMatrix>,
    b_g: Arc<CsrMatrix>,
    b_base: Vec<f64>,
    slack_partition: Arc<Vec<usize>>,
    potential_slack: Arc<Vec<usize>>,
    d_diag: Vec<f64>,
    c: Vec<f64>,
    epsilon: f64,
    q_inv: Vec<f64>,
    offset: f64,
}

impl CompiledLcqp {
    /// Compiles a validated model at regularization `epsilon > 0`.
    pub fn compile(model: &GroundedModel, epsilon: f64) -> Result<Self> {
        model.ensure_valid()?;
        Self::compile_unchecked(model, epsilon)
    }

    pub(crate) fn compile_unchecked(model: &GroundedModel, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!(
                "regularization must be strictly positive, got {epsilon}"
            )));
        }
        let squared: Vec<usize> = (0..model.potentials.len())
            .filter(|&k| model.potentials[k].is_squared())
            .collect();
        let linear: Vec<usize> = (0..model.potentials.len())
            .filter(|&k| !model.potentials[k].is_squared())
            .collect();
        let layout = Layout {
            n_y: model.n_y,
            q: model.constraints.len(),
            m_s: squared.len(),
            m_l: linear.len(),
        };
        let n_rows = layout.rows();
        let mut a_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_rows);
        let mut g_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_rows);
        let mut b_base = Vec::with_capacity(n_rows);

        let x_part = |coeffs: &crate::model::SparseCoeffs| -> Result<f64> {
            coeffs.iter().try_fold(0.0, |acc, (&i, &a)| {
                let x = model.x_sy.get(i).ok_or(Error::IndexOutOfRange {
                    what: "symbolic input",
                    index: i,
                    dim: model.n_x(),
                })?;
                Ok(acc + a * x)
            })
        };
        let y_entries = |coeffs: &crate::model::SparseCoeffs| -> Result<Vec<(usize, f64)>> {
            coeffs
                .iter()
                .map(|(&v, &a)| {
                    if v >= model.n_y {
                        Err(Error::IndexOutOfRange {
                            what: "target",
                            index: v,
                            dim: model.n_y,
                        })
                    } else {
                        Ok((layout.y_col(v), a))
                    }
                })
                .collect()
        };
        let g_entries = |coeffs: &crate::model::SparseCoeffs| -> Result<Vec<(usize, f64)>> {
            coeffs
                .iter()
                .map(|(&s, &a)| {
                    if s >= model.n_g {
                        Err(Error::IndexOutOfRange {
                            what: "neural slot",
                            index: s,
                            dim: model.n_g,
                        })
                    } else {
                        Ok((s, a))
                    }
                })
                .collect()
        };

        for con in &model.constraints {
            a_rows.push(y_entries(&con.y_coeffs)?);
            g_rows.push(g_entries(&con.g_coeffs)?);
            b_base.push(x_part(&con.x_coeffs)? + con.constant);
        }
        let mut potential_slack = vec![0; model.potentials.len()];
        let mut slack_partition = Vec::with_capacity(layout.n_slack());
        for (slack, &k) in squared.iter().chain(&linear).enumerate() {
            let pot = &model.potentials[k];
            potential_slack[k] = slack;
            slack_partition.push(pot.partition);
            let mut row = y_entries(&pot.y_coeffs)?;
            row.push((slack, -1.0));
            a_rows.push(row);
            g_rows.push(g_entries(&pot.g_coeffs)?);
            b_base.push(x_part(&pot.x_coeffs)? + pot.constant);
        }
        for l in 0..layout.m_l {
            a_rows.push(vec![(layout.m_s + l, -1.0)]);
            g_rows.push(vec![]);
            b_base.push(0.0);
        }
        for v in 0..layout.n_y {
            a_rows.push(vec![(layout.y_col(v), -1.0)]);
            g_rows.push(vec![]);
            b_base.push(0.0);
        }
        for v in 0..layout.n_y {
            a_rows.push(vec![(layout.y_col(v), 1.0)]);
            g_rows.push(vec![]);
            b_base.push(-1.0);
        }
        debug_assert_eq!(a_rows.len(), n_rows);

        let cols = layout.cols();
        let mut lcqp = CompiledLcqp {
            layout,
            n_g: model.n_g,
            a: Arc::new(CsrMatrix::from_rows(cols, a_rows)),
            b_g: Arc::new(CsrMatrix::from_rows(model.n_g, g_rows)),
            b_base,
            slack_partition: Arc::new(slack_partition),
            potential_slack: Arc::new(potential_slack),
            d_diag: vec![0.0; cols],
            c: vec![0.0; cols],
            epsilon,
            q_inv: vec![0.0; cols],
            offset: 0.0,
        };
        lcqp.reweight(&model.w_sy)?;
        Ok(lcqp)
    }

    /// Rebuilds `D` and `c` from new symbolic weights.
    pub fn reweight(&mut self, w_sy: &[f64]) -> Result<()> {
        for (j, &p) in self.slack_partition.iter().enumerate() {
            let w = *w_sy.get(p).ok_or(Error::IndexOutOfRange {
                what: "partition",
                index: p,
                dim: w_sy.len(),
            })?;
            if j < self.layout.m_s {
                self.d_diag[j] = w;
            } else {
                self.c[j] = w;
            }
        }
        self.refresh_inverse();
        Ok(())
    }

    pub fn with_weights(&self, w_sy: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.reweight(w_sy)?;
        Ok(out)
    }

    fn refresh_inverse(&mut self) {
        for (qi, d) in self.q_inv.iter_mut().zip(&self.d_diag) {
            *qi = 1.0 / (d + self.epsilon);
        }
    }

    /// LCQP of the proximal problem `min E(yhat) + |yhat - y|^2 / (2 rho)`.
    ///
    /// Adds `1/(2 rho)` to the target diagonal, `-y/rho` to the target part of
    /// `c` and `|y|^2/(2 rho)` to the objective constant.
    pub fn with_prox(&self, y: &[f64], rho: f64) -> Result<Self> {
        if y.len() != self.layout.n_y {
            return Err(Error::DimensionMismatch {
                what: "prox center",
                expected: self.layout.n_y,
                found: y.len(),
            });
        }
        if !(rho > 0.0) {
            return Err(Error::Config(format!("Moreau parameter must be positive, got {rho}")));
        }
        let mut out = self.clone();
        for (v, &yv) in y.iter().enumerate() {
            let col = self.layout.y_col(v);
            out.d_diag[col] += 0.5 / rho;
            out.c[col] -= yv / rho;
            out.offset += 0.5 * yv * yv / rho;
        }
        out.refresh_inverse();
        Ok(out)
    }

    /// Sub-problem over the given constraints, potentials (original file
    /// indices) and variables, keeping the layout order. Returns the
    /// sub-problem with its row and column maps into `self`.
    pub fn restrict(
        &self,
        constraints: &[usize],
        potentials: &[usize],
        vars: &[usize],
    ) -> (CompiledLcqp, Vec<usize>, Vec<usize>) {
        let lay = self.layout;
        let mut slacks: Vec<usize> = potentials.iter().map(|&k| self.potential_slack[k]).collect();
        slacks.sort_unstable();
        let m_s = slacks.iter().filter(|&&s| s < lay.m_s).count();
        let m_l = slacks.len() - m_s;
        let sub_layout = Layout {
            n_y: vars.len(),
            q: constraints.len(),
            m_s,
            m_l,
        };
        let mut rows: Vec<usize> = constraints.to_vec();
        rows.extend(slacks.iter().map(|&s| lay.potential_row(s)));
        rows.extend(slacks.iter().filter_map(|&s| lay.slack_bound_row(s)));
        rows.extend(vars.iter().map(|&v| lay.lower_row(v)));
        rows.extend(vars.iter().map(|&v| lay.upper_row(v)));
        let mut cols: Vec<usize> = slacks.clone();
        cols.extend(vars.iter().map(|&v| lay.y_col(v)));

        let mut potential_slack = vec![usize::MAX; self.potential_slack.len()];
        for &k in potentials {
            let s = self.potential_slack[k];
            potential_slack[k] = slacks.binary_search(&s).unwrap();
        }
        let sub = CompiledLcqp {
            layout: sub_layout,
            n_g: self.n_g,
            a: Arc::new(self.a.select(&rows, &cols)),
            b_g: Arc::new(self.b_g.select(&rows, &(0..self.n_g).collect::<Vec<_>>())),
            b_base: rows.iter().map(|&r| self.b_base[r]).collect(),
            slack_partition: Arc::new(slacks.iter().map(|&s| self.slack_partition[s]).collect()),
            potential_slack: Arc::new(potential_slack),
            d_diag: cols.iter().map(|&c| self.d_diag[c]).collect(),
            c: cols.iter().map(|&c| self.c[c]).collect(),
            epsilon: self.epsilon,
            q_inv: cols.iter().map(|&c| self.q_inv[c]).collect(),
            offset: 0.0,
        };
        (sub, rows, cols)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn rows(&self) -> usize {
        self.layout.rows()
    }

    pub fn cols(&self) -> usize {
        self.layout.cols()
    }

    pub fn n_g(&self) -> usize {
        self.n_g
    }

    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    /// Neural coupling matrix `B_g` (rows x n_g).
    pub fn b_g(&self) -> &CsrMatrix {
        &self.b_g
    }

    pub fn b_base(&self) -> &[f64] {
        &self.b_base
    }

    pub fn d_diag(&self) -> &[f64] {
        &self.d_diag
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `1 / (D + eps)` per column.
    pub fn q_inv(&self) -> &[f64] {
        &self.q_inv
    }

    /// Constant added to the objective (nonzero for proximal problems).
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Number of potentials in the source model, including any dropped by
    /// [`restrict`](Self::restrict).
    pub fn n_potentials(&self) -> usize {
        self.potential_slack.len()
    }

    /// Slack column of potential `k` (file order), or `usize::MAX` when the
    /// potential is not part of this (restricted) problem.
    pub fn potential_slack(&self, k: usize) -> usize {
        self.potential_slack[k]
    }

    pub fn slack_partition(&self) -> &[usize] {
        &self.slack_partition
    }

    /// `b(g) = b_base + B_g g`.
    pub fn build_b(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.n_g {
            return Err(Error::DimensionMismatch {
                what: "neural outputs",
                expected: self.n_g,
                found: g.len(),
            });
        }
        let mut b = self.b_base.clone();
        if self.n_g > 0 {
            for (bi, gi) in b.iter_mut().zip(self.b_g.mul_vec(g)) {
                *bi += gi;
            }
        }
        Ok(b)
    }

    /// `B_g' mu`: cotangent on the neural outputs.
    pub fn neural_cotangent(&self, mu: &[f64]) -> Vec<f64> {
        self.b_g.tr_mul_vec(mu)
    }

    pub fn primal_objective(&self, nu: &[f64]) -> f64 {
        let mut acc = self.offset;
        for j in 0..nu.len() {
            acc += (self.d_diag[j] + self.epsilon) * nu[j] * nu[j] + self.c[j] * nu[j];
        }
        acc
    }

    fn check_dual(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                what: "dual vector",
                expected: self.rows(),
                found: mu.len(),
            });
        }
        if let Some((index, &value)) = mu.iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
            return Err(Error::NegativeDual { index, value });
        }
        Ok(())
    }

    fn check_b(&self, b: &[f64]) -> Result<()> {
        if b.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                what: "constraint constants",
                expected: self.rows(),
                found: b.len(),
            });
        }
        Ok(())
    }

    /// `h(mu)` from the cached product `m = A' mu`.
    pub(crate) fn dual_objective_from_m(&self, mu: &[f64], m: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for j in 0..m.len() {
            acc += self.q_inv[j] * m[j] * (0.25 * m[j] + 0.5 * self.c[j]);
        }
        acc - mu.iter().zip(b).map(|(u, bi)| u * bi).sum::<f64>()
    }

    /// Negated Lagrange dual function `h(mu)`.
    pub fn dual_objective(&self, mu: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dual(mu)?;
        self.check_b(b)?;
        let m = self.a.tr_mul_vec(mu);
        Ok(self.dual_objective_from_m(mu, &m, b))
    }

    /// `1/2 mu' A Q^-1 A' mu + c~' mu` with `c~ = A Q^-1 c - 2 b`: the
    /// parametrization the block solver descends on. Equals `2 h(mu)`.
    pub fn block_dual_objective(&self, mu: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dual(mu)?;
        self.check_b(b)?;
        let m = self.a.tr_mul_vec(mu);
        let quad: f64 = m.iter().zip(&self.q_inv).map(|(mj, qi)| mj * mj * qi).sum();
        let c_tilde = self.c_tilde(b);
        Ok(0.5 * quad + c_tilde.iter().zip(mu).map(|(ct, u)| ct * u).sum::<f64>())
    }

    /// `A Q^-1 c - 2 b`.
    pub fn c_tilde(&self, b: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = self.c.iter().zip(&self.q_inv).map(|(c, q)| c * q).collect();
        let mut out = self.a.mul_vec(&scaled);
        for (o, bi) in out.iter_mut().zip(b) {
            *o -= 2.0 * bi;
        }
        out
    }

    /// Constant separating `-h(mu)` from the Lagrange dual value.
    fn dual_constant(&self) -> f64 {
        -0.25
            * self
                .c
                .iter()
                .zip(&self.q_inv)
                .map(|(c, q)| c * c * q)
                .sum::<f64>()
            + self.offset
    }

    /// Lagrange dual function value `-h(mu) - 1/4 c' Q^-1 c` (a lower bound on
    /// the primal optimum).
    pub fn lagrangian_dual_value(&self, mu: &[f64], b: &[f64]) -> Result<f64> {
        Ok(-self.dual_objective(mu, b)? + self.dual_constant())
    }

    pub(crate) fn dual_value_from_m(&self, mu: &[f64], m: &[f64], b: &[f64]) -> f64 {
        -self.dual_objective_from_m(mu, m, b) + self.dual_constant()
    }

    pub(crate) fn nu_from_m(&self, m: &[f64]) -> Vec<f64> {
        m.iter()
            .zip(&self.c)
            .zip(&self.q_inv)
            .map(|((mj, cj), qi)| -0.5 * qi * (mj + cj))
            .collect()
    }

    /// `nu = -1/2 Q^-1 (A' mu + c)`.
    pub fn dual_to_primal(&self, mu: &[f64]) -> Result<Vec<f64>> {
        self.check_dual(mu)?;
        Ok(self.nu_from_m(&self.a.tr_mul_vec(mu)))
    }

    /// Target block of a primal point.
    pub fn targets_of<'a>(&self, nu: &'a [f64]) -> &'a [f64] {
        &nu[self.layout.n_slack()..]
    }

    /// Feasible certificate from an arbitrary primal point: targets clamped to
    /// `[0, 1]` and slacks set to the hinge values at the clamped targets.
    /// Returns the certificate and its largest hard-constraint violation.
    pub fn clamp_feasible(&self, nu: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
        let lay = self.layout;
        let n_s = lay.n_slack();
        let mut cert = nu.to_vec();
        for v in &mut cert[n_s..] {
            *v = v.clamp(0.0, 1.0);
        }
        let y_part = |row: usize, cert: &[f64]| -> f64 {
            self.a
                .row(row)
                .filter(|&(c, _)| c >= n_s)
                .map(|(c, a)| a * cert[c])
                .sum::<f64>()
                + b[row]
        };
        for s in 0..n_s {
            cert[s] = y_part(lay.potential_row(s), &cert).max(0.0);
        }
        let violation = (0..lay.q)
            .map(|k| y_part(k, &cert))
            .fold(0.0_f64, f64::max);
        (cert, violation)
    }

    pub(crate) fn gap_from_m(&self, mu: &[f64], m: &[f64], b: &[f64]) -> GapReport {
        let nu = self.nu_from_m(m);
        let (certificate, violation) = self.clamp_feasible(&nu, b);
        let primal = self.primal_objective(&certificate);
        let dual = self.dual_value_from_m(mu, m, b);
        GapReport {
            gap: primal - dual,
            primal,
            dual,
            violation,
            certificate,
        }
    }

    /// Gap between the clamped primal certificate recovered from `mu` and the
    /// Lagrange dual value at `mu`.
    pub fn primal_dual_gap(&self, mu: &[f64], b: &[f64]) -> Result<GapReport> {
        self.check_dual(mu)?;
        self.check_b(b)?;
        let m = self.a.tr_mul_vec(mu);
        Ok(self.gap_from_m(mu, &m, b))
    }

    /// Largest violation of `A nu + b <= 0`.
    pub fn max_violation(&self, nu: &[f64], b: &[f64]) -> f64 {
        self.a
            .mul_vec(nu)
            .iter()
            .zip(b)
            .map(|(r, bi)| r + bi)
            .fold(0.0_f64, f64::max)
    }

    /// Structured dump of `A`, `b`, `D` and `c` for cross-checking with
    /// external QP tools.
    pub fn debug_dump(&self, b: &[f64]) -> serde_json::Value {
        serde_json::json!({
            "layout": self.layout,
            "rows": self.rows(),
            "cols": self.cols(),
            "epsilon": self.epsilon,
            "a": self.a.triplets(),
            "b": b,
            "d": self.d_diag,
            "c": self.c,
            "offset": self.offset,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HardConstraint, HingePotential};

    fn one_potential(exponent: u32) -> GroundedModel {
        GroundedModel {
            n_y: 1,
            x_sy: vec![],
            n_g: 0,
            r: 1,
            w_sy: vec![1.0],
            potentials: vec![HingePotential::over_targets([(0, 1.0)], -0.5, exponent, 0)],
            constraints: vec![],
        }
    }

    #[test]
    fn shapes_follow_row_formula() {
        let lin = CompiledLcqp::compile(&one_potential(1), 0.1).unwrap();
        assert_eq!((lin.rows(), lin.cols()), (4, 2));
        let sq = CompiledLcqp::compile(&one_potential(2), 0.1).unwrap();
        assert_eq!((sq.rows(), sq.cols()), (3, 2));
        let mut empty = one_potential(1);
        empty.potentials.clear();
        empty.r = 0;
        empty.w_sy.clear();
        let e = CompiledLcqp::compile(&empty, 0.1).unwrap();
        assert_eq!((e.rows(), e.cols()), (2, 1));
    }

    #[test]
    fn potential_rows_carry_minus_one_on_own_slack() {
        let mut m = one_potential(1);
        m.n_y = 2;
        m.potentials.push(HingePotential::over_targets([(1, 2.0)], 0.0, 2, 0));
        m.constraints.push(HardConstraint::over_targets([(0, 1.0), (1, 1.0)], -1.5));
        let l = CompiledLcqp::compile(&m, 0.1).unwrap();
        let lay = l.layout();
        assert_eq!(lay, Layout { n_y: 2, q: 1, m_s: 1, m_l: 1 });
        // the squared potential (file index 1) gets slack 0
        assert_eq!(l.potential_slack(1), 0);
        assert_eq!(l.potential_slack(0), 1);
        for s in 0..2 {
            assert_eq!(l.a().get(lay.potential_row(s), s), -1.0);
        }
        assert_eq!(l.a().get(lay.slack_bound_row(1).unwrap(), 1), -1.0);
        assert_eq!(lay.slack_bound_row(0), None);
        for v in 0..2 {
            assert_eq!(l.a().get(lay.lower_row(v), lay.y_col(v)), -1.0);
            assert_eq!(l.a().get(lay.upper_row(v), lay.y_col(v)), 1.0);
            assert_eq!(l.b_base()[lay.upper_row(v)], -1.0);
            assert_eq!(l.b_base()[lay.lower_row(v)], 0.0);
        }
        assert_eq!(l.d_diag(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(l.c(), &[0.0, 1.0, 0.0, 0.0]);
        for r in 0..l.rows() {
            let kind = lay.row_kind(r);
            match kind {
                RowKind::Constraint(k) => assert_eq!(r, k),
                RowKind::Potential(s) => assert_eq!(r, lay.potential_row(s)),
                RowKind::SlackBound(s) => assert_eq!(Some(r), lay.slack_bound_row(s)),
                RowKind::Lower(v) => assert_eq!(r, lay.lower_row(v)),
                RowKind::Upper(v) => assert_eq!(r, lay.upper_row(v)),
            }
        }
    }

    #[test]
    fn duplicate_coefficients_are_summed() {
        let mut m = one_potential(1);
        m.constraints.push(HardConstraint::over_targets([(0, 1.0)], -0.9));
        let mut l = CompiledLcqp::compile(&m, 0.1).unwrap();
        l.a = Arc::new(CsrMatrix::from_rows(2, vec![vec![(1, 1.0), (1, 0.5)]]));
        assert_eq!(l.a().get(0, 1), 1.5);
    }

    #[test]
    fn build_b_is_affine_in_g() {
        let mut m = one_potential(1);
        m.n_g = 1;
        m.potentials[0].g_coeffs.insert(0, 1.0);
        let l = CompiledLcqp::compile(&m, 0.1).unwrap();
        let b0 = l.build_b(&[0.0]).unwrap();
        let b1 = l.build_b(&[0.25]).unwrap();
        let row = l.layout().potential_row(0);
        assert_eq!(b1[row] - b0[row], 0.25);
        assert!(matches!(l.build_b(&[]), Err(Error::DimensionMismatch { .. })));

        let plain = CompiledLcqp::compile(&one_potential(1), 0.1).unwrap();
        assert_eq!(plain.build_b(&[]).unwrap(), plain.b_base());
    }

    #[test]
    fn primal_objective_examples() {
        let l = CompiledLcqp::compile(&one_potential(1), 0.1).unwrap();
        assert_eq!(l.primal_objective(&[0.0, 0.0]), 0.0);
        // c' nu with only the slack nonzero, minus the eps contribution
        let v = l.primal_objective(&[0.3, 0.0]) - 0.1 * 0.09;
        assert!((v - 0.3).abs() < 1e-15);
    }

    #[test]
    fn dual_to_primal_examples() {
        let l = CompiledLcqp::compile(&one_potential(1), 0.5).unwrap();
        let nu = l.dual_to_primal(&[0.0; 4]).unwrap();
        assert_eq!(nu, vec![-1.0, 0.0]);
        let mut zero = one_potential(1);
        zero.w_sy = vec![0.0];
        let lz = CompiledLcqp::compile(&zero, 0.5).unwrap();
        assert_eq!(lz.dual_to_primal(&[0.0; 4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dual_objective_rejects_negative_entries() {
        let l = CompiledLcqp::compile(&one_potential(1), 0.5).unwrap();
        let b = l.build_b(&[]).unwrap();
        assert_eq!(l.dual_objective(&[0.0; 4], &b).unwrap(), 0.0);
        assert!(matches!(
            l.dual_objective(&[0.0, -1.0, 0.0, 0.0], &b),
            Err(Error::NegativeDual { index: 1, .. })
        ));
    }

    #[test]
    fn block_form_is_twice_h() {
        let l = CompiledLcqp::compile(&one_potential(2), 0.3).unwrap();
        let b = l.build_b(&[]).unwrap();
        let mu = [0.4, 0.1, 0.7];
        let h = l.dual_objective(&mu, &b).unwrap();
        let hd = l.block_dual_objective(&mu, &b).unwrap();
        assert!((hd - 2.0 * h).abs() < 1e-14);
    }

    #[test]
    fn gap_positive_away_from_optimum() {
        let mut m = one_potential(1);
        m.potentials[0] = HingePotential::over_targets([(0, -1.0)], 0.8, 1, 0);
        let l = CompiledLcqp::compile(&m, 0.1).unwrap();
        let b = l.build_b(&[]).unwrap();
        let report = l.primal_dual_gap(&[0.0; 4], &b).unwrap();
        assert!(report.gap > 0.0, "{report:?}");
        assert_eq!(report.violation, 0.0);
    }

    #[test]
    fn prox_adds_diagonal_and_linear_terms() {
        let l = CompiledLcqp::compile(&one_potential(1), 0.1).unwrap();
        let p = l.with_prox(&[0.4], 0.5).unwrap();
        let col = l.layout().y_col(0);
        assert_eq!(p.d_diag()[col], 1.0);
        assert!((p.c()[col] + 0.8).abs() < 1e-15);
        // objective at yhat equals E_eps(yhat) + |yhat - y|^2 / (2 rho)
        let nu = [0.0, 0.4];
        let expect = l.primal_objective(&nu);
        assert!((p.primal_objective(&nu) - expect).abs() < 1e-15);
    }

    #[test]
    fn debug_dump_has_triplets() {
        let l = CompiledLcqp::compile(&one_potential(1), 0.1).unwrap();
        let dump = l.debug_dump(l.b_base());
        assert_eq!(dump["a"].as_array().unwrap().len(), l.a().nnz());
        assert_eq!(dump["rows"], 4);
    }
}
