use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lcqp::CompiledLcqp;

#[derive(Clone, Copy, Debug)]
pub struct OracleLimits {
    /// Problems with more dual rows are rejected.
    pub max_rows: usize,
    /// Candidate active sets tried before giving up.
    pub max_candidates: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_rows: 24,
            max_candidates: 5_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub nu_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub objective: f64,
    pub active_set: Vec<usize>,
    /// False when the rows active at `nu_star` are linearly dependent, so the
    /// optimal dual may not be unique.
    pub unique_dual: bool,
    pub candidates_tried: usize,
}

const FEAS_TOL: f64 = 1e-9;
const ACTIVE_TOL: f64 = 1e-9;

/// Choices for one structural group of rows. Every candidate picks exactly
/// one option per group.
struct Group {
    options: Vec<Vec<usize>>,
}

/// Row groups: a hard constraint is in or out; a squared potential row is in
/// or out; a linear potential has its row, its slack bound or both active
/// (its slack always sits at the larger of the two); a target is free, at
/// its lower bound or at its upper bound.
fn groups(lcqp: &CompiledLcqp) -> Vec<Group> {
    let lay = lcqp.layout();
    let mut out = Vec::new();
    for k in 0..lay.q {
        out.push(Group {
            options: vec![vec![], vec![k]],
        });
    }
    for s in 0..lay.n_slack() {
        let row = lay.potential_row(s);
        let options = match lay.slack_bound_row(s) {
            None => vec![vec![], vec![row]],
            Some(bound) => vec![vec![row], vec![bound], vec![row, bound]],
        };
        out.push(Group { options });
    }
    for v in 0..lay.n_y {
        out.push(Group {
            options: vec![vec![], vec![lay.lower_row(v)], vec![lay.upper_row(v)]],
        });
    }
    out
}

struct Dense {
    a: DMatrix<f64>,
    b: DVector<f64>,
    q_inv: DVector<f64>,
    c: DVector<f64>,
    /// `A Q^-1 c`
    aqc: DVector<f64>,
}

impl Dense {
    fn new(lcqp: &CompiledLcqp, b: &[f64]) -> Self {
        let (rows, cols) = (lcqp.rows(), lcqp.cols());
        let mut a = DMatrix::zeros(rows, cols);
        for (i, j, v) in lcqp.a().triplets() {
            a[(i, j)] = v;
        }
        let q_inv = DVector::from_column_slice(lcqp.q_inv());
        let c = DVector::from_column_slice(lcqp.c());
        let aqc = &a * c.component_mul(&q_inv);
        Dense {
            a,
            b: DVector::from_column_slice(b),
            q_inv,
            c,
            aqc,
        }
    }

    /// KKT point for active set `set`, if the equality-constrained problem is
    /// nonsingular and its multipliers are nonnegative and the primal is feasible.
    fn try_set(&self, set: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let k = set.len();
        let cols = self.a.ncols();
        let mut mu_s = DVector::zeros(k);
        if k > 0 {
            let mut m = DMatrix::zeros(k, k);
            for (p, &i) in set.iter().enumerate() {
                for (r, &j) in set.iter().enumerate().skip(p) {
                    let mut acc = 0.0;
                    for col in 0..cols {
                        acc += self.a[(i, col)] * self.q_inv[col] * self.a[(j, col)];
                    }
                    m[(p, r)] = acc;
                    m[(r, p)] = acc;
                }
            }
            let scale = (0..k).map(|p| m[(p, p)]).fold(0.0, f64::max);
            let rhs = DVector::from_iterator(k, set.iter().map(|&i| 2.0 * self.b[i] - self.aqc[i]));
            let chol = m.cholesky()?;
            let l = chol.l_dirty();
            if (0..k).any(|p| l[(p, p)] * l[(p, p)] <= 1e-12 * scale.max(1.0)) {
                return None;
            }
            mu_s = chol.solve(&rhs);
            if mu_s.iter().any(|&v| v < -1e-10) {
                return None;
            }
        }
        let mut mu = DVector::zeros(self.a.nrows());
        for (p, &i) in set.iter().enumerate() {
            mu[i] = mu_s[p].max(0.0);
        }
        let nu = (self.a.transpose() * &mu + &self.c).component_mul(&self.q_inv) * -0.5;
        let resid = &self.a * &nu + &self.b;
        if resid.iter().any(|&r| r > FEAS_TOL) {
            return None;
        }
        Some((nu, mu))
    }
}

/// Exact solution of a small LCQP by enumerating active sets in order of
/// increasing size and returning the first KKT point.
pub fn active_set_oracle(lcqp: &CompiledLcqp, b: &[f64], limits: OracleLimits) -> Result<OracleSolution> {
    if lcqp.rows() > limits.max_rows {
        return Err(Error::OracleBudget(format!(
            "{} dual rows exceed the limit of {}",
            lcqp.rows(),
            limits.max_rows
        )));
    }
    if b.len() != lcqp.rows() {
        return Err(Error::DimensionMismatch {
            what: "constraint constants",
            expected: lcqp.rows(),
            found: b.len(),
        });
    }
    let dense = Dense::new(lcqp, b);
    let groups = groups(lcqp);
    let min_size: usize = groups.iter().map(|g| g.options.iter().map(Vec::len).min().unwrap()).sum();
    let max_size: usize = groups.iter().map(|g| g.options.iter().map(Vec::len).max().unwrap()).sum();
    let mut tried = 0;
    let mut set = Vec::new();
    for size in min_size..=max_size.min(lcqp.cols().max(min_size)) {
        let found = search(&dense, &groups, 0, size, &mut set, &mut tried, limits.max_candidates)?;
        if let Some((nu, mu)) = found {
            let nu_star: Vec<f64> = nu.iter().copied().collect();
            let resid = &dense.a * &nu + &dense.b;
            let active: Vec<usize> = (0..lcqp.rows()).filter(|&i| resid[i].abs() <= ACTIVE_TOL).collect();
            let unique_dual = if active.is_empty() {
                true
            } else {
                let rows = DMatrix::from_fn(active.len(), lcqp.cols(), |p, j| dense.a[(active[p], j)]);
                rows.rank(1e-9) == active.len()
            };
            return Ok(OracleSolution {
                objective: lcqp.primal_objective(&nu_star),
                nu_star,
                mu_star: mu.iter().copied().collect(),
                active_set: set,
                unique_dual,
                candidates_tried: tried,
            });
        }
    }
    Err(Error::Infeasible(format!(
        "no active set among {tried} candidates satisfies the optimality conditions"
    )))
}

fn search(
    dense: &Dense,
    groups: &[Group],
    g: usize,
    remaining: usize,
    set: &mut Vec<usize>,
    tried: &mut usize,
    budget: usize,
) -> Result<Option<(DVector<f64>, DVector<f64>)>> {
    if g == groups.len() {
        if remaining != 0 {
            return Ok(None);
        }
        *tried += 1;
        if *tried > budget {
            return Err(Error::OracleBudget(format!("more than {budget} candidate active sets")));
        }
        let mut sorted = set.clone();
        sorted.sort_unstable();
        return Ok(dense.try_set(&sorted).inspect(|sol| {
            *set = sorted;
        }));
    }
    for opt in &groups[g].options {
        if opt.len() > remaining {
            continue;
        }
        let min_rest: usize = groups[g + 1..]
            .iter()
            .map(|gr| gr.options.iter().map(Vec::len).min().unwrap())
            .sum();
        if min_rest > remaining - opt.len() {
            continue;
        }
        let len = set.len();
        set.extend_from_slice(opt);
        if let Some(sol) = search(dense, groups, g + 1, remaining - opt.len(), set, tried, budget)? {
            return Ok(Some(sol));
        }
        set.truncate(len);
    }
    Ok(None)
}
