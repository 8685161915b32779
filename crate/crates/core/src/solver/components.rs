use rayon::prelude::*;

use super::{initial_dual, solve, Solution, SolveStats, SolveStatus, SolverConfig, Variant};
use crate::error::{Error, Result};
use crate::lcqp::CompiledLcqp;
use crate::model::{GroundedModel, SparseCoeffs};

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components of the target co-occurrence graph.
///
/// Components are ordered by their smallest target index. Potentials and
/// constraints without target coefficients form trailing singleton
/// components with no targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Components {
    pub vars: Vec<Vec<usize>>,
    pub constraints: Vec<Vec<usize>>,
    pub potentials: Vec<Vec<usize>>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    fn build(
        n_y: usize,
        constraints: impl Iterator<Item = (usize, Vec<usize>)>,
        potentials: impl Iterator<Item = (usize, Vec<usize>)>,
    ) -> Self {
        let constraints: Vec<(usize, Vec<usize>)> = constraints.collect();
        let potentials: Vec<(usize, Vec<usize>)> = potentials.collect();
        let mut ds = DisjointSet::new(n_y);
        for (_, vars) in constraints.iter().chain(&potentials) {
            for w in vars.windows(2) {
                ds.union(w[0], w[1]);
            }
        }
        let mut slot = vec![usize::MAX; n_y];
        let mut out = Components {
            vars: Vec::new(),
            constraints: Vec::new(),
            potentials: Vec::new(),
        };
        for v in 0..n_y {
            let root = ds.find(v);
            if slot[root] == usize::MAX {
                slot[root] = out.vars.len();
                out.vars.push(Vec::new());
                out.constraints.push(Vec::new());
                out.potentials.push(Vec::new());
            }
            out.vars[slot[root]].push(v);
        }
        let mut place = |vars: &Vec<usize>, idx: usize, is_constraint: bool, out: &mut Components| {
            let k = match vars.first() {
                Some(&v) => slot[ds.find(v)],
                None => {
                    out.vars.push(Vec::new());
                    out.constraints.push(Vec::new());
                    out.potentials.push(Vec::new());
                    out.vars.len() - 1
                }
            };
            if is_constraint {
                out.constraints[k].push(idx);
            } else {
                out.potentials[k].push(idx);
            }
        };
        for (i, vars) in &constraints {
            place(vars, *i, true, &mut out);
        }
        for (i, vars) in &potentials {
            place(vars, *i, false, &mut out);
        }
        out
    }

    /// Components of a compiled problem, read off its constraint and potential rows.
    pub fn of_lcqp(lcqp: &CompiledLcqp) -> Self {
        let lay = lcqp.layout();
        let n_s = lay.n_slack();
        let targets = |row: usize| -> Vec<usize> {
            lcqp.a()
                .row(row)
                .filter(|&(c, _)| c >= n_s)
                .map(|(c, _)| c - n_s)
                .collect()
        };
        Components::build(
            lay.n_y,
            (0..lay.q).map(|k| (k, targets(k))),
            (0..lcqp.n_potentials()).filter_map(|k| {
                let s = lcqp.potential_slack(k);
                (s != usize::MAX).then(|| (k, targets(lay.potential_row(s))))
            }),
        )
    }
}

fn support(coeffs: &SparseCoeffs) -> Vec<usize> {
    coeffs.keys().copied().collect()
}

/// Union-find over targets that share a potential or hard constraint.
pub fn connected_components(model: &GroundedModel) -> Components {
    Components::build(
        model.n_y,
        model.constraints.iter().map(|c| support(&c.y_coeffs)).enumerate(),
        model.potentials.iter().map(|p| support(&p.y_coeffs)).enumerate(),
    )
}

/// Permutation seed for component `k`; component 0 uses the base seed.
pub fn component_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Configuration for component `k` of `n`: its own permutation seed and an
/// equal share of the gap tolerance, so component gaps sum to at most `delta`.
pub fn component_config(config: &SolverConfig, k: usize, n: usize) -> SolverConfig {
    SolverConfig {
        seed: component_seed(config.seed, k),
        delta: config.delta / n.max(1) as f64,
        ..config.clone()
    }
}

/// Solves each connected component independently on a pool of `workers`
/// threads. Each component runs the serial solver on its restricted problem
/// with [`component_config`], so results do not depend on scheduling.
pub fn solve_cc_parallel(
    lcqp: &CompiledLcqp,
    b: &[f64],
    config: &SolverConfig,
    workers: usize,
    warm_start: Option<&[f64]>,
) -> Result<Solution> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mu0 = initial_dual(lcqp, b, warm_start)?;
    let comps = Components::of_lcqp(lcqp);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<(Solution, Vec<usize>, Vec<usize>)>> = pool.install(|| {
        (0..comps.len())
            .into_par_iter()
            .map(|k| {
                let (sub, rows, cols) =
                    lcqp.restrict(&comps.constraints[k], &comps.potentials[k], &comps.vars[k]);
                let sub_b: Vec<f64> = rows.iter().map(|&r| b[r]).collect();
                let sub_mu: Vec<f64> = rows.iter().map(|&r| mu0[r]).collect();
                let cfg = component_config(config, k, comps.len());
                let sol = solve(&sub, &sub_b, &cfg, warm_start.map(|_| sub_mu.as_slice()))?;
                Ok((sol, rows, cols))
            })
            .collect()
    });

    let mut mu = vec![0.0; lcqp.rows()];
    let mut nu = vec![0.0; lcqp.cols()];
    let mut comp_stats = Vec::with_capacity(results.len());
    let mut converged = true;
    for res in results {
        let (sol, rows, cols) = res?;
        for (&r, &v) in rows.iter().zip(&sol.mu) {
            mu[r] = v;
        }
        for (&c, &v) in cols.iter().zip(&sol.nu) {
            nu[c] = v;
        }
        converged &= sol.status == SolveStatus::Converged;
        comp_stats.push(sol.stats);
    }
    let epochs = comp_stats.iter().map(|s| s.epochs).max().unwrap_or(0);
    let gap_trace = (1..=epochs)
        .map(|e| {
            let total = comp_stats
                .iter()
                .filter_map(|s| s.gap_trace.get(e.min(s.gap_trace.len()).saturating_sub(1)))
                .map(|&(_, g)| g)
                .sum();
            (e, total)
        })
        .collect();
    let stats = SolveStats {
        variant: Variant::Cc,
        epochs,
        steps: comp_stats.iter().map(|s| s.steps).sum(),
        improving_steps: comp_stats.iter().map(|s| s.improving_steps).sum(),
        final_gap: comp_stats.iter().map(|s| s.final_gap).sum(),
        violation: comp_stats.iter().map(|s| s.violation).fold(0.0, f64::max),
        wall_ns: start.elapsed().as_nanos(),
        gap_trace,
        cache_drift: comp_stats.iter().map(|s| s.cache_drift).fold(0.0, f64::max),
        components: comp_stats,
    };
    let objective = lcqp.primal_objective(&nu);
    Ok(Solution {
        dual_value: objective - stats.final_gap,
        objective,
        nu,
        mu,
        status: if converged {
            SolveStatus::Converged
        } else {
            SolveStatus::Timeout
        },
        stats,
    })
}
