use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::blocks::{plan_blocks, PlannedBlock};
use super::{initial_dual, Solution, SolverConfig, Tracker, Variant};
use crate::error::{Error, Result};
use crate::lcqp::CompiledLcqp;

/// Decreases of the block objective below this are rounding noise.
pub(crate) const IMPROVEMENT_TOL: f64 = 1e-14;

/// Read/write access to the dual iterate and its cached `m = A' mu`.
pub(crate) trait DualStore {
    fn mu(&self, row: usize) -> f64;
    fn m(&self, col: usize) -> f64;
    /// Replaces `mu[row]` by `update(mu[row])` and returns the change applied.
    fn update_mu(&mut self, row: usize, update: impl Fn(f64) -> f64) -> f64;
    fn add_m(&mut self, col: usize, delta: f64);
}

pub(crate) struct SliceStore<'a> {
    pub mu: &'a mut [f64],
    pub m: &'a mut [f64],
}

impl DualStore for SliceStore<'_> {
    #[inline]
    fn mu(&self, row: usize) -> f64 {
        self.mu[row]
    }

    #[inline]
    fn m(&self, col: usize) -> f64 {
        self.m[col]
    }

    #[inline]
    fn update_mu(&mut self, row: usize, update: impl Fn(f64) -> f64) -> f64 {
        let old = self.mu[row];
        let new = update(old);
        self.mu[row] = new;
        new - old
    }

    #[inline]
    fn add_m(&mut self, col: usize, delta: f64) {
        self.m[col] += delta;
    }
}

#[derive(Default)]
pub(crate) struct Scratch {
    d: Vec<f64>,
    f: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct StepOutcome {
    pub alpha: f64,
    /// Predicted decrease of `h` (the negated dual function).
    pub decrease: f64,
}

/// One exact-steplength step on a block.
///
/// `d = A_blk Q^-1 (m + c) - 2 b_blk` is the gradient of `2h` restricted to the
/// block, with entries pointing out of the feasible orthant at `mu_j = 0`
/// zeroed. The step `mu <- mu - alpha d` takes the unconstrained minimizer
/// along `-d` unless a coordinate hits zero first.
pub(crate) fn block_step<S: DualStore>(
    lcqp: &CompiledLcqp,
    b: &[f64],
    blk: &PlannedBlock,
    store: &mut S,
    scratch: &mut Scratch,
) -> Result<StepOutcome> {
    let q_inv = lcqp.q_inv();
    let c = lcqp.c();
    let n = blk.rows.len();
    scratch.d.clear();
    scratch.d.resize(n, 0.0);
    scratch.f.clear();
    scratch.f.resize(blk.cols.len(), 0.0);

    let mut dd = 0.0;
    let mut ratio = f64::INFINITY;
    let mut hit = usize::MAX;
    for k in 0..n {
        let row = blk.rows[k];
        let mut dk = -2.0 * b[row];
        for &(p, a) in blk.row_entries(k) {
            let col = blk.cols[p];
            dk += a * q_inv[col] * (store.m(col) + c[col]);
        }
        let mu = store.mu(row);
        if dk > 0.0 {
            if mu <= 0.0 {
                dk = 0.0;
            } else if mu / dk < ratio {
                ratio = mu / dk;
                hit = k;
            }
        }
        scratch.d[k] = dk;
        dd += dk * dk;
        for &(p, a) in blk.row_entries(k) {
            scratch.f[p] += a * dk;
        }
    }
    if dd == 0.0 {
        return Ok(StepOutcome {
            alpha: 0.0,
            decrease: 0.0,
        });
    }
    let denom: f64 = scratch
        .f
        .iter()
        .zip(&blk.cols)
        .map(|(f, &col)| f * f * q_inv[col])
        .sum();
    let unconstrained = if denom > 0.0 { dd / denom } else { f64::INFINITY };
    let alpha = unconstrained.min(ratio);
    if !alpha.is_finite() {
        return Err(Error::Infeasible(format!(
            "dual objective is unbounded below along block starting at row {}",
            blk.rows[0]
        )));
    }
    let at_bound = ratio <= unconstrained;
    for k in 0..n {
        let dk = scratch.d[k];
        if dk == 0.0 {
            continue;
        }
        let row = blk.rows[k];
        let delta = if at_bound && k == hit {
            store.update_mu(row, |_| 0.0)
        } else {
            store.update_mu(row, |old| (old - alpha * dk).max(0.0))
        };
        if delta != 0.0 {
            for &(p, a) in blk.row_entries(k) {
                store.add_m(blk.cols[p], a * delta);
            }
        }
    }
    Ok(StepOutcome {
        alpha,
        decrease: 0.5 * (alpha * dd - 0.5 * alpha * alpha * denom),
    })
}

/// State visible to a step observer.
pub struct StepEvent<'a> {
    pub epoch: usize,
    /// Index into [`make_blocks`](super::make_blocks) output.
    pub block: usize,
    pub mu: &'a [f64],
    pub m: &'a [f64],
    pub alpha: f64,
}

/// Serial dual block coordinate descent from `warm_start` (or `mu = 0`).
pub fn solve(
    lcqp: &CompiledLcqp,
    b: &[f64],
    config: &SolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<Solution> {
    solve_observed(lcqp, b, config, warm_start, |_| {})
}

/// [`solve`] with a callback after every block step.
pub fn solve_observed(
    lcqp: &CompiledLcqp,
    b: &[f64],
    config: &SolverConfig,
    warm_start: Option<&[f64]>,
    mut observer: impl FnMut(StepEvent<'_>),
) -> Result<Solution> {
    config.validate()?;
    let mut mu = initial_dual(lcqp, b, warm_start)?;
    let mut m = lcqp.a().tr_mul_vec(&mu);
    let blocks = plan_blocks(lcqp);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    let mut scratch = Scratch::default();
    let mut tracker = Tracker::new(lcqp, b, config, &mu, &m);
    let (mut steps, mut improving) = (0, 0);
    let mut converged = false;
    let mut epoch = 0;
    while epoch < config.max_epochs {
        epoch += 1;
        order.shuffle(&mut rng);
        for &bi in &order {
            let mut store = SliceStore {
                mu: &mut mu,
                m: &mut m,
            };
            let out = block_step(lcqp, b, &blocks[bi], &mut store, &mut scratch)?;
            steps += 1;
            if out.decrease > IMPROVEMENT_TOL {
                improving += 1;
            }
            observer(StepEvent {
                epoch,
                block: bi,
                mu: &mu,
                m: &m,
                alpha: out.alpha,
            });
        }
        if tracker.after_epoch(epoch, &mu, &m) {
            converged = true;
            break;
        }
    }
    Ok(tracker.finish(Variant::Serial, (epoch, steps, improving), mu, converged))
}
