use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bcd::{block_step, DualStore, Scratch, IMPROVEMENT_TOL};
use super::blocks::plan_blocks;
use super::{initial_dual, Solution, SolverConfig, Tracker, Variant};
use crate::error::{Error, Result};
use crate::lcqp::CompiledLcqp;

/// `f64` values stored as bit patterns in atomics.
struct AtomicF64s(Vec<AtomicU64>);

impl AtomicF64s {
    fn new(values: &[f64]) -> Self {
        AtomicF64s(values.iter().map(|v| AtomicU64::new(v.to_bits())).collect())
    }

    #[inline]
    fn load(&self, i: usize) -> f64 {
        f64::from_bits(self.0[i].load(Ordering::Relaxed))
    }

    /// Atomically replaces entry `i` by `update(old)`; returns `new - old`.
    #[inline]
    fn update(&self, i: usize, update: impl Fn(f64) -> f64) -> f64 {
        let cell = &self.0[i];
        let mut cur = cell.load(Ordering::Relaxed);
        loop {
            let old = f64::from_bits(cur);
            let new = update(old);
            match cell.compare_exchange_weak(cur, new.to_bits(), Ordering::AcqRel, Ordering::Relaxed) {
                Ok(_) => return new - old,
                Err(actual) => cur = actual,
            }
        }
    }

    fn snapshot(&self) -> Vec<f64> {
        (0..self.0.len()).map(|i| self.load(i)).collect()
    }
}

struct SharedStore<'a> {
    mu: &'a AtomicF64s,
    m: &'a AtomicF64s,
}

impl DualStore for SharedStore<'_> {
    #[inline]
    fn mu(&self, row: usize) -> f64 {
        self.mu.load(row)
    }

    #[inline]
    fn m(&self, col: usize) -> f64 {
        self.m.load(col)
    }

    #[inline]
    fn update_mu(&mut self, row: usize, update: impl Fn(f64) -> f64) -> f64 {
        // projection onto mu >= 0 happens inside the CAS
        self.mu.update(row, |old| update(old).max(0.0))
    }

    #[inline]
    fn add_m(&mut self, col: usize, delta: f64) {
        self.m.update(col, |old| old + delta);
    }
}

/// Lock-free parallel dual block coordinate descent.
///
/// Each epoch, `workers` threads pull blocks from one shared shuffled queue
/// and update the dual vector and `A' mu` with atomic scalar writes, reading
/// possibly stale values. Stopping is checked on a snapshot after all workers
/// finish the epoch. With one worker the trajectory equals [`super::solve`].
pub fn solve_lock_free(
    lcqp: &CompiledLcqp,
    b: &[f64],
    config: &SolverConfig,
    workers: usize,
    warm_start: Option<&[f64]>,
) -> Result<Solution> {
    config.validate()?;
    let workers = workers.max(1);
    let mu0 = initial_dual(lcqp, b, warm_start)?;
    let m0 = lcqp.a().tr_mul_vec(&mu0);
    let mu = AtomicF64s::new(&mu0);
    let m = AtomicF64s::new(&m0);
    let blocks = plan_blocks(lcqp);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    let mut tracker = Tracker::new(lcqp, b, config, &mu0, &m0);
    let steps = AtomicUsize::new(0);
    let improving = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let failure: Mutex<Option<Error>> = Mutex::new(None);

    let run_queue = |order: &[usize], cursor: &AtomicUsize| {
        let mut store = SharedStore { mu: &mu, m: &m };
        let mut scratch = Scratch::default();
        while !failed.load(Ordering::Relaxed) {
            let i = cursor.fetch_add(1, Ordering::Relaxed);
            let Some(&bi) = order.get(i) else { break };
            match block_step(lcqp, b, &blocks[bi], &mut store, &mut scratch) {
                Ok(out) => {
                    steps.fetch_add(1, Ordering::Relaxed);
                    if out.decrease > IMPROVEMENT_TOL {
                        improving.fetch_add(1, Ordering::Relaxed);
                    }
                }
                Err(e) => {
                    failed.store(true, Ordering::Relaxed);
                    failure.lock().unwrap().get_or_insert(e);
                }
            }
        }
    };

    let mut converged = false;
    let mut epoch = 0;
    let mut mu_snap = mu0;
    while epoch < config.max_epochs {
        epoch += 1;
        order.shuffle(&mut rng);
        let cursor = AtomicUsize::new(0);
        if workers == 1 {
            run_queue(&order, &cursor);
        } else {
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(|| run_queue(&order, &cursor));
                }
            });
        }
        if let Some(e) = failure.lock().unwrap().take() {
            return Err(e);
        }
        mu_snap = mu.snapshot();
        let m_snap = m.snapshot();
        if tracker.after_epoch(epoch, &mu_snap, &m_snap) {
            converged = true;
            break;
        }
    }
    let counts = (epoch, steps.into_inner(), improving.into_inner());
    Ok(tracker.finish(Variant::Lockfree, counts, mu_snap, converged))
}
