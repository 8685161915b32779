//! Dual block coordinate descent for [`CompiledLcqp`].
//!
//! Three variants share the same block step: [`solve`] (serial),
//! [`solve_cc_parallel`] (independent connected components on a thread pool)
//! and [`solve_lock_free`] (workers racing on atomic dual arrays).

mod bcd;
mod blocks;
mod components;
mod lockfree;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcqp::CompiledLcqp;

pub use bcd::{solve, solve_observed, StepEvent};
pub use blocks::{make_blocks, Block};
pub use components::{component_config, component_seed, connected_components, solve_cc_parallel, Components};
pub use lockfree::solve_lock_free;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    /// Primal-dual gap at most `delta` with a feasible certificate.
    Gap,
    /// Infinity-norm change of the primal certificate below `movement_tol`.
    PrimalMovement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Serial,
    Cc,
    Lockfree,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Serial => "serial",
            Variant::Cc => "cc",
            Variant::Lockfree => "lockfree",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(Variant::Serial),
            "cc" => Ok(Variant::Cc),
            "lockfree" | "lock-free" | "lf" => Ok(Variant::Lockfree),
            other => Err(Error::Config(format!("unknown solver variant `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub delta: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub stop_mode: StopMode,
    pub movement_tol: f64,
    /// Largest hard-constraint violation accepted by the gap stop.
    pub feas_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            delta: 1e-6,
            max_epochs: 10_000,
            seed: 0,
            stop_mode: StopMode::Gap,
            movement_tol: 1e-3,
            feas_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.movement_tol > 0.0) {
            return Err(Error::Config(format!(
                "movement_tol must be positive, got {}",
                self.movement_tol
            )));
        }
        if !(self.feas_tol >= 0.0) {
            return Err(Error::Config(format!("feas_tol must be nonnegative, got {}", self.feas_tol)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Converged,
    Timeout,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveStats {
    pub variant: Variant,
    pub epochs: usize,
    pub steps: usize,
    /// Steps that decreased the dual objective by more than rounding noise.
    pub improving_steps: usize,
    pub final_gap: f64,
    pub violation: f64,
    pub wall_ns: u128,
    pub gap_trace: Vec<(usize, f64)>,
    /// `max |A' mu - m|` between the returned duals and the solver's cached
    /// `m`, at the last epoch.
    pub cache_drift: f64,
    /// Per-component statistics for the connected-component variant.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<SolveStats>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub mu: Vec<f64>,
    /// Feasible primal certificate recovered from `mu`.
    pub nu: Vec<f64>,
    pub objective: f64,
    pub dual_value: f64,
    pub status: SolveStatus,
    pub stats: SolveStats,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn targets<'a>(&'a self, lcqp: &CompiledLcqp) -> &'a [f64] {
        lcqp.targets_of(&self.nu)
    }
}

/// Runs the requested variant. `workers` is ignored by the serial solver.
pub fn solve_variant(
    variant: Variant,
    lcqp: &CompiledLcqp,
    b: &[f64],
    config: &SolverConfig,
    workers: usize,
    warm_start: Option<&[f64]>,
) -> Result<Solution> {
    match variant {
        Variant::Serial => solve(lcqp, b, config, warm_start),
        Variant::Cc => solve_cc_parallel(lcqp, b, config, workers, warm_start),
        Variant::Lockfree => solve_lock_free(lcqp, b, config, workers, warm_start),
    }
}

pub(crate) fn initial_dual(lcqp: &CompiledLcqp, b: &[f64], warm: Option<&[f64]>) -> Result<Vec<f64>> {
    if b.len() != lcqp.rows() {
        return Err(Error::DimensionMismatch {
            what: "constraint constants",
            expected: lcqp.rows(),
            found: b.len(),
        });
    }
    match warm {
        None => Ok(vec![0.0; lcqp.rows()]),
        Some(mu) => {
            if mu.len() != lcqp.rows() {
                return Err(Error::DimensionMismatch {
                    what: "warm start",
                    expected: lcqp.rows(),
                    found: mu.len(),
                });
            }
            if let Some((index, &value)) = mu.iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
                return Err(Error::NegativeDual { index, value });
            }
            Ok(mu.to_vec())
        }
    }
}

/// Epoch bookkeeping shared by the serial and lock-free loops.
pub(crate) struct Tracker<'a> {
    lcqp: &'a CompiledLcqp,
    b: &'a [f64],
    config: &'a SolverConfig,
    prev_cert: Vec<f64>,
    best: Option<(f64, Vec<f64>)>,
    trace: Vec<(usize, f64)>,
    drift: f64,
    start: Instant,
}

impl<'a> Tracker<'a> {
    pub fn new(lcqp: &'a CompiledLcqp, b: &'a [f64], config: &'a SolverConfig, mu: &[f64], m: &[f64]) -> Self {
        let prev_cert = lcqp.gap_from_m(mu, m, b).certificate;
        Tracker {
            lcqp,
            b,
            config,
            prev_cert,
            best: None,
            trace: Vec::new(),
            drift: 0.0,
            start: Instant::now(),
        }
    }

    /// Records the epoch and reports whether the stopping rule holds.
    pub fn after_epoch(&mut self, epoch: usize, mu: &[f64], m: &[f64]) -> bool {
        let report = self.lcqp.gap_from_m(mu, m, self.b);
        self.trace.push((epoch, report.gap));
        let stop = match self.config.stop_mode {
            StopMode::Gap => report.gap <= self.config.delta && report.violation <= self.config.feas_tol,
            StopMode::PrimalMovement => {
                let moved = report
                    .certificate
                    .iter()
                    .zip(&self.prev_cert)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                moved < self.config.movement_tol
            }
        };
        let score = report.gap.max(0.0) + report.violation;
        if self.best.as_ref().is_none_or(|(s, _)| score < *s) {
            self.best = Some((score, mu.to_vec()));
        }
        self.prev_cert = report.certificate;
        if stop || epoch >= self.config.max_epochs {
            self.drift = self
                .lcqp
                .a()
                .tr_mul_vec(mu)
                .iter()
                .zip(m)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
        }
        stop
    }

    pub fn finish(
        self,
        variant: Variant,
        counts: (usize, usize, usize),
        mu: Vec<f64>,
        converged: bool,
    ) -> Solution {
        let (epochs, steps, improving_steps) = counts;
        let mu = match (converged, self.best) {
            (false, Some((_, best))) => best,
            _ => mu,
        };
        let report = self
            .lcqp
            .primal_dual_gap(&mu, self.b)
            .expect("dual iterate stays nonnegative");
        Solution {
            objective: report.primal,
            dual_value: report.dual,
            nu: report.certificate,
            mu,
            status: if converged {
                SolveStatus::Converged
            } else {
                SolveStatus::Timeout
            },
            stats: SolveStats {
                variant,
                epochs,
                steps,
                improving_steps,
                final_gap: report.gap,
                violation: report.violation,
                wall_ns: self.start.elapsed().as_nanos(),
                gap_trace: self.trace,
                cache_drift: self.drift,
                components: Vec::new(),
            },
        }
    }
}
