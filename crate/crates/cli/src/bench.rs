use std::time::Instant;

use anyhow::Result;
use hlmrf::synthetic::{self, collective_classification, perturbation_schedule, SyntheticKind};
use hlmrf::{solve, solve_variant, CompiledLcqp, SolverConfig, Variant};
use serde::Serialize;
use serde_json::json;

use crate::commands::{write_csv, write_json, Outcome};
use crate::config::ExperimentConfig;

const EPSILON_GRID: [f64; 5] = [100.0, 10.0, 1.0, 0.1, 0.01];

#[derive(Serialize)]
struct WarmRow {
    step: usize,
    cold_epochs: usize,
    warm_epochs: usize,
    cold_objective: f64,
    warm_objective: f64,
    cold_wall_ns: u128,
    warm_wall_ns: u128,
}

#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    epochs: usize,
    objective: f64,
    converged: bool,
    wall_ns: u128,
}

#[derive(Serialize)]
struct VariantRow {
    kind: String,
    variant: String,
    workers: usize,
    epochs: usize,
    objective: f64,
    converged: bool,
    wall_ns: u128,
}

/// Runs the three benchmark tables and writes them as CSV.
pub fn run(cfg: &ExperimentConfig, size: usize, steps: usize) -> Result<Outcome> {
    let inf = &cfg.inference;
    let solver: &SolverConfig = &inf.solver;
    let mut all_converged = true;
    let synth = collective_classification(size, (size / 4).max(1), false, cfg.seed);

    // warm versus cold along a perturbation schedule
    let mut lcqp = CompiledLcqp::compile(&synth.model, inf.epsilon)?;
    let b = lcqp.build_b(&[])?;
    let mut warm = solve(&lcqp, &b, solver, None)?.mu;
    let mut warm_rows = Vec::with_capacity(steps);
    for (step, w) in perturbation_schedule(&synth.model.w_sy, steps, 0.01, cfg.seed).iter().enumerate() {
        lcqp.reweight(w)?;
        let cold = solve(&lcqp, &b, solver, None)?;
        let warmed = solve(&lcqp, &b, solver, Some(&warm))?;
        all_converged &= cold.converged() && warmed.converged();
        warm_rows.push(WarmRow {
            step,
            cold_epochs: cold.stats.epochs,
            warm_epochs: warmed.stats.epochs,
            cold_objective: cold.objective,
            warm_objective: warmed.objective,
            cold_wall_ns: cold.stats.wall_ns,
            warm_wall_ns: warmed.stats.wall_ns,
        });
        warm = warmed.mu;
    }

    let mut sweep_rows = Vec::with_capacity(EPSILON_GRID.len());
    for eps in EPSILON_GRID {
        let lcqp = CompiledLcqp::compile(&synth.model, eps)?;
        let b = lcqp.build_b(&[])?;
        let sol = solve(&lcqp, &b, solver, None)?;
        all_converged &= sol.converged();
        sweep_rows.push(SweepRow {
            epsilon: eps,
            epochs: sol.stats.epochs,
            objective: sol.objective,
            converged: sol.converged(),
            wall_ns: sol.stats.wall_ns,
        });
    }

    let kinds = [
        (SyntheticKind::CollectiveClassification, size),
        (SyntheticKind::Chain, size),
        (SyntheticKind::ManyComponents, (size / 4).max(2)),
    ];
    let mut variant_rows = Vec::new();
    for (kind, n) in kinds {
        let s = synthetic::generate(kind, n, cfg.seed)?;
        let lcqp = CompiledLcqp::compile(&s.model, inf.epsilon)?;
        let b = lcqp.build_b(&vec![0.0; s.model.n_g])?;
        for variant in [Variant::Serial, Variant::Cc, Variant::Lockfree] {
            let workers = if variant == Variant::Serial { 1 } else { inf.workers };
            let start = Instant::now();
            let sol = solve_variant(variant, &lcqp, &b, solver, workers, None)?;
            all_converged &= sol.converged();
            variant_rows.push(VariantRow {
                kind: kind.to_string(),
                variant: variant.to_string(),
                workers,
                epochs: sol.stats.epochs,
                objective: sol.objective,
                converged: sol.converged(),
                wall_ns: start.elapsed().as_nanos(),
            });
        }
    }

    std::fs::create_dir_all(&cfg.output)?;
    write_csv(&cfg.output.join("warm_start.csv"), &warm_rows)?;
    write_csv(&cfg.output.join("epsilon_sweep.csv"), &sweep_rows)?;
    write_csv(&cfg.output.join("variants.csv"), &variant_rows)?;
    let wins = warm_rows.iter().filter(|r| r.warm_epochs <= r.cold_epochs).count();
    let warm_total: usize = warm_rows.iter().map(|r| r.warm_epochs).sum();
    let cold_total: usize = warm_rows.iter().map(|r| r.cold_epochs).sum();
    write_json(
        &cfg.output.join("summary.json"),
        &json!({
            "command": "bench",
            "warm_not_slower_fraction": if warm_rows.is_empty() { 1.0 } else { wins as f64 / warm_rows.len() as f64 },
            "warm_epochs_total": warm_total,
            "cold_epochs_total": cold_total,
            "epsilon_sweep_epochs": sweep_rows.iter().map(|r| (r.epsilon, r.epochs)).collect::<Vec<_>>(),
            "all_converged": all_converged,
            "config": cfg,
        }),
    )?;
    println!(
        "warm <= cold in {wins}/{} steps, epochs warm {warm_total} vs cold {cold_total}",
        warm_rows.len()
    );
    for r in &sweep_rows {
        println!("eps {:>6}: {} epochs", r.epsilon, r.epochs);
    }
    Ok(Outcome::from_converged(all_converged))
}
