use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use hlmrf::oracle::{active_set_oracle, OracleLimits};
use hlmrf::synthetic::{self, SyntheticKind};
use hlmrf::{CompiledLcqp, DifferentiableHead, Error, GroundedModel, Learner, TrainingSample};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

/// How a command finished, mapped to the exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    Budget,
    Failed,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Converged => 0,
            Outcome::Failed => 1,
            Outcome::Budget => 2,
        }
    }

    pub fn from_converged(ok: bool) -> Self {
        if ok {
            Outcome::Converged
        } else {
            Outcome::Budget
        }
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_model(cfg: &ExperimentConfig) -> Result<GroundedModel> {
    let path = cfg.model.as_ref().ok_or_else(|| anyhow!("--model is required"))?;
    let model = GroundedModel::load(path).with_context(|| format!("loading model {}", path.display()))?;
    model.ensure_valid()?;
    Ok(model)
}

fn load_head(cfg: &ExperimentConfig) -> Result<Option<DifferentiableHead>> {
    cfg.head
        .as_ref()
        .map(|p| -> Result<DifferentiableHead> {
            let text = fs::read_to_string(p).with_context(|| format!("reading head {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing head {}", p.display()))
        })
        .transpose()
}

fn load_samples(path: &Path) -> Result<Vec<TrainingSample>> {
    TrainingSample::load_all(path).with_context(|| format!("loading samples {}", path.display()))
}

#[derive(Serialize)]
struct TargetRow {
    target: usize,
    value: f64,
}

pub fn infer(cfg: &ExperimentConfig, sample_index: usize) -> Result<Outcome> {
    let mut model = load_model(cfg)?;
    let head = load_head(cfg)?;
    let mut g = vec![0.0; model.n_g];
    if let Some(path) = &cfg.samples {
        let samples = load_samples(path)?;
        let sample = samples
            .get(sample_index)
            .ok_or_else(|| anyhow!("sample {sample_index} not found in {}", path.display()))?;
        if let Some(x) = &sample.x_sy {
            model = model.with_inputs(x);
        }
        if let Some(h) = &head {
            g = h.forward(&sample.x_nn)?;
        }
    }
    let inf = &cfg.inference;
    let lcqp = CompiledLcqp::compile(&model, inf.epsilon)?;
    let b = lcqp.build_b(&g)?;
    let sol = inf.run(&lcqp, &b, None)?;

    prepare_output(&cfg.output)?;
    let rows: Vec<TargetRow> = sol
        .targets(&lcqp)
        .iter()
        .enumerate()
        .map(|(target, &value)| TargetRow { target, value })
        .collect();
    write_csv(&cfg.output.join("solution.csv"), &rows)?;
    write_json(
        &cfg.output.join("summary.json"),
        &json!({
            "command": "infer",
            "status": sol.status,
            "objective": sol.objective,
            "dual_value": sol.dual_value,
            "energy": model.energy(sol.targets(&lcqp), &g)?,
            "stats": sol.stats,
            "config": cfg,
        }),
    )?;
    println!(
        "{} after {} epochs, objective {:.9}, gap {:.3e}",
        if sol.converged() { "converged" } else { "budget exhausted" },
        sol.stats.epochs,
        sol.objective,
        sol.stats.final_gap
    );
    Ok(Outcome::from_converged(sol.converged()))
}

#[derive(Serialize)]
struct WeightRow {
    kind: &'static str,
    index: usize,
    value: f64,
}

pub fn learn(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = load_model(cfg)?;
    let head = load_head(cfg)?;
    let samples = match &cfg.samples {
        Some(p) => load_samples(p)?,
        None => Vec::new(),
    };
    let mut learner = Learner::new(&model, &samples, head, cfg.learn.clone())?;
    let out = learner.fit()?;

    prepare_output(&cfg.output)?;
    let weights: Vec<WeightRow> = out
        .w_sy
        .iter()
        .enumerate()
        .map(|(index, &value)| WeightRow { kind: "symbolic", index, value })
        .chain(out.w_nn.iter().enumerate().map(|(index, &value)| WeightRow { kind: "neural", index, value }))
        .collect();
    write_csv(&cfg.output.join("weights.csv"), &weights)?;
    write_csv(&cfg.output.join("history.csv"), &out.history)?;
    write_json(
        &cfg.output.join("summary.json"),
        &json!({
            "command": "learn",
            "converged": out.converged,
            "epochs": out.epochs,
            "iota_halvings": out.iota_halvings,
            "initial": out.initial,
            "last": out.last,
            "w_sy": out.w_sy,
            "w_nn": out.w_nn,
            "inference_epochs_total": learner.inference_epochs_total(),
            "config": cfg,
        }),
    )?;
    println!(
        "{} after {} epochs: loss {:.6} -> {:.6}, train mse {:.6} -> {:.6}",
        if out.converged { "converged" } else { "budget exhausted" },
        out.epochs,
        out.initial.loss,
        out.last.loss,
        out.initial.train_mse,
        out.last.train_mse
    );
    Ok(Outcome::from_converged(out.converged))
}

pub fn gen_synthetic(kind: SyntheticKind, size: usize, seed: u64, output: &Path) -> Result<Outcome> {
    let s = synthetic::generate(kind, size, seed)?;
    prepare_output(output)?;
    s.model.save(output.join("model.json"))?;
    TrainingSample::save_all(&s.samples, output.join("samples.json"))?;
    if let Some(h) = &s.head {
        write_json(&output.join("head.json"), h)?;
    }
    let truth: Vec<TargetRow> = s
        .truth
        .iter()
        .enumerate()
        .map(|(target, &value)| TargetRow { target, value })
        .collect();
    write_csv(&output.join("truth.csv"), &truth)?;
    write_json(
        &output.join("summary.json"),
        &json!({
            "command": "gen-synthetic",
            "kind": kind.to_string(),
            "size": size,
            "seed": seed,
            "n_y": s.model.n_y,
            "potentials": s.model.potentials.len(),
            "constraints": s.model.constraints.len(),
            "samples": s.samples.len(),
            "components": s.components,
        }),
    )?;
    println!(
        "{kind}: {} targets, {} potentials, {} components",
        s.model.n_y,
        s.model.potentials.len(),
        s.components
    );
    Ok(Outcome::Converged)
}

#[derive(Serialize)]
struct CheckRow {
    instance: usize,
    epsilon: f64,
    bcd_objective: f64,
    oracle_objective: f64,
    abs_diff: f64,
    tolerance: f64,
    bcd_epochs: usize,
    result: String,
}

pub fn oracle_check(cfg: &ExperimentConfig, count: usize) -> Result<Outcome> {
    let instances = match &cfg.model {
        Some(_) => vec![(load_model(cfg)?, cfg.inference.epsilon)],
        None => synthetic::oracle_suite(count, cfg.seed),
    };
    let mut rows = Vec::with_capacity(instances.len());
    for (i, (model, eps)) in instances.iter().enumerate() {
        let lcqp = CompiledLcqp::compile(model, *eps)?;
        let b = lcqp.build_b(&vec![0.0; model.n_g])?;
        let bcd = cfg.inference.run(&lcqp, &b, None)?;
        let mut row = CheckRow {
            instance: i,
            epsilon: *eps,
            bcd_objective: bcd.objective,
            oracle_objective: f64::NAN,
            abs_diff: f64::NAN,
            tolerance: f64::NAN,
            bcd_epochs: bcd.stats.epochs,
            result: String::new(),
        };
        match active_set_oracle(&lcqp, &b, OracleLimits::default()) {
            Ok(o) => {
                row.oracle_objective = o.objective;
                row.abs_diff = (bcd.objective - o.objective).abs();
                row.tolerance = 1e-4 * (1.0 + o.objective.abs());
                row.result = if row.abs_diff <= row.tolerance { "PASS" } else { "FAIL" }.into();
            }
            Err(e @ (Error::OracleBudget(_) | Error::Infeasible(_))) => row.result = format!("SKIP ({e})"),
            Err(e) => return Err(e.into()),
        }
        let origin = match &cfg.model {
            Some(p) => p.display().to_string(),
            None => format!("suite seed {}", cfg.seed),
        };
        println!(
            "instance {i} ({origin}, eps {eps}): {} bcd {:.9} oracle {:.9} diff {:.3e}",
            row.result, row.bcd_objective, row.oracle_objective, row.abs_diff
        );
        rows.push(row);
    }
    let failed = rows.iter().filter(|r| r.result == "FAIL").count();
    let skipped = rows.iter().filter(|r| r.result.starts_with("SKIP")).count();
    prepare_output(&cfg.output)?;
    write_csv(&cfg.output.join("oracle_check.csv"), &rows)?;
    write_json(
        &cfg.output.join("summary.json"),
        &json!({
            "command": "oracle-check",
            "instances": rows.len(),
            "failed": failed,
            "skipped": skipped,
            "config": cfg,
        }),
    )?;
    println!("{} instances, {failed} failed, {skipped} skipped", rows.len());
    Ok(if failed == 0 { Outcome::Converged } else { Outcome::Failed })
}
