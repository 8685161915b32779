//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test -p hlmrf --test acceptance -- --nocapture` to see them.

use std::time::Instant;

use hlmrf::learn::{mirror_descent_step, moreau_envelope, Adam, AdamConfig, LearnConfig, Learner, LossKind};
use hlmrf::oracle::{active_set_oracle, OracleLimits};
use hlmrf::solver::{component_config, connected_components, solve_observed, Components};
use hlmrf::synthetic::{
    self, chain, collective_classification, many_components, perturbation_schedule, random_model, RandomSpec,
    ORACLE_SUITE_SEED,
};
use hlmrf::{
    solve, solve_variant, value_of, CompiledLcqp, DifferentiableHead, GroundedModel, InferenceConfig,
    SolverConfig, StopMode, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    // bypasses the test harness capture so the line shows for passing tests too
    let line = format!("criterion {n} ({name}): {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::Write::write_all(&mut std::io::stdout().lock(), line.as_bytes()).unwrap();
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

/// The 100-instance suite shared by the first three criteria.
fn oracle_suite() -> Vec<(GroundedModel, f64)> {
    synthetic::oracle_suite(100, ORACLE_SUITE_SEED)
}

fn config(delta: f64, seed: u64) -> SolverConfig {
    SolverConfig {
        delta,
        seed,
        max_epochs: 1_000_000,
        ..SolverConfig::default()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn inf_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn c01_oracle_equivalence() {
    let start = Instant::now();
    let mut worst_obj = 0.0f64;
    let mut worst_primal = 0.0f64;
    for (i, (model, eps)) in oracle_suite().into_iter().enumerate() {
        let lcqp = CompiledLcqp::compile(&model, eps).unwrap();
        let b = lcqp.build_b(&[]).unwrap();
        let oracle = active_set_oracle(&lcqp, &b, OracleLimits::default()).unwrap();
        let sol = solve(&lcqp, &b, &config(1e-6, i as u64), None).unwrap();
        let obj_err = (sol.objective - oracle.objective).abs() / oracle.objective.abs().max(1e-12);
        // absolute comparison when the optimum is (numerically) zero
        let obj_err = if oracle.objective.abs() < 1e-8 {
            (sol.objective - oracle.objective).abs()
        } else {
            obj_err
        };
        if obj_err > 1e-4 || inf_norm(&sol.nu, &oracle.nu_star) > 1e-3 {
            println!("  instance {i}: eps {eps} oracle {:.6e} bcd {:.6e} gap {:.2e} primal err {:.2e}", oracle.objective, sol.objective, sol.stats.final_gap, inf_norm(&sol.nu, &oracle.nu_star));
        }
        worst_obj = worst_obj.max(obj_err);
        worst_primal = worst_primal.max(inf_norm(&sol.nu, &oracle.nu_star));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "oracle equivalence",
        worst_obj <= 1e-4 && worst_primal <= 1e-3 && secs < 30.0,
        format!("worst objective rel err {worst_obj:.2e}, worst primal err {worst_primal:.2e}, {secs:.1}s"),
    );
}

#[test]
fn c02_descent_invariant() {
    let mut violations = 0usize;
    let mut steps = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut check = |lcqp: &CompiledLcqp, b: &[f64], seed: u64| {
        let mut prev = lcqp.dual_objective(&vec![0.0; lcqp.rows()], b).unwrap();
        solve_observed(lcqp, b, &config(1e-6, seed), None, |ev| {
            let h = lcqp.dual_objective(ev.mu, b).unwrap();
            worst = worst.max(h - prev);
            if h > prev + 1e-12 {
                violations += 1;
            }
            steps += 1;
            prev = h;
        })
        .unwrap();
    };
    for (i, (model, eps)) in oracle_suite().into_iter().enumerate() {
        let lcqp = CompiledLcqp::compile(&model, eps).unwrap();
        let b = lcqp.build_b(&[]).unwrap();
        check(&lcqp, &b, i as u64);
        // the per-component problems the connected-component variant runs
        let comps = Components::of_lcqp(&lcqp);
        for k in 0..comps.len() {
            let (sub, rows, _) = lcqp.restrict(&comps.constraints[k], &comps.potentials[k], &comps.vars[k]);
            let sub_b: Vec<f64> = rows.iter().map(|&r| b[r]).collect();
            check(&sub, &sub_b, component_config(&config(1e-6, i as u64), k, comps.len()).seed);
        }
    }
    report(
        2,
        "descent invariant",
        violations == 0 && steps > 0,
        format!("{violations} violations over {steps} block steps, largest increase {worst:.2e}"),
    );
}

#[test]
fn c03_gap_certificate() {
    let delta = 1e-6;
    let mut problems: Vec<(String, CompiledLcqp, Vec<f64>)> = Vec::new();
    for (i, (model, eps)) in oracle_suite().into_iter().enumerate() {
        let lcqp = CompiledLcqp::compile(&model, eps).unwrap();
        let b = lcqp.build_b(&[]).unwrap();
        problems.push((format!("random {i}"), lcqp, b));
    }
    for (name, synth) in [
        ("chain", chain(50, 1)),
        ("many-components", many_components(8, 4, 2)),
        ("collective-classification", collective_classification(20, 5, false, 3)),
    ] {
        let lcqp = CompiledLcqp::compile(&synth.model, 0.1).unwrap();
        let b = lcqp.build_b(&[]).unwrap();
        problems.push((name.to_string(), lcqp, b));
    }
    let mut failures = Vec::new();
    let mut worst_gap = 0.0f64;
    let mut worst_viol = 0.0f64;
    let mut worst_lf = 0.0f64;
    for (name, lcqp, b) in &problems {
        let cfg = config(delta, 7);
        let serial = solve_variant(Variant::Serial, lcqp, b, &cfg, 1, None).unwrap();
        for (variant, workers) in [(Variant::Serial, 1), (Variant::Cc, 2), (Variant::Lockfree, 4)] {
            let sol = solve_variant(variant, lcqp, b, &cfg, workers, None).unwrap();
            let viol = lcqp.max_violation(&sol.nu, b);
            worst_gap = worst_gap.max(sol.stats.final_gap);
            worst_viol = worst_viol.max(viol);
            if !sol.converged() || sol.stats.final_gap > delta || viol > 1e-6 {
                failures.push(format!("{name}/{variant}: gap {:.2e} viol {viol:.2e}", sol.stats.final_gap));
            }
            if variant == Variant::Lockfree {
                let r = if serial.objective.abs() < 1e-8 {
                    (sol.objective - serial.objective).abs()
                } else {
                    rel(sol.objective, serial.objective)
                };
                worst_lf = worst_lf.max(r);
                if r > 1e-3 {
                    failures.push(format!("{name}: lock-free objective rel err {r:.2e}"));
                }
            }
        }
    }
    report(
        3,
        "gap certificate",
        failures.is_empty(),
        format!(
            "worst gap {worst_gap:.2e}, worst violation {worst_viol:.2e}, worst lock-free rel err {worst_lf:.2e} {failures:?}"
        ),
    );
}

fn tight_inference(eps: f64) -> InferenceConfig {
    InferenceConfig {
        epsilon: eps,
        solver: config(1e-13, 0),
        ..InferenceConfig::default()
    }
}

fn oracle_value(lcqp: &CompiledLcqp, b: &[f64]) -> f64 {
    active_set_oracle(lcqp, b, OracleLimits::default()).unwrap().objective
}

#[test]
fn c04_value_function_gradients() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let inf = tight_inference(0.1);
    let h = 1e-5;
    let (mut worst_w, mut worst_b, mut worst_nn) = (0.0f64, 0.0f64, 0.0f64);
    let mut w_fail = 0;
    let mut unique_points = 0;
    for _ in 0..20 {
        let spec = RandomSpec {
            n_g: 4,
            ..RandomSpec::default()
        };
        let model = random_model(&spec, &mut rng);
        let head = DifferentiableHead::linear_sigmoid(3, 2, rng.gen());
        let x_nn: Vec<Vec<f64>> = (0..2).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let g = head.forward(&x_nn).unwrap();
        let lcqp = CompiledLcqp::compile(&model, 0.1).unwrap();
        let v = value_of(&lcqp, &model, &g, &inf, None).unwrap();

        // symbolic weights
        for k in 0..model.r {
            let mut wp = model.w_sy.clone();
            wp[k] += h;
            let mut wm = model.w_sy.clone();
            wm[k] -= h;
            let lp = lcqp.with_weights(&wp).unwrap();
            let lm = lcqp.with_weights(&wm).unwrap();
            let fd = (oracle_value(&lp, &lp.build_b(&g).unwrap()) - oracle_value(&lm, &lm.build_b(&g).unwrap())) / (2.0 * h);
            let err = (fd - v.phi[k]).abs() / v.phi[k].abs().max(1e-12);
            if (fd - v.phi[k]).abs() > 1e-4 * v.phi[k].abs() + 1e-8 {
                w_fail += 1;
            }
            if v.phi[k].abs() > 1e-8 {
                worst_w = worst_w.max(err);
            }
        }

        // constraint constants at unique-dual points
        let b = lcqp.build_b(&g).unwrap();
        let oracle = active_set_oracle(&lcqp, &b, OracleLimits::default()).unwrap();
        if oracle.unique_dual {
            unique_points += 1;
            for i in 0..lcqp.rows() {
                let hb = 1e-6;
                let mut bp = b.clone();
                bp[i] += hb;
                let mut bm = b.clone();
                bm[i] -= hb;
                let fd = (oracle_value(&lcqp, &bp) - oracle_value(&lcqp, &bm)) / (2.0 * hb);
                worst_b = worst_b.max((fd - v.mu[i]).abs());
            }
        }

        // neural weights through the head
        let grad = head.vjp(&x_nn, &v.g_cotangent).unwrap();
        for k in 0..head.n_weights() {
            let mut hp = head.clone();
            hp.weights[k] += h;
            let mut hm = head.clone();
            hm.weights[k] -= h;
            let vp = oracle_value(&lcqp, &lcqp.build_b(&hp.forward(&x_nn).unwrap()).unwrap());
            let vm = oracle_value(&lcqp, &lcqp.build_b(&hm.forward(&x_nn).unwrap()).unwrap());
            worst_nn = worst_nn.max(((vp - vm) / (2.0 * h) - grad[k]).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        "value-function gradients",
        w_fail == 0 && worst_b <= 1e-3 && worst_nn <= 1e-3 && unique_points > 0 && secs < 60.0,
        format!(
            "weights: {w_fail} misses, worst rel err {worst_w:.2e}; constants: worst err {worst_b:.2e} over {unique_points} unique-dual points; neural: worst err {worst_nn:.2e}; {secs:.1}s"
        ),
    );
}

#[test]
fn c05_moreau_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let inf = tight_inference(0.1);
    let (mut worst_prox, mut worst_min, mut worst_grad) = (0.0f64, 0.0f64, 0.0f64);
    let mut grad_fail = 0;
    for i in 0..20 {
        let rho = if i % 2 == 0 { 0.01 } else { 0.1 };
        let model = random_model(&RandomSpec::default(), &mut rng);
        let lcqp = CompiledLcqp::compile(&model, 0.1).unwrap();
        let v = value_of(&lcqp, &model, &[], &inf, None).unwrap();
        let at_min = moreau_envelope(&lcqp, &model, &v.y, &[], rho, &inf, None).unwrap();
        worst_prox = worst_prox.max(inf_norm(&at_min.prox, &v.y));
        worst_min = worst_min.max((at_min.value - v.value).abs());

        let y: Vec<f64> = (0..model.n_y).map(|_| rng.gen_range(0.0..1.0)).collect();
        let env = moreau_envelope(&lcqp, &model, &y, &[], rho, &inf, None).unwrap();
        let h = 1e-6;
        for j in 0..model.n_y {
            let mut yp = y.clone();
            yp[j] += h;
            let mut ym = y.clone();
            ym[j] -= h;
            let mp = moreau_envelope(&lcqp, &model, &yp, &[], rho, &inf, None).unwrap().value;
            let mm = moreau_envelope(&lcqp, &model, &ym, &[], rho, &inf, None).unwrap().value;
            let fd = (mp - mm) / (2.0 * h);
            let err = (fd - env.grad_y[j]).abs() / env.grad_y[j].abs().max(1.0);
            worst_grad = worst_grad.max(err);
            if err > 1e-4 {
                grad_fail += 1;
            }
        }
    }
    report(
        5,
        "moreau envelope",
        worst_prox <= 1e-4 && worst_min <= 1e-6 && grad_fail == 0,
        format!("prox err {worst_prox:.2e}, min err {worst_min:.2e}, gradient err {worst_grad:.2e}"),
    );
}

#[test]
fn c06_connected_components() {
    let mut details = Vec::new();
    let mut pass = true;
    for k in [2usize, 8, 32] {
        let synth = many_components(k, 4, 600 + k as u64);
        let comps = connected_components(&synth.model);
        let lcqp = CompiledLcqp::compile(&synth.model, 0.1).unwrap();
        let b = lcqp.build_b(&[]).unwrap();
        let cfg = config(1e-6, 11);
        let cc = solve_variant(Variant::Cc, &lcqp, &b, &cfg, 4, None).unwrap();
        let per = Components::of_lcqp(&lcqp);
        let mut identical = per.len() == k;
        for c in 0..per.len() {
            let (sub, rows, cols) = lcqp.restrict(&per.constraints[c], &per.potentials[c], &per.vars[c]);
            let sub_b: Vec<f64> = rows.iter().map(|&r| b[r]).collect();
            let sub_cfg = component_config(&cfg, c, per.len());
            let s = solve(&sub, &sub_b, &sub_cfg, None).unwrap();
            identical &= rows.iter().zip(&s.mu).all(|(&r, &v)| cc.mu[r].to_bits() == v.to_bits());
            identical &= cols.iter().zip(&s.nu).all(|(&c, &v)| cc.nu[c].to_bits() == v.to_bits());
        }
        pass &= identical && comps.len() == k && synth.components == k;
        details.push(format!("k={k}: {} components, identical={identical}", comps.len()));
    }
    report(6, "connected components", pass, details.join("; "));
}

#[test]
fn c07_warm_start_trend() {
    let start = Instant::now();
    let synth = collective_classification(20, 5, false, 77);
    let mut lcqp = CompiledLcqp::compile(&synth.model, 0.1).unwrap();
    let cfg = config(1e-6, 0);
    let b = lcqp.build_b(&[]).unwrap();
    let mut warm = solve(&lcqp, &b, &cfg, None).unwrap().mu;
    let (mut warm_total, mut cold_total, mut wins) = (0usize, 0usize, 0usize);
    let schedule = perturbation_schedule(&synth.model.w_sy, 50, 0.01, 707);
    let steps = schedule.len();
    for w in &schedule {
        lcqp.reweight(w).unwrap();
        let cold = solve(&lcqp, &b, &cfg, None).unwrap();
        let warmed = solve(&lcqp, &b, &cfg, Some(&warm)).unwrap();
        cold_total += cold.stats.epochs;
        warm_total += warmed.stats.epochs;
        if warmed.stats.epochs <= cold.stats.epochs {
            wins += 1;
        }
        warm = warmed.mu;
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = wins as f64 / steps as f64;
    report(
        7,
        "warm-start trend",
        frac >= 0.9 && (warm_total as f64) <= 0.5 * cold_total as f64 && secs < 120.0,
        format!("warm <= cold in {:.0}% of steps, cumulative warm {warm_total} vs cold {cold_total}, {secs:.1}s", 100.0 * frac),
    );
}

#[test]
fn c08_epsilon_tradeoff() {
    // Epochs are counted under the primal-movement stop. Under an absolute gap
    // threshold the starting gap grows with eps, so counts are also reported
    // for that mode but not asserted.
    let synth = collective_classification(20, 5, false, 88);
    let grid = [0.01, 0.1, 1.0, 10.0, 100.0];
    let count = |mode: StopMode| -> Vec<usize> {
        grid.iter()
            .map(|&eps| {
                let lcqp = CompiledLcqp::compile(&synth.model, eps).unwrap();
                let b = lcqp.build_b(&[]).unwrap();
                let cfg = SolverConfig {
                    stop_mode: mode,
                    ..config(1e-6, 0)
                };
                solve(&lcqp, &b, &cfg, None).unwrap().stats.epochs
            })
            .collect()
    };
    let movement = count(StopMode::PrimalMovement);
    let gap = count(StopMode::Gap);
    let monotone = movement.windows(2).all(|w| w[1] <= w[0]);
    report(
        8,
        "epsilon tradeoff",
        monotone,
        format!("epochs for eps 0.01..100: {movement:?} (gap stop: {gap:?})"),
    );
}

#[test]
fn c09_end_to_end_learning() {
    let start = Instant::now();
    let synth = collective_classification(20, 5, false, 0);
    let run = |loss: LossKind| {
        // the toy has a single sample, so it takes larger weight steps and
        // longer subproblems than the defaults
        let cfg = LearnConfig {
            loss,
            step_w_sy: 1e-2,
            max_inner: 30,
            ..LearnConfig::default()
        };
        let mut learner = Learner::new(&synth.model, &synth.samples, None, cfg).unwrap();
        learner.fit().unwrap()
    };
    let mse = run(LossKind::Mse);
    let energy = run(LossKind::Energy);
    let sp = run(LossKind::Sp);
    let secs = start.elapsed().as_secs_f64();
    let reduction = 1.0 - mse.last.train_mse / mse.initial.train_mse;
    let pass = reduction >= 0.5
        && mse.epochs <= 500
        && mse.last.violation <= 1e-2
        && energy.last.loss <= energy.initial.loss
        && sp.last.loss <= sp.initial.loss
        && secs < 180.0;
    report(
        9,
        "end-to-end learning",
        pass,
        format!(
            "mse {:.4} -> {:.4} ({:.0}% reduction, {} epochs, violation {:.2e}); energy {:.4} -> {:.4}; sp {:.4} -> {:.4}; {secs:.1}s",
            mse.initial.train_mse,
            mse.last.train_mse,
            100.0 * reduction,
            mse.epochs,
            mse.last.violation,
            energy.initial.loss,
            energy.last.loss,
            sp.initial.loss,
            sp.last.loss
        ),
    );
}

#[test]
fn c10_optimizers() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut w = vec![0.2, 0.3, 0.1, 0.4];
    let mut drift = 0.0f64;
    for _ in 0..10_000 {
        let g: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        w = mirror_descent_step(&w, &g, 0.05).unwrap();
        drift = drift.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    let positive = w.iter().all(|&v| v > 0.0);

    let ex = mirror_descent_step(&[0.5, 0.5], &[1.0, 0.0], std::f64::consts::LN_2).unwrap();
    let example_err = (ex[0] - 1.0 / 3.0).abs().max((ex[1] - 2.0 / 3.0).abs());

    let adam_run = || {
        let mut adam = Adam::new(3, 1e-2, AdamConfig::default());
        let mut w = vec![0.5, -0.2, 1.0];
        for t in 0..100 {
            let g: Vec<f64> = w.iter().map(|v| 2.0 * v + (t as f64).sin()).collect();
            adam.step(&mut w, &g).unwrap();
        }
        w
    };
    let (a, b) = (adam_run(), adam_run());
    let deterministic = a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    report(
        10,
        "optimizers",
        drift <= 1e-9 && positive && example_err <= 1e-12 && deterministic,
        format!("simplex drift {drift:.2e}, example err {example_err:.2e}, adam deterministic={deterministic}"),
    );
}
