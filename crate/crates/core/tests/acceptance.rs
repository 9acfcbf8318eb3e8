//! One line per acceptance criterion, then a non-zero exit if any line failed.
//! Built without the libtest harness so the report is always printed.

use std::fs;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use survival_rl::em::{e_step, run_em, DEFAULT_TOL};
use survival_rl::fixtures::{chain2, random_deterministic_mdp, random_mdp, random_policy};
use survival_rl::gridworld::{
    f_battery, reset, step, Action, GridState, LastEat, BATTERY_MAX, POISON_DRIFT_PROB,
};
use survival_rl::harness::{
    checkpoint_path, evaluate, run_random_baseline, run_training, ExperimentConfig, Trainer,
    METRICS_FILE,
};
use survival_rl::identities::{brute_force_optimum, oracle_survival_and_objective};
use survival_rl::mdp::TimeIndexedPolicy;
use survival_rl::survival::{
    average_reward_objective, free_energy_breakdown, multi_step_survival_prob, neg_free_energy_dp,
};

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn record(
        &mut self,
        id: u32,
        name: &str,
        budget: Duration,
        check: impl FnOnce() -> Result<String, String>,
    ) {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if elapsed > budget {
            passed = false;
            detail = format!("{detail}; over time budget {budget:?}");
        }
        let line = format!(
            "{} [{id}] {name}: {detail} ({:.2}s)",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.lines.push((passed, line));
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: survival_rl::Error) -> String {
    e.to_string()
}

fn decomposition() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let models = [chain2(), random_mdp(3, 2, &mut rng)];
    let (mut worst_gap, mut min_kl) = (0.0f64, f64::INFINITY);
    for model in &models {
        for horizon in 1..=4 {
            for _ in 0..20 {
                let q = random_policy(model.n_states, model.n_actions, horizon, &mut rng);
                let p = random_policy(model.n_states, model.n_actions, horizon, &mut rng);
                let fe = free_energy_breakdown(model, &q, &p, horizon).map_err(err)?;
                worst_gap =
                    worst_gap.max((fe.log_likelihood - fe.neg_free_energy - fe.kl_direct).abs());
                min_kl = min_kl.min(fe.kl_direct);
            }
        }
    }
    ensure(worst_gap < 1e-9 && min_kl >= -1e-12, || {
        format!("max |logP - (-F + KL)| = {worst_gap:.2e}, min KL = {min_kl:.2e}")
    })?;
    Ok(format!("max gap {worst_gap:.2e}, min KL {min_kl:.2e}"))
}

fn post_m_step_bound() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let model = if i % 2 == 0 {
            chain2()
        } else {
            random_mdp(3, 2, &mut rng)
        };
        let horizon = 1 + i % 4;
        let pi = random_policy(model.n_states, model.n_actions, horizon, &mut rng);
        let neg_f = free_energy_breakdown(&model, &pi, &pi, horizon)
            .map_err(err)?
            .neg_free_energy;
        let j = average_reward_objective(&model, &pi, horizon).map_err(err)?;
        worst = worst.max((neg_f - horizon as f64 * j).abs());
    }
    ensure(worst < 1e-9, || format!("max |-F - T*J| = {worst:.2e}"))?;
    Ok(format!("max |-F - T*J| {worst:.2e}"))
}

fn em_chain2() -> Result<String, String> {
    let model = chain2();
    let init = TimeIndexedPolicy::uniform(2, 2, 2);
    let trace = run_em(&model, &init, 2, 50, DEFAULT_TOL).map_err(err)?;
    let mut prev = trace.initial_log_likelihood;
    for (k, it) in trace.iterations.iter().enumerate() {
        ensure(it.log_likelihood >= prev - 1e-10, || {
            format!("decrease at iteration {k}")
        })?;
        prev = it.log_likelihood;
    }
    let best = brute_force_optimum(&model, 2).map_err(err)?;
    let last = trace.final_log_likelihood();
    ensure(
        (last - 0.81f64.ln()).abs() < 1e-6 && (last - best).abs() < 1e-6,
        || {
            format!(
                "final {last:.9} vs ln 0.81 {:.9}, brute force {best:.9}",
                0.81f64.ln()
            )
        },
    )?;
    Ok(format!(
        "{} iterations, final log P {last:.9}",
        trace.iterations.len()
    ))
}

fn e_step_exactness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut models = vec![chain2()];
    models.extend((0..10).map(|_| random_deterministic_mdp(3, 2, &mut rng)));
    let mut worst = 0.0f64;
    for model in &models {
        for horizon in 1..=4 {
            let prior = random_policy(model.n_states, model.n_actions, horizon, &mut rng);
            let post = e_step(model, &prior, horizon).map_err(err)?;
            let fe = free_energy_breakdown(model, &post, &prior, horizon).map_err(err)?;
            worst = worst.max(fe.kl_direct.abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max KL after E-step {worst:.2e}"))?;
    Ok(format!(
        "max KL after E-step {worst:.2e} (deterministic dynamics)"
    ))
}

fn dp_vs_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for i in 0..30 {
        let model = if i == 0 {
            chain2()
        } else {
            random_mdp(3, 2, &mut rng)
        };
        for horizon in 1..=6 {
            let pi = random_policy(model.n_states, model.n_actions, horizon, &mut rng);
            let (prob, j) = oracle_survival_and_objective(&model, &pi, horizon).map_err(err)?;
            let dp_prob = multi_step_survival_prob(&model, &pi, horizon).map_err(err)?;
            let dp_j = average_reward_objective(&model, &pi, horizon).map_err(err)?;
            worst = worst.max((dp_prob - prob).abs()).max((dp_j - j).abs());
            if horizon <= 4 {
                let fe = free_energy_breakdown(&model, &pi, &pi, horizon).map_err(err)?;
                let dp_f = neg_free_energy_dp(&model, &pi, &pi, horizon).map_err(err)?;
                worst = worst.max((dp_f - fe.neg_free_energy).abs());
            }
        }
    }
    ensure(worst < 1e-10, || format!("max |DP - oracle| = {worst:.2e}"))?;
    Ok(format!("max |DP - oracle| {worst:.2e}"))
}

fn random_baseline() -> Result<String, String> {
    let cfg = ExperimentConfig {
        master_seed: 1,
        eval_episodes: 1000,
        ..ExperimentConfig::default()
    };
    let stats = run_random_baseline(&cfg).map_err(err)?;
    ensure(stats.median_survival_steps < 25.0, || {
        format!("median survival {}", stats.median_survival_steps)
    })?;
    Ok(format!("median survival {}", stats.median_survival_steps))
}

fn trained_agent() -> Result<String, String> {
    let cfg = ExperimentConfig {
        master_seed: 1,
        ..ExperimentConfig::default()
    };
    let baseline = run_random_baseline(&cfg).map_err(err)?;
    let mut trainer = Trainer::new(cfg.clone()).map_err(err)?;
    trainer.train_episodes(cfg.n_train_episodes).map_err(err)?;
    let last_block = cfg.n_train_episodes / cfg.eval_every;
    let mut trained = evaluate(trainer.q(), &cfg, last_block).map_err(err)?;
    trained.episodes_trained = trainer.episodes_trained();
    let battery = trained
        .mean_battery_at_death
        .ok_or("every evaluation episode hit the cap")?;
    let summary = format!(
        "median survival {} vs baseline {}, median poison {}, mean battery at death {battery:.1}, \
         median food {} vs {}",
        trained.median_survival_steps,
        baseline.median_survival_steps,
        trained.median_poison_eaten,
        trained.median_food_eaten,
        baseline.median_food_eaten
    );
    ensure(
        trained.median_survival_steps >= 4.0 * baseline.median_survival_steps
            && trained.median_poison_eaten == 0.0
            && (battery - 60.0).abs() <= 15.0
            && trained.median_food_eaten > baseline.median_food_eaten,
        || summary.clone(),
    )?;
    Ok(summary)
}

fn within_three_sigma(hits: u64, n: u64, p: f64) -> bool {
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    (hits as f64 - n as f64 * p).abs() <= 3.0 * sigma
}

fn environment() -> Result<String, String> {
    ensure(f_battery(60.0).map_err(err)? == 1.0, || "f(60) != 1".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let at_50 = GridState {
        agent_pos: 4,
        food_pos: 0,
        poison_pos: 8,
        battery: 50.0,
        poison_flag: false,
        last_eat: LastEat::Nothing,
    };
    let n = 100_000;
    let deaths = (0..n)
        .filter(|_| !step(&at_50, Action::Up, &mut rng).alive)
        .count() as u64;
    let p_death = 1.0 - (-0.1f64).exp();
    ensure(within_three_sigma(deaths, n, p_death), || {
        format!("{deaths} deaths in {n}")
    })?;

    let (mut state, _) = reset(&mut rng);
    let mut drifts = 0;
    for _ in 0..n {
        let out = step(&state, Action::ALL[rng.gen_range(0..4)], &mut rng);
        drifts += out.poison_drifted as u64;
        state = out.next_state;
        state.battery = 60.0;
    }
    ensure(within_three_sigma(drifts, n, POISON_DRIFT_PROB), || {
        format!("{drifts} drifts in {n}")
    })?;

    let (mut state, _) = reset(&mut rng);
    for _ in 0..1_000_000 {
        let out = step(&state, Action::ALL[rng.gen_range(0..5)], &mut rng);
        let b = out.next_state.battery;
        ensure((0.0..=BATTERY_MAX).contains(&b), || {
            format!("battery {b} out of range")
        })?;
        state = if out.alive {
            out.next_state
        } else {
            reset(&mut rng).0
        };
    }
    Ok(format!(
        "{deaths} deaths and {drifts} drifts in {n}, battery in range over 1e6 steps"
    ))
}

fn reproducibility() -> Result<String, String> {
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    for dir in &dirs {
        let cfg = ExperimentConfig {
            master_seed: 2024,
            n_train_episodes: 2000,
            output_dir: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        run_training(&cfg).map_err(err)?;
    }
    let read = |p: std::path::PathBuf| fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    let mut files = vec![METRICS_FILE.to_string()];
    files.extend((1..=2).map(|b| {
        checkpoint_path(std::path::Path::new(""), b)
            .to_string_lossy()
            .into_owned()
    }));
    for name in &files {
        let (a, b) = (
            read(dirs[0].path().join(name))?,
            read(dirs[1].path().join(name))?,
        );
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical", files.len()))
}

fn main() {
    let mut report = Report { lines: Vec::new() };
    let s = Duration::from_secs;
    report.record(1, "free-energy decomposition", s(1), decomposition);
    report.record(2, "post-M-step bound equals T*J", s(1), post_m_step_bound);
    report.record(3, "EM on the two-state chain", s(1), em_chain2);
    report.record(4, "E-step exactness", s(1), e_step_exactness);
    report.record(5, "forward DP matches enumeration", s(5), dp_vs_oracle);
    report.record(6, "random baseline dies young", s(10), random_baseline);
    report.record(7, "trained agent beats baseline", s(600), trained_agent);
    report.record(8, "environment micro-checks", s(60), environment);
    report.record(9, "seeded runs are reproducible", s(120), reproducibility);

    let failed = report.lines.iter().filter(|(ok, _)| !ok).count();
    println!("{} criteria, {failed} failed", report.lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
