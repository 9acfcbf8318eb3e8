//! Identity suite behind `oracle-check`: every relation between the
//! survival likelihood, the free energy, `J_T` and the EM iterates, checked
//! on built-in fixtures against exhaustive trajectory enumeration.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::em::{e_step, run_em, DEFAULT_TOL};
use crate::error::Result;
use crate::fixtures::{
    all_deterministic_policies, chain2, random_deterministic_mdp, random_mdp, random_policy,
};
use crate::mdp::{enumerate_trajectories, FiniteMdp, TimeIndexedPolicy};
use crate::survival::{
    average_reward_objective, free_energy_breakdown, log_multi_step_survival_prob,
    multi_step_survival_prob, survival_log_likelihood,
};

pub const DECOMPOSITION_TOL: f64 = 1e-9;
pub const KL_FLOOR: f64 = -1e-12;
pub const DP_ORACLE_TOL: f64 = 1e-10;
pub const MONOTONE_SLACK: f64 = 1e-10;
pub const EM_OPTIMUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation, or a short description.
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict}  {:<28} {}", self.name, self.detail)
    }
}

/// Enumeration-based `P(A_bar_T | pi)` and `J_T`.
pub fn oracle_survival_and_objective(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Result<(f64, f64)> {
    let mut prob = 0.0;
    let mut objective = 0.0;
    for (traj, p) in enumerate_trajectories(model, policy, horizon)? {
        let surv: f64 = traj.states[..horizon]
            .iter()
            .map(|&s| model.survival[s])
            .product();
        prob += p * surv;
        objective += p * survival_log_likelihood(model, &traj)?;
    }
    Ok((prob, objective / horizon as f64))
}

/// Best `log P(A_bar_T | pi)` over all deterministic time-indexed policies.
pub fn brute_force_optimum(model: &FiniteMdp, horizon: usize) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for pi in all_deterministic_policies(model.n_states, model.n_actions, horizon) {
        let (p, _) = oracle_survival_and_objective(model, &pi, horizon)?;
        best = best.max(p.ln());
    }
    Ok(best)
}

fn outcome(name: &'static str, worst: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= tol,
        detail: format!("max |err| = {worst:.3e} (tol {tol:.0e})"),
    }
}

pub fn stochastic_fixtures() -> Vec<(&'static str, FiniteMdp)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    vec![
        ("chain2", chain2()),
        ("random-3x2", random_mdp(3, 2, &mut rng)),
        ("random-4x2", random_mdp(4, 2, &mut rng)),
        ("random-2x3", random_mdp(2, 3, &mut rng)),
    ]
}

pub fn deterministic_fixtures() -> Vec<(&'static str, FiniteMdp)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xde7);
    vec![
        ("chain2", chain2()),
        ("det-3x2", random_deterministic_mdp(3, 2, &mut rng)),
        ("det-4x2", random_deterministic_mdp(4, 2, &mut rng)),
        ("det-3x3", random_deterministic_mdp(3, 3, &mut rng)),
    ]
}

/// `log P = -F + KL`, `KL >= 0`, residual KL equals direct KL.
pub fn check_decomposition(rng: &mut ChaCha8Rng) -> Result<Vec<CheckOutcome>> {
    let mut worst_identity: f64 = 0.0;
    let mut worst_direct: f64 = 0.0;
    let mut min_kl = f64::INFINITY;
    for model in [chain2(), random_mdp(3, 2, rng)] {
        for horizon in 1..=4 {
            for _ in 0..20 {
                let q = random_policy(model.n_states, model.n_actions, horizon, rng);
                let p = random_policy(model.n_states, model.n_actions, horizon, rng);
                let fe = free_energy_breakdown(&model, &q, &p, horizon)?;
                let (prob, _) = oracle_survival_and_objective(&model, &p, horizon)?;
                worst_identity =
                    worst_identity.max((prob.ln() - (fe.neg_free_energy + fe.kl_direct)).abs());
                worst_direct = worst_direct.max((fe.kl_to_posterior - fe.kl_direct).abs());
                min_kl = min_kl.min(fe.kl_direct).min(fe.kl_to_posterior);
            }
        }
    }
    Ok(vec![
        outcome(
            "decomposition log P = -F+KL",
            worst_identity,
            DECOMPOSITION_TOL,
        ),
        outcome("residual KL = direct KL", worst_direct, DECOMPOSITION_TOL),
        CheckOutcome {
            name: "KL non-negative",
            passed: min_kl >= KL_FLOOR,
            detail: format!("min KL = {min_kl:.3e} (floor {KL_FLOOR:.0e})"),
        },
    ])
}

/// `-F(theta, theta) = T J_T(theta)`.
pub fn check_post_m_step(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for model in [chain2(), random_mdp(3, 2, rng)] {
        for _ in 0..20 {
            for horizon in 1..=4 {
                let pi = random_policy(model.n_states, model.n_actions, horizon, rng);
                let fe = free_energy_breakdown(&model, &pi, &pi, horizon)?;
                let j = average_reward_objective(&model, &pi, horizon)?;
                worst = worst.max((fe.neg_free_energy - horizon as f64 * j).abs());
            }
        }
    }
    Ok(outcome("-F(theta,theta) = T J_T", worst, DECOMPOSITION_TOL))
}

/// CHAIN2, T = 2, uniform start: monotone, converged within 50 iterations,
/// at the brute-force optimum.
pub fn check_em_chain2() -> Result<CheckOutcome> {
    let model = chain2();
    let horizon = 2;
    let trace = run_em(
        &model,
        &TimeIndexedPolicy::uniform(2, 2, horizon),
        horizon,
        50,
        DEFAULT_TOL,
    )?;
    let mut prev = trace.initial_log_likelihood;
    let mut worst_drop: f64 = 0.0;
    for it in &trace.iterations {
        worst_drop = worst_drop.max(prev - it.log_likelihood);
        prev = it.log_likelihood;
    }
    let optimum = brute_force_optimum(&model, horizon)?;
    let gap = (trace.final_log_likelihood() - optimum).abs();
    let target_gap = (optimum - 0.81f64.ln()).abs();
    let passed = worst_drop <= MONOTONE_SLACK
        && trace.converged
        && gap <= EM_OPTIMUM_TOL
        && target_gap <= EM_OPTIMUM_TOL;
    Ok(CheckOutcome {
        name: "EM on CHAIN2",
        passed,
        detail: format!(
            "{} iterations, converged = {}, gap to optimum = {gap:.3e}, max drop = {worst_drop:.3e}",
            trace.iterations.len(),
            trace.converged
        ),
    })
}

/// EM monotonicity on stochastic fixtures and global optimality on CHAIN2.
pub fn check_em_monotone_and_global(rng: &mut ChaCha8Rng) -> Result<Vec<CheckOutcome>> {
    let mut worst_drop: f64 = 0.0;
    let mut worst_post_m: f64 = 0.0;
    for (_, model) in stochastic_fixtures()
        .into_iter()
        .chain(deterministic_fixtures())
    {
        for horizon in 1..=4 {
            let init = random_policy(model.n_states, model.n_actions, horizon, rng);
            let trace = run_em(&model, &init, horizon, 40, DEFAULT_TOL)?;
            let mut prev = trace.initial_log_likelihood;
            for it in &trace.iterations {
                worst_drop = worst_drop.max(prev - it.log_likelihood);
                prev = it.log_likelihood;
                let fe = free_energy_breakdown(&model, &it.policy, &it.policy, horizon)?;
                let j = average_reward_objective(&model, &it.policy, horizon)?;
                worst_post_m = worst_post_m
                    .max((fe.neg_free_energy - horizon as f64 * j).abs())
                    .max((it.neg_free_energy_after_m - fe.neg_free_energy).abs());
            }
        }
    }
    let model = chain2();
    let mut worst_gap: f64 = 0.0;
    for horizon in 1..=4 {
        let trace = run_em(
            &model,
            &TimeIndexedPolicy::uniform(2, 2, horizon),
            horizon,
            1000,
            DEFAULT_TOL,
        )?;
        let optimum = brute_force_optimum(&model, horizon)?;
        worst_gap = worst_gap.max((trace.final_log_likelihood() - optimum).abs());
    }
    Ok(vec![
        outcome(
            "EM log-likelihood monotone",
            worst_drop.max(0.0),
            MONOTONE_SLACK,
        ),
        outcome("EM post-M-step identity", worst_post_m, DECOMPOSITION_TOL),
        outcome("EM global optimum CHAIN2 T<=4", worst_gap, EM_OPTIMUM_TOL),
    ])
}

/// `KL(Q(e_step(pi)) || P(.|A, pi)) = 0` on deterministic-dynamics fixtures.
pub fn check_e_step_exactness(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for (_, model) in deterministic_fixtures() {
        for horizon in 1..=4 {
            for _ in 0..5 {
                let prior = random_policy(model.n_states, model.n_actions, horizon, rng);
                let post = e_step(&model, &prior, horizon)?;
                let fe = free_energy_breakdown(&model, &post, &prior, horizon)?;
                worst = worst.max(fe.kl_direct.abs()).max(fe.kl_to_posterior.abs());
            }
        }
    }
    Ok(outcome("E-step exactness", worst, DECOMPOSITION_TOL))
}

/// Forward DP against enumeration for `T <= 6`.
pub fn check_dp_vs_oracle(rng: &mut ChaCha8Rng) -> Result<Vec<CheckOutcome>> {
    let mut worst_prob: f64 = 0.0;
    let mut worst_j: f64 = 0.0;
    for (_, model) in stochastic_fixtures()
        .into_iter()
        .chain(deterministic_fixtures())
    {
        for horizon in 1..=6 {
            let pi = random_policy(model.n_states, model.n_actions, horizon, rng);
            let (prob, j) = oracle_survival_and_objective(&model, &pi, horizon)?;
            worst_prob =
                worst_prob.max((multi_step_survival_prob(&model, &pi, horizon)? - prob).abs());
            worst_prob = worst_prob
                .max((log_multi_step_survival_prob(&model, &pi, horizon)?.exp() - prob).abs());
            worst_j = worst_j.max((average_reward_objective(&model, &pi, horizon)? - j).abs());
        }
    }
    Ok(vec![
        outcome("DP survival prob = oracle", worst_prob, DP_ORACLE_TOL),
        outcome("DP J_T = oracle", worst_j, DP_ORACLE_TOL),
    ])
}

/// Runs every identity check on the built-in fixtures.
pub fn run_identity_suite() -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut out = check_decomposition(&mut rng)?;
    out.push(check_post_m_step(&mut rng)?);
    out.push(check_em_chain2()?);
    out.extend(check_em_monotone_and_global(&mut rng)?);
    out.push(check_e_step_exactness(&mut rng)?);
    out.extend(check_dp_vs_oracle(&mut rng)?);
    Ok(out)
}
