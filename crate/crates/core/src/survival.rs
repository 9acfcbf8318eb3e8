//! Survival-probability quantities on finite MDPs: the multi-step survival
//! probability, the per-step survival reward, the average-reward objective
//! `J_T`, and the free-energy decomposition
//! `log P(A|pi) = -F(Q, P) + KL(Q || P(.|A, pi))`.
//!
//! `log P` and `J_T` are computed by forward dynamic programming in the log
//! domain. `-F` is computed by explicit summation over enumerated
//! trajectories, so the two sides of every identity come from different
//! code paths.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mdp::{
    enumerate_trajectories, log_sum_exp, safe_ln, trajectory_log_prob, FiniteMdp, StateTrajectory,
    TimeIndexedPolicy, LOG_ZERO,
};

/// The two terms of the free-energy decomposition, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergyBreakdown {
    /// `-F(Q, P(.|pi))`, summed over trajectories of `Q`.
    pub neg_free_energy: f64,
    /// `log P(A_bar_T | pi)` from the forward recursion.
    pub log_likelihood: f64,
    /// `log_likelihood - neg_free_energy`.
    pub kl_to_posterior: f64,
    /// `KL(Q || P(.|A_bar_T, pi))` evaluated against the enumerated posterior.
    pub kl_direct: f64,
}

/// `sum_{t<T} log P(A_{t+1} = 1 | s_t)` along a trajectory.
pub fn survival_log_likelihood(model: &FiniteMdp, traj: &StateTrajectory) -> Result<f64> {
    traj.check(model)?;
    Ok(traj.states[..traj.horizon()]
        .iter()
        .map(|&s| model.log_survival(s))
        .sum())
}

/// Survival reward `r = ln p` for a temporal survival probability `p`.
pub fn survival_reward(p_survive: f64) -> Result<f64> {
    if !(p_survive > 0.0 && p_survive <= 1.0) {
        return Err(Error::InvalidProbability(p_survive));
    }
    Ok(p_survive.ln())
}

fn check_inputs(model: &FiniteMdp, policy: &TimeIndexedPolicy, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    model.ensure_valid()?;
    policy.check(model, horizon)
}

/// `log P(A_bar_T | pi)` by the scaled forward recursion over
/// `alpha_t(s) = P(s_t = s, alive through t)`.
pub fn log_multi_step_survival_prob(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Result<f64> {
    check_inputs(model, policy, horizon)?;
    let ns = model.n_states;
    let mut log_alpha: Vec<f64> = model.initial_dist.iter().map(|&p| safe_ln(p)).collect();
    let mut next = vec![LOG_ZERO; ns];
    for t in 0..horizon {
        let table = policy.at(t);
        for (sp, slot) in next.iter_mut().enumerate() {
            let terms = (0..ns).flat_map(|s| {
                let w = log_alpha[s] + model.log_survival(s);
                (0..model.n_actions).map(move |a| {
                    w + safe_ln(table.prob(s, a)) + safe_ln(model.transition[s][a][sp])
                })
            });
            *slot = log_sum_exp(terms);
        }
        std::mem::swap(&mut log_alpha, &mut next);
    }
    Ok(log_sum_exp(log_alpha.iter().copied()))
}

/// `P(A_bar_T | pi)`, the probability of staying alive for `horizon` steps.
pub fn multi_step_survival_prob(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Result<f64> {
    log_multi_step_survival_prob(model, policy, horizon).map(f64::exp)
}

/// Unconditioned state occupancies `P(s_t = s)` for `t = 0..T-1`.
pub(crate) fn state_occupancy(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Vec<Vec<f64>> {
    let ns = model.n_states;
    let mut out = Vec::with_capacity(horizon);
    let mut d = model.initial_dist.clone();
    for t in 0..horizon {
        let table = policy.at(t);
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if d[s] == 0.0 {
                continue;
            }
            for a in 0..model.n_actions {
                let w = d[s] * table.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (sp, &p) in model.transition[s][a].iter().enumerate() {
                    next[sp] += w * p;
                }
            }
        }
        out.push(std::mem::replace(&mut d, next));
    }
    out
}

/// `J_T(pi) = (1/T) E_pi[ sum_{t<T} log P(A_{t+1} = 1 | s_t) ]`.
pub fn average_reward_objective(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Result<f64> {
    check_inputs(model, policy, horizon)?;
    let total: f64 = state_occupancy(model, policy, horizon)
        .iter()
        .map(|d| {
            d.iter()
                .enumerate()
                .map(|(s, &p)| p * model.log_survival(s))
                .sum::<f64>()
        })
        .sum();
    Ok(total / horizon as f64)
}

/// `-F(Q, P)` by forward recursion over the occupancies of `Q`: the
/// expected survival log-likelihood minus the per-step policy log-ratio.
/// Initial-state and transition factors cancel in `log Q/P`.
pub fn neg_free_energy_dp(
    model: &FiniteMdp,
    q_policy: &TimeIndexedPolicy,
    p_policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Result<f64> {
    check_inputs(model, q_policy, horizon)?;
    p_policy.check(model, horizon)?;
    let mut total = 0.0;
    for (t, d) in state_occupancy(model, q_policy, horizon).iter().enumerate() {
        for (s, &ds) in d.iter().enumerate() {
            if ds == 0.0 {
                continue;
            }
            total += ds * model.log_survival(s);
            for a in 0..model.n_actions {
                let q = q_policy.at(t).prob(s, a);
                if q == 0.0 {
                    continue;
                }
                let p = p_policy.at(t).prob(s, a);
                if p == 0.0 {
                    return Err(Error::KlUndefined);
                }
                total -= ds * q * (q.ln() - p.ln());
            }
        }
    }
    Ok(total)
}

/// Decomposes `log P(A_bar_T | p_policy)` into `-F(Q, P)` and the KL gap,
/// where `Q` is the trajectory distribution under `q_policy`.
///
/// Oracle-grade: both `-F` and the direct KL enumerate trajectories, so the
/// instance must pass the enumeration size guard.
pub fn free_energy_breakdown(
    model: &FiniteMdp,
    q_policy: &TimeIndexedPolicy,
    p_policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Result<FreeEnergyBreakdown> {
    p_policy.check(model, horizon)?;
    let q_trajs = enumerate_trajectories(model, q_policy, horizon)?;

    let mut neg_free_energy = 0.0;
    let mut log_ratios = Vec::with_capacity(q_trajs.len());
    for (traj, q_prob) in &q_trajs {
        let log_q = trajectory_log_prob(model, q_policy, traj)?;
        let log_p = trajectory_log_prob(model, p_policy, traj)?;
        if log_p == LOG_ZERO {
            return Err(Error::KlUndefined);
        }
        let ll = survival_log_likelihood(model, traj)?;
        neg_free_energy += q_prob * (ll - (log_q - log_p));
        log_ratios.push(log_q);
    }
    let log_likelihood = log_multi_step_survival_prob(model, p_policy, horizon)?;

    // posterior from enumeration alone: P(tau|pi) P(A|tau) / Z
    let joint: HashMap<StateTrajectory, f64> = enumerate_trajectories(model, p_policy, horizon)?
        .into_iter()
        .map(|(traj, p)| {
            let surv: f64 = traj.states[..horizon]
                .iter()
                .map(|&s| model.survival[s])
                .product();
            (traj, p * surv)
        })
        .collect();
    let z: f64 = joint.values().sum();
    let mut kl_direct = 0.0;
    for ((traj, q_prob), log_q) in q_trajs.iter().zip(&log_ratios) {
        let post = joint.get(traj).copied().unwrap_or(0.0) / z;
        if post == 0.0 {
            return Err(Error::KlUndefined);
        }
        kl_direct += q_prob * (log_q - post.ln());
    }

    Ok(FreeEnergyBreakdown {
        neg_free_energy,
        log_likelihood,
        kl_to_posterior: log_likelihood - neg_free_energy,
        kl_direct,
    })
}
