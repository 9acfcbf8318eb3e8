//! EM maximization of `log P(A_bar_T | pi)` over time-indexed Markov
//! policies on a known finite MDP.
//!
//! The E-step conditions the prior trajectory distribution on survival
//! through backward messages
//!
//! ```text
//! v_T(s)   = 1
//! q_t(s,a) = sum_s' P(s'|s,a) v_{t+1}(s')
//! v_t(s)   = P(A|s) sum_a pi_t(a|s) q_t(s,a)
//! ```
//!
//! and reads off the posterior action conditionals
//! `pi_Q,t(a|s) ∝ pi_t(a|s) q_t(s,a)`. The M-step adopts them as the new
//! policy. Messages are stored as logarithms.

use crate::error::{Error, Result};
use crate::mdp::{log_sum_exp, safe_ln, FiniteMdp, PolicyTable, TimeIndexedPolicy};
use crate::survival::{log_multi_step_survival_prob, neg_free_energy_dp, state_occupancy};

pub const DEFAULT_MAX_ITERS: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Backward survival messages, stored as natural logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardMessages {
    /// `ln v_t(s)` for `t = 0..=T`.
    pub log_state_values: Vec<Vec<f64>>,
    /// `ln q_t(s, a)` for `t = 0..T`.
    pub log_action_values: Vec<Vec<Vec<f64>>>,
}

impl BackwardMessages {
    pub fn horizon(&self) -> usize {
        self.log_action_values.len()
    }

    /// Probability of surviving steps `t..T` from `s` at time `t`.
    pub fn state_value(&self, t: usize, s: usize) -> f64 {
        self.log_state_values[t][s].exp()
    }

    pub fn action_value(&self, t: usize, s: usize, a: usize) -> f64 {
        self.log_action_values[t][s][a].exp()
    }

    /// `ln sum_s P(s_0 = s) v_0(s)`, which equals `log P(A_bar_T | pi)`.
    pub fn log_survival_prob(&self, model: &FiniteMdp) -> f64 {
        log_sum_exp(
            model
                .initial_dist
                .iter()
                .zip(&self.log_state_values[0])
                .map(|(&p, &v)| safe_ln(p) + v),
        )
    }
}

pub fn backward_messages(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Result<BackwardMessages> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    model.ensure_valid()?;
    policy.check(model, horizon)?;
    let (ns, na) = (model.n_states, model.n_actions);

    let mut log_v = vec![vec![0.0; ns]; horizon + 1];
    let mut log_q = vec![vec![vec![0.0; na]; ns]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            for a in 0..na {
                log_q[t][s][a] = log_sum_exp(
                    model.transition[s][a]
                        .iter()
                        .zip(&log_v[t + 1])
                        .map(|(&p, &v)| safe_ln(p) + v),
                );
            }
            let table = policy.at(t);
            log_v[t][s] = model.log_survival(s)
                + log_sum_exp((0..na).map(|a| safe_ln(table.prob(s, a)) + log_q[t][s][a]));
        }
    }
    Ok(BackwardMessages {
        log_state_values: log_v,
        log_action_values: log_q,
    })
}

/// Posterior time-indexed policy given survival through `horizon`.
///
/// Rows of states unreachable under `policy` at step `t` keep the prior row.
pub fn e_step(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Result<TimeIndexedPolicy> {
    let msgs = backward_messages(model, policy, horizon)?;
    let occupancy = state_occupancy(model, policy, horizon);
    let mut per_step = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let prior = policy.at(t);
        let mut probs = prior.probs.clone();
        for (s, row) in probs.iter_mut().enumerate() {
            if occupancy[t][s] == 0.0 {
                continue;
            }
            let log_q = &msgs.log_action_values[t][s];
            let peak = (0..model.n_actions)
                .filter(|&a| prior.prob(s, a) > 0.0)
                .map(|a| log_q[a])
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = (0..model.n_actions)
                .map(|a| prior.prob(s, a) * (log_q[a] - peak).exp())
                .collect();
            let z: f64 = weights.iter().sum();
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::NormalizerUnderflow { time: t, state: s });
            }
            for (slot, w) in row.iter_mut().zip(weights) {
                *slot = w / z;
            }
        }
        per_step.push(PolicyTable { probs });
    }
    Ok(TimeIndexedPolicy { per_step })
}

/// The M-step: the posterior policy replaces the current one.
pub fn m_step(posterior: TimeIndexedPolicy) -> TimeIndexedPolicy {
    posterior
}

/// One EM iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmIteration {
    /// `log P(A_bar_T | pi^k)` before the update.
    pub prior_log_likelihood: f64,
    /// `-F(Q(pi_Q^k), P(pi^k))`, the bound attained by the E-step.
    pub e_step_neg_free_energy: f64,
    /// `pi^{k+1}`.
    pub policy: TimeIndexedPolicy,
    /// `log P(A_bar_T | pi^{k+1})`.
    pub log_likelihood: f64,
    /// `-F(pi^{k+1}, pi^{k+1})`.
    pub neg_free_energy_after_m: f64,
}

impl EmIteration {
    /// Gap between the likelihood and the E-step bound.
    pub fn e_step_kl(&self) -> f64 {
        self.prior_log_likelihood - self.e_step_neg_free_energy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    pub initial_log_likelihood: f64,
    pub iterations: Vec<EmIteration>,
    pub converged: bool,
}

impl EmTrace {
    pub fn final_policy(&self) -> Option<&TimeIndexedPolicy> {
        self.iterations.last().map(|it| &it.policy)
    }

    pub fn final_log_likelihood(&self) -> f64 {
        self.iterations
            .last()
            .map_or(self.initial_log_likelihood, |it| it.log_likelihood)
    }
}

/// Alternates [`e_step`] and [`m_step`] until the max-norm policy change
/// drops below `tol` or `max_iters` iterations have run.
pub fn run_em(
    model: &FiniteMdp,
    init_policy: &TimeIndexedPolicy,
    horizon: usize,
    max_iters: usize,
    tol: f64,
) -> Result<EmTrace> {
    if max_iters == 0 {
        return Err(Error::InvalidPolicy("max_iters must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidPolicy(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let initial_log_likelihood = log_multi_step_survival_prob(model, init_policy, horizon)?;
    let mut current = init_policy.clone();
    let mut current_ll = initial_log_likelihood;
    let mut iterations = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let posterior = e_step(model, &current, horizon)?;
        let e_step_neg_free_energy = neg_free_energy_dp(model, &posterior, &current, horizon)?;
        let next = m_step(posterior);
        let log_likelihood = log_multi_step_survival_prob(model, &next, horizon)?;
        let neg_free_energy_after_m = neg_free_energy_dp(model, &next, &next, horizon)?;
        let change = next.max_abs_diff(&current);
        iterations.push(EmIteration {
            prior_log_likelihood: current_ll,
            e_step_neg_free_energy,
            policy: next.clone(),
            log_likelihood,
            neg_free_energy_after_m,
        });
        current = next;
        current_ll = log_likelihood;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(EmTrace {
        initial_log_likelihood,
        iterations,
        converged,
    })
}
