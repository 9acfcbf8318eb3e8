//! Finite MDP data model, tabular policies, state trajectories and the
//! exhaustive trajectory enumeration used as the ground-truth oracle for
//! every probabilistic identity in this crate.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for probability tables.
pub const PROB_TOL: f64 = 1e-12;

/// Upper bound on `n_states^(T+1) * n_actions^T` accepted by
/// [`enumerate_trajectories`].
pub const ENUMERATION_BOUND: f64 = 1e7;

/// Log-probability of an impossible event.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// A finite MDP whose states carry a temporal survival probability
/// `P(A_{t+1} = 1 | s_t)`.
///
/// Fields are public so that malformed models can be built and reported on
/// by [`validate_mdp`]; every planner entry point validates first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub initial_dist: Vec<f64>,
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    pub survival: Vec<f64>,
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySpace,
    Shape(String),
    InitialDistSum(f64),
    NegativeInitial {
        state: usize,
    },
    TransitionRowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeTransition {
        state: usize,
        action: usize,
        next: usize,
    },
    NonPositiveSurvival {
        state: usize,
        value: f64,
    },
    SurvivalAboveOne {
        state: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpace => write!(f, "n_states and n_actions must be positive"),
            Violation::Shape(what) => write!(f, "shape mismatch: {what}"),
            Violation::InitialDistSum(s) => write!(f, "initial_dist sums to {s}, not 1"),
            Violation::NegativeInitial { state } => {
                write!(f, "negative initial probability at state {state}")
            }
            Violation::TransitionRowSum { state, action, sum } => write!(
                f,
                "transition row (state {state}, action {action}) sums to {sum}, not 1"
            ),
            Violation::NegativeTransition {
                state,
                action,
                next,
            } => write!(
                f,
                "negative transition probability at ({state}, {action}, {next})"
            ),
            Violation::NonPositiveSurvival { state, value } => write!(
                f,
                "non-positive survival probability {value} at state {state}"
            ),
            Violation::SurvivalAboveOne { state, value } => {
                write!(f, "survival probability {value} > 1 at state {state}")
            }
        }
    }
}

impl FiniteMdp {
    /// Builds a model and rejects it if any invariant fails.
    pub fn new(
        initial_dist: Vec<f64>,
        transition: Vec<Vec<Vec<f64>>>,
        survival: Vec<f64>,
    ) -> Result<Self> {
        let n_states = survival.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        let model = FiniteMdp {
            n_states,
            n_actions,
            initial_dist,
            transition,
            survival,
        };
        model.ensure_valid()?;
        Ok(model)
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Loads a model from a JSON file and validates it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model = Self::from_json_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        model.ensure_valid()?;
        Ok(model)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_mdp(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_mdp(self);
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    pub fn log_survival(&self, state: usize) -> f64 {
        self.survival[state].ln()
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(Error::IndexOutOfBounds(format!(
                "state {s} >= {}",
                self.n_states
            )))
        }
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a < self.n_actions {
            Ok(())
        } else {
            Err(Error::IndexOutOfBounds(format!(
                "action {a} >= {}",
                self.n_actions
            )))
        }
    }
}

/// Returns every violated invariant of `model`; empty when the model is valid.
pub fn validate_mdp(model: &FiniteMdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let (ns, na) = (model.n_states, model.n_actions);
    if ns == 0 || na == 0 {
        out.push(Violation::EmptySpace);
        return out;
    }
    if model.initial_dist.len() != ns {
        out.push(Violation::Shape(format!(
            "initial_dist has {} entries, expected {ns}",
            model.initial_dist.len()
        )));
    } else {
        for (s, &p) in model.initial_dist.iter().enumerate() {
            if !(p >= 0.0) {
                out.push(Violation::NegativeInitial { state: s });
            }
        }
        let sum: f64 = model.initial_dist.iter().sum();
        if !((sum - 1.0).abs() <= PROB_TOL) {
            out.push(Violation::InitialDistSum(sum));
        }
    }
    if model.survival.len() != ns {
        out.push(Violation::Shape(format!(
            "survival has {} entries, expected {ns}",
            model.survival.len()
        )));
    } else {
        for (s, &p) in model.survival.iter().enumerate() {
            if !(p > 0.0) {
                out.push(Violation::NonPositiveSurvival { state: s, value: p });
            } else if p > 1.0 {
                out.push(Violation::SurvivalAboveOne { state: s, value: p });
            }
        }
    }
    if model.transition.len() != ns {
        out.push(Violation::Shape(format!(
            "transition has {} state rows, expected {ns}",
            model.transition.len()
        )));
        return out;
    }
    for (s, by_action) in model.transition.iter().enumerate() {
        if by_action.len() != na {
            out.push(Violation::Shape(format!(
                "transition[{s}] has {} actions, expected {na}",
                by_action.len()
            )));
            continue;
        }
        for (a, row) in by_action.iter().enumerate() {
            if row.len() != ns {
                out.push(Violation::Shape(format!(
                    "transition[{s}][{a}] has {} entries, expected {ns}",
                    row.len()
                )));
                continue;
            }
            for (next, &p) in row.iter().enumerate() {
                if !(p >= 0.0) {
                    out.push(Violation::NegativeTransition {
                        state: s,
                        action: a,
                        next,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= PROB_TOL) {
                out.push(Violation::TransitionRowSum {
                    state: s,
                    action: a,
                    sum,
                });
            }
        }
    }
    out
}

/// Stationary tabular policy `pi(a|s)`, indexed `[state][action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub probs: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyTable {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        PolicyTable { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state][action]
    }

    fn check(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.probs.len() != n_states {
            return Err(Error::InvalidPolicy(format!(
                "{} state rows, expected {n_states}",
                self.probs.len()
            )));
        }
        for (s, row) in self.probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::InvalidPolicy(format!(
                    "row {s} has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidPolicy(format!("negative entry in row {s}")));
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= PROB_TOL) {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// Non-stationary policy: one [`PolicyTable`] per step `t = 0..T-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeIndexedPolicy {
    pub per_step: Vec<PolicyTable>,
}

impl TimeIndexedPolicy {
    /// Replicates a stationary policy over `horizon` steps.
    pub fn stationary(policy: PolicyTable, horizon: usize) -> Self {
        TimeIndexedPolicy {
            per_step: vec![policy; horizon],
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize, horizon: usize) -> Self {
        Self::stationary(PolicyTable::uniform(n_states, n_actions), horizon)
    }

    pub fn horizon(&self) -> usize {
        self.per_step.len()
    }

    pub fn at(&self, t: usize) -> &PolicyTable {
        &self.per_step[t]
    }

    /// Largest absolute entry-wise difference between two policies of equal shape.
    pub fn max_abs_diff(&self, other: &TimeIndexedPolicy) -> f64 {
        self.per_step
            .iter()
            .zip(&other.per_step)
            .flat_map(|(a, b)| a.probs.iter().zip(&b.probs))
            .flat_map(|(ra, rb)| ra.iter().zip(rb))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Checks shape against `model` and `horizon`, and every row's normalization.
    pub fn check(&self, model: &FiniteMdp, horizon: usize) -> Result<()> {
        if self.per_step.len() != horizon {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} steps, horizon is {horizon}",
                self.per_step.len()
            )));
        }
        for (t, table) in self.per_step.iter().enumerate() {
            table
                .check(model.n_states, model.n_actions)
                .map_err(|e| Error::InvalidPolicy(format!("step {t}: {e}")))?;
        }
        Ok(())
    }
}

/// `s_0..s_T` and `a_0..a_{T-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateTrajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl StateTrajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub(crate) fn check(&self, model: &FiniteMdp) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 {
            return Err(Error::IndexOutOfBounds(format!(
                "trajectory has {} states and {} actions",
                self.states.len(),
                self.actions.len()
            )));
        }
        for &s in &self.states {
            model.check_state(s)?;
        }
        for &a in &self.actions {
            model.check_action(a)?;
        }
        Ok(())
    }
}

pub(crate) fn check_enumeration_size(model: &FiniteMdp, horizon: usize) -> Result<()> {
    let size = (model.n_states as f64).powi(horizon as i32 + 1)
        * (model.n_actions as f64).powi(horizon as i32);
    if size > ENUMERATION_BOUND {
        return Err(Error::EnumerationTooLarge {
            size,
            bound: ENUMERATION_BOUND,
            horizon,
        });
    }
    Ok(())
}

/// Lists every positive-probability trajectory of length `horizon` under
/// `policy` together with `P(tau | pi)`, computed as a plain product.
pub fn enumerate_trajectories(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    horizon: usize,
) -> Result<Vec<(StateTrajectory, f64)>> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    model.ensure_valid()?;
    policy.check(model, horizon)?;
    check_enumeration_size(model, horizon)?;

    let mut out = Vec::new();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    for s0 in 0..model.n_states {
        let p0 = model.initial_dist[s0];
        if p0 > 0.0 {
            states.push(s0);
            expand(
                model,
                policy,
                horizon,
                p0,
                &mut states,
                &mut actions,
                &mut out,
            );
            states.pop();
        }
    }
    Ok(out)
}

fn expand(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    horizon: usize,
    prob: f64,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    out: &mut Vec<(StateTrajectory, f64)>,
) {
    let t = actions.len();
    if t == horizon {
        out.push((
            StateTrajectory {
                states: states.clone(),
                actions: actions.clone(),
            },
            prob,
        ));
        return;
    }
    let s = states[t];
    for a in 0..model.n_actions {
        let pa = policy.at(t).prob(s, a);
        if pa == 0.0 {
            continue;
        }
        actions.push(a);
        for (next, &pn) in model.transition[s][a].iter().enumerate() {
            if pn > 0.0 {
                states.push(next);
                expand(model, policy, horizon, prob * pa * pn, states, actions, out);
                states.pop();
            }
        }
        actions.pop();
    }
}

/// `log P(tau | pi)` as a sum of log factors; [`LOG_ZERO`] when any factor is zero.
pub fn trajectory_log_prob(
    model: &FiniteMdp,
    policy: &TimeIndexedPolicy,
    traj: &StateTrajectory,
) -> Result<f64> {
    traj.check(model)?;
    let horizon = traj.horizon();
    if policy.horizon() < horizon {
        return Err(Error::InvalidPolicy(format!(
            "policy covers {} steps, trajectory has {horizon}",
            policy.horizon()
        )));
    }
    let mut acc = safe_ln(model.initial_dist[traj.states[0]]);
    for t in 0..horizon {
        if acc == LOG_ZERO {
            break;
        }
        let (s, a, next) = (traj.states[t], traj.actions[t], traj.states[t + 1]);
        acc += safe_ln(policy.at(t).prob(s, a)) + safe_ln(model.transition[s][a][next]);
    }
    Ok(acc)
}

/// `ln p`, mapping zero to [`LOG_ZERO`] explicitly.
pub fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        LOG_ZERO
    }
}

/// Numerically stable `ln(sum(exp(x)))`; [`LOG_ZERO`] for an empty or all-zero input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO {
        return LOG_ZERO;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
