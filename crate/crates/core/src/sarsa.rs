//! Tabular Sarsa(lambda) with replacing eligibility traces and
//! epsilon-greedy action selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{N_ACTIONS, N_OBSERVATIONS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SarsaParams {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// Traces at or below this value are dropped.
    pub trace_cutoff: f64,
}

impl Default for SarsaParams {
    fn default() -> Self {
        SarsaParams {
            alpha: 0.1,
            gamma: 0.95,
            lambda: 0.1,
            epsilon: 0.01,
            trace_cutoff: 1e-4,
        }
    }
}

impl SarsaParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("epsilon", self.epsilon),
            ("trace_cutoff", self.trace_cutoff),
        ];
        for (name, v) in fields {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(
                    format!("sarsa.{name}"),
                    format!("{v} not in [0, 1]"),
                ));
            }
        }
        Ok(())
    }
}

/// Dense action-value table over `(observation index, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_obs: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl Default for QTable {
    fn default() -> Self {
        QTable::new(N_OBSERVATIONS, N_ACTIONS)
    }
}

impl QTable {
    pub fn new(n_obs: usize, n_actions: usize) -> Self {
        QTable {
            n_obs,
            n_actions,
            values: vec![0.0; n_obs * n_actions],
        }
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn key(&self, obs: usize, action: usize) -> usize {
        debug_assert!(obs < self.n_obs && action < self.n_actions);
        obs * self.n_actions + action
    }

    pub fn get(&self, obs: usize, action: usize) -> f64 {
        self.values[self.key(obs, action)]
    }

    pub fn set(&mut self, obs: usize, action: usize, value: f64) {
        let k = self.key(obs, action);
        self.values[k] = value;
    }

    pub fn row(&self, obs: usize) -> &[f64] {
        let start = obs * self.n_actions;
        &self.values[start..start + self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries whose bit pattern is not `+0.0`, in index order.
    pub fn nonzero_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.to_bits() != 0)
            .map(move |(k, &v)| (k / self.n_actions, k % self.n_actions, v))
    }
}

/// Sparse replacing eligibility traces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceTable {
    entries: Vec<(usize, usize, f64)>,
}

impl TraceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, obs: usize, action: usize) -> f64 {
        self.entries
            .iter()
            .find(|(o, a, _)| *o == obs && *a == action)
            .map_or(0.0, |e| e.2)
    }

    fn replace(&mut self, obs: usize, action: usize) {
        match self
            .entries
            .iter_mut()
            .find(|(o, a, _)| *o == obs && *a == action)
        {
            Some(e) => e.2 = 1.0,
            None => self.entries.push((obs, action, 1.0)),
        }
    }
}

pub fn reset_traces(traces: &mut TraceTable) {
    traces.entries.clear();
}

/// Epsilon-greedy choice over `q.row(obs)`; greedy ties are broken
/// uniformly at random.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, obs: usize, epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..q.n_actions());
    }
    let row = q.row(obs);
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = row.iter().filter(|&&v| v == best).count();
    let pick = if ties == 1 { 0 } else { rng.gen_range(0..ties) };
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .nth(pick)
        .map(|(a, _)| a)
        .expect("pick < ties")
}

/// One Sarsa(lambda) backup. `next` is `None` on a terminal transition.
pub fn update(
    q: &mut QTable,
    traces: &mut TraceTable,
    obs: usize,
    action: usize,
    reward: f64,
    next: Option<(usize, usize)>,
    params: &SarsaParams,
) -> Result<()> {
    if !reward.is_finite() {
        return Err(Error::NonFiniteReward(reward));
    }
    let target = match next {
        Some((next_obs, next_action)) => reward + params.gamma * q.get(next_obs, next_action),
        None => reward,
    };
    let delta = target - q.get(obs, action);
    traces.replace(obs, action);
    let decay = params.gamma * params.lambda;
    let step = params.alpha * delta;
    traces.entries.retain_mut(|(o, a, e)| {
        let k = *o * q.n_actions + *a;
        q.values[k] += step * *e;
        *e *= decay;
        *e > params.trace_cutoff
    });
    Ok(())
}
