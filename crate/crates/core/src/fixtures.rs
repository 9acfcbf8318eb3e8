//! Small built-in models and random generators shared by the identity
//! suite, the tests and the benches.

use rand::Rng;

use crate::mdp::{FiniteMdp, PolicyTable, TimeIndexedPolicy};

pub const STAY: usize = 0;
pub const SWITCH: usize = 1;

/// Two states {G, R}, actions {stay, switch}, deterministic dynamics,
/// survival 0.9 in G and 0.5 in R, start in G.
pub fn chain2() -> FiniteMdp {
    FiniteMdp::new(
        vec![1.0, 0.0],
        vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        ],
        vec![0.9, 0.5],
    )
    .expect("CHAIN2 is valid")
}

/// CHAIN2 dynamics with every survival probability equal to 1.
pub fn chain2_immortal() -> FiniteMdp {
    let mut m = chain2();
    m.survival = vec![1.0, 1.0];
    m
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // strictly positive entries keep every trajectory in the support
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = out[..n - 1].iter().sum();
    out[n - 1] = 1.0 - head;
    out
}

/// Dense random MDP with stochastic transitions and initial distribution.
pub fn random_mdp<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> FiniteMdp {
    let transition = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| random_simplex(n_states, rng))
                .collect()
        })
        .collect();
    let survival = (0..n_states).map(|_| rng.gen_range(0.2..1.0)).collect();
    FiniteMdp::new(random_simplex(n_states, rng), transition, survival)
        .expect("generated model is valid")
}

/// Random MDP with deterministic transitions and a deterministic start state.
pub fn random_deterministic_mdp<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    rng: &mut R,
) -> FiniteMdp {
    let transition = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| {
                    let mut row = vec![0.0; n_states];
                    row[rng.gen_range(0..n_states)] = 1.0;
                    row
                })
                .collect()
        })
        .collect();
    let mut initial = vec![0.0; n_states];
    initial[rng.gen_range(0..n_states)] = 1.0;
    let survival = (0..n_states).map(|_| rng.gen_range(0.2..1.0)).collect();
    FiniteMdp::new(initial, transition, survival).expect("generated model is valid")
}

/// Full-support random time-indexed policy.
pub fn random_policy<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    rng: &mut R,
) -> TimeIndexedPolicy {
    TimeIndexedPolicy {
        per_step: (0..horizon)
            .map(|_| PolicyTable {
                probs: (0..n_states)
                    .map(|_| random_simplex(n_actions, rng))
                    .collect(),
            })
            .collect(),
    }
}

/// Every deterministic time-indexed policy for `model` over `horizon`
/// steps (`n_actions^(n_states * horizon)` of them).
pub fn all_deterministic_policies(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
) -> impl Iterator<Item = TimeIndexedPolicy> {
    let slots = n_states * horizon;
    let count = n_actions.pow(slots as u32);
    (0..count).map(move |mut code| {
        let mut choice = Vec::with_capacity(slots);
        for _ in 0..slots {
            choice.push(code % n_actions);
            code /= n_actions;
        }
        TimeIndexedPolicy {
            per_step: choice
                .chunks(n_states)
                .map(|acts| PolicyTable::deterministic(acts, n_actions))
                .collect(),
        }
    })
}
