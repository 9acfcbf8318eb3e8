use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use survival_rl::harness::{
    evaluate, evaluate_with, run_episode, run_random_baseline, Agent, Execution, ExperimentConfig,
    FrozenAgent, SarsaLearner, Trainer,
};
use survival_rl::sarsa::{reset_traces, select_action, update, QTable, SarsaParams, TraceTable};
use survival_rl::seed::{episode_rng, Stream};

/// Replays a fixed list of uniform draws.
struct ScriptedRng(VecDeque<u64>);

impl ScriptedRng {
    fn new(draws: &[f64]) -> Self {
        ScriptedRng(
            draws
                .iter()
                .map(|&u| ((u * (1u64 << 53) as f64) as u64) << 11)
                .collect(),
        )
    }
}

impl RngCore for ScriptedRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }
    fn next_u64(&mut self) -> u64 {
        self.0.pop_front().expect("script exhausted")
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// Always moves left; consumes no randomness.
struct Leftward;

impl Agent for Leftward {
    fn act<R: Rng + ?Sized>(&mut self, _obs: usize, _rng: &mut R) -> usize {
        3
    }
}

#[test]
fn survival_steps_count_alive_draws() {
    // reset: agent 0, food 0, poison 1; then per step (alive draw, drift draw)
    let mut script = vec![0.0, 0.0, 0.0];
    for _ in 0..5 {
        script.extend([0.0, 0.5]);
    }
    script.extend([0.999_999_9, 0.5]);
    let mut rng = ScriptedRng::new(&script);
    let r = run_episode(&mut Leftward, &mut rng, 100).unwrap();
    assert_eq!(r.survival_steps, 5);
    assert_eq!(r.battery_at_death, Some(55.0));
    assert!(!r.capped);
    assert!(rng.0.is_empty());
}

#[test]
fn cap_ends_episode() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = run_episode(&mut Leftward, &mut rng, 5).unwrap();
    assert!(r.survival_steps <= 5);
    if r.battery_at_death.is_none() {
        assert!(r.capped);
        assert_eq!(r.survival_steps, 5);
    }
    let mut script = vec![0.0; 3];
    for _ in 0..5 {
        script.extend([0.0, 0.5]);
    }
    let r = run_episode(&mut Leftward, &mut ScriptedRng::new(&script), 5).unwrap();
    assert!(r.capped);
    assert_eq!(r.survival_steps, 5);
    assert_eq!(r.battery_at_death, None);
}

#[test]
fn never_eating_dies() {
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = run_episode(&mut Leftward, &mut rng, 10_000).unwrap();
        assert!(!r.capped);
        assert!(r.survival_steps < 60);
    }
}

#[test]
fn random_agent_dies_young() {
    let cfg = ExperimentConfig {
        master_seed: 4,
        ..ExperimentConfig::default()
    };
    let stats = run_random_baseline(&cfg).unwrap();
    assert!(stats.median_survival_steps < 25.0);
    assert!(stats.median_food_eaten <= 1.0);
    assert_eq!(stats, run_random_baseline(&cfg).unwrap());
}

/// Plain one-step Sarsa used as the reference for lambda = 0.
struct OneStepSarsa<'a> {
    q: &'a mut QTable,
    params: SarsaParams,
}

impl Agent for OneStepSarsa<'_> {
    fn act<R: Rng + ?Sized>(&mut self, obs: usize, rng: &mut R) -> usize {
        select_action(self.q, obs, self.params.epsilon, rng)
    }
    fn learn(
        &mut self,
        obs: usize,
        action: usize,
        reward: f64,
        next: Option<(usize, usize)>,
    ) -> survival_rl::Result<()> {
        let target = match next {
            Some((o, a)) => reward + self.params.gamma * self.q.get(o, a),
            None => reward,
        };
        let old = self.q.get(obs, action);
        self.q
            .set(obs, action, old + self.params.alpha * (target - old));
        Ok(())
    }
}

#[test]
fn zero_lambda_is_one_step_sarsa() {
    let params = SarsaParams {
        lambda: 0.0,
        trace_cutoff: 1e-4,
        ..SarsaParams::default()
    };
    let mut q_trace = QTable::default();
    let mut q_plain = QTable::default();
    for episode in 0..300 {
        let mut rng = episode_rng(5, Stream::Train, 0, episode);
        run_episode(
            &mut SarsaLearner::new(&mut q_trace, params),
            &mut rng,
            10_000,
        )
        .unwrap();
        let mut rng = episode_rng(5, Stream::Train, 0, episode);
        run_episode(
            &mut OneStepSarsa {
                q: &mut q_plain,
                params,
            },
            &mut rng,
            10_000,
        )
        .unwrap();
        assert_eq!(q_trace, q_plain, "diverged at episode {episode}");
    }
    assert!(q_trace.nonzero_entries().count() > 0);
}

#[test]
fn chained_updates_keep_q_non_positive() {
    let params = SarsaParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut q = QTable::new(20, 5);
    let mut traces = TraceTable::new();
    let (mut obs, mut action) = (0usize, 0usize);
    for _ in 0..100_000 {
        let reward = -rng.gen::<f64>() * 2.0;
        if rng.gen::<f64>() < 0.05 {
            update(&mut q, &mut traces, obs, action, reward, None, &params).unwrap();
            reset_traces(&mut traces);
            obs = rng.gen_range(0..20);
            action = rng.gen_range(0..5);
        } else {
            let next = (rng.gen_range(0..20), rng.gen_range(0..5));
            update(
                &mut q,
                &mut traces,
                obs,
                action,
                reward,
                Some(next),
                &params,
            )
            .unwrap();
            (obs, action) = next;
        }
        assert!(q.values().iter().all(|&v| v <= 0.0 && v.is_finite()));
    }
}

#[test]
fn training_is_deterministic() {
    let cfg = ExperimentConfig {
        master_seed: 77,
        n_train_episodes: 500,
        eval_every: 500,
        ..ExperimentConfig::default()
    };
    let mut a = Trainer::new(cfg.clone()).unwrap();
    let mut b = Trainer::new(cfg).unwrap();
    a.train_episodes(500).unwrap();
    b.train_episodes(500).unwrap();
    let bits = |q: &QTable| q.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.q()), bits(b.q()));
    assert!(a.q().values().iter().all(|&v| v <= 0.0));
}

#[test]
fn evaluation_is_pure_and_schedule_independent() {
    let cfg = ExperimentConfig {
        master_seed: 9,
        n_train_episodes: 2000,
        eval_every: 1000,
        eval_episodes: 300,
        ..ExperimentConfig::default()
    };
    let mut trainer = Trainer::new(cfg.clone()).unwrap();
    trainer.train_episodes(2000).unwrap();
    let before = trainer.q().clone();
    let seq = evaluate_with(trainer.q(), &cfg, 2, Execution::Sequential).unwrap();
    assert_eq!(trainer.q(), &before);
    assert_eq!(seq, evaluate(trainer.q(), &cfg, 2).unwrap());
    #[cfg(feature = "parallel")]
    assert_eq!(
        seq,
        evaluate_with(trainer.q(), &cfg, 2, Execution::Parallel).unwrap()
    );
}

#[test]
fn untrained_agent_behaves_like_random() {
    let cfg = ExperimentConfig {
        master_seed: 12,
        eval_episodes: 2000,
        ..ExperimentConfig::default()
    };
    let q = QTable::default();
    let untrained = evaluate(&q, &cfg, 0).unwrap();
    let random = run_random_baseline(&cfg).unwrap();
    assert!((untrained.median_survival_steps - random.median_survival_steps).abs() <= 1.0);
    let (a, b) = (
        untrained.mean_battery_at_death.unwrap(),
        random.mean_battery_at_death.unwrap(),
    );
    assert!((a - b).abs() < 0.5, "{a} vs {b}");
    // a frozen all-zero table with epsilon-greedy is a uniform policy
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut agent = FrozenAgent {
        q: &q,
        epsilon: 0.01,
    };
    let mut counts = [0u32; 5];
    for _ in 0..50_000 {
        counts[agent.act(0, &mut rng)] += 1;
    }
    assert!(
        counts.iter().all(|&c| (c as f64 - 10_000.0).abs() < 400.0),
        "{counts:?}"
    );
}
