//! Episodic training with periodic frozen evaluation, the uniform random
//! baseline, and the per-block metrics CSV.
//!
//! Training is sequential (a single Q writer). Evaluation episodes are
//! independent given their derived random streams and can be fanned out
//! across threads; results are reduced in episode order either way.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::error::{Error, Result};
use crate::gridworld::{encode_observation, reset, step, Action, LastEat, N_ACTIONS};
use crate::sarsa::{reset_traces, select_action, update, QTable, SarsaParams, TraceTable};
use crate::seed::{episode_rng, Stream};

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: &str = "block,episodes_trained,median_survival,mean_battery_at_death,std_battery_at_death,median_food,median_poison,capped_fraction";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_train_episodes: u64,
    pub eval_every: u64,
    pub eval_episodes: u64,
    pub episode_cap: u64,
    pub sarsa: SarsaParams,
    /// Evaluate with epsilon = 0 instead of the training epsilon.
    pub greedy_eval: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 0,
            n_train_episodes: 50_000,
            eval_every: 1000,
            eval_episodes: 1000,
            episode_cap: 10_000,
            sarsa: SarsaParams::default(),
            greedy_eval: false,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_train_episodes", self.n_train_episodes),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("episode_cap", self.episode_cap),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if self.eval_every > self.n_train_episodes {
            return Err(Error::config(
                "eval_every",
                format!(
                    "{} exceeds n_train_episodes {}",
                    self.eval_every, self.n_train_episodes
                ),
            ));
        }
        self.sarsa.validate()
    }

    pub fn eval_epsilon(&self) -> f64 {
        if self.greedy_eval {
            0.0
        } else {
            self.sarsa.epsilon
        }
    }
}

/// How evaluation episodes are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    /// Completed transitions, i.e. alive draws before the first death.
    pub survival_steps: u64,
    /// Battery of the state whose survival draw failed; `None` when capped.
    pub battery_at_death: Option<f64>,
    pub food_eaten: u64,
    pub poison_eaten: u64,
    pub capped: bool,
}

/// Aggregates of one evaluation block.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub episode_block: u64,
    pub episodes_trained: u64,
    pub median_survival_steps: f64,
    pub mean_battery_at_death: Option<f64>,
    pub std_battery_at_death: Option<f64>,
    pub median_food_eaten: f64,
    pub median_poison_eaten: f64,
    pub capped_fraction: f64,
}

impl EvalStats {
    pub fn from_episodes(block: u64, episodes_trained: u64, results: &[EpisodeResult]) -> Self {
        let deaths: Vec<f64> = results.iter().filter_map(|r| r.battery_at_death).collect();
        let (mean, std) = if deaths.is_empty() {
            (None, None)
        } else {
            let n = deaths.len() as f64;
            let mean = deaths.iter().sum::<f64>() / n;
            let var = deaths.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()))
        };
        let capped = results.iter().filter(|r| r.capped).count();
        EvalStats {
            episode_block: block,
            episodes_trained,
            median_survival_steps: lower_median(results.iter().map(|r| r.survival_steps)),
            mean_battery_at_death: mean,
            std_battery_at_death: std,
            median_food_eaten: lower_median(results.iter().map(|r| r.food_eaten)),
            median_poison_eaten: lower_median(results.iter().map(|r| r.poison_eaten)),
            capped_fraction: if results.is_empty() {
                0.0
            } else {
                capped as f64 / results.len() as f64
            },
        }
    }

    pub fn csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode_block,
            self.episodes_trained,
            self.median_survival_steps,
            opt(self.mean_battery_at_death),
            opt(self.std_battery_at_death),
            self.median_food_eaten,
            self.median_poison_eaten,
            self.capped_fraction
        )
    }
}

/// Median with the lower-midpoint convention for even counts; 0 when empty.
pub fn lower_median(values: impl IntoIterator<Item = u64>) -> f64 {
    let mut v: Vec<u64> = values.into_iter().collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_unstable();
    v[(v.len() - 1) / 2] as f64
}

/// Something that picks actions from encoded observations and optionally
/// learns from transitions.
pub trait Agent {
    fn begin_episode(&mut self) {}

    fn act<R: Rng + ?Sized>(&mut self, obs: usize, rng: &mut R) -> usize;

    /// `next` is `None` on the fatal transition.
    fn learn(
        &mut self,
        _obs: usize,
        _action: usize,
        _reward: f64,
        _next: Option<(usize, usize)>,
    ) -> Result<()> {
        Ok(())
    }
}

/// Uniform over the five actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomAgent;

impl Agent for RandomAgent {
    fn act<R: Rng + ?Sized>(&mut self, _obs: usize, rng: &mut R) -> usize {
        rng.gen_range(0..N_ACTIONS)
    }
}

/// Epsilon-greedy over a read-only Q table.
#[derive(Debug, Clone, Copy)]
pub struct FrozenAgent<'a> {
    pub q: &'a QTable,
    pub epsilon: f64,
}

impl Agent for FrozenAgent<'_> {
    fn act<R: Rng + ?Sized>(&mut self, obs: usize, rng: &mut R) -> usize {
        select_action(self.q, obs, self.epsilon, rng)
    }
}

/// On-policy Sarsa(lambda) learner.
#[derive(Debug)]
pub struct SarsaLearner<'a> {
    pub q: &'a mut QTable,
    pub traces: TraceTable,
    pub params: SarsaParams,
}

impl<'a> SarsaLearner<'a> {
    pub fn new(q: &'a mut QTable, params: SarsaParams) -> Self {
        SarsaLearner {
            q,
            traces: TraceTable::new(),
            params,
        }
    }
}

impl Agent for SarsaLearner<'_> {
    fn begin_episode(&mut self) {
        reset_traces(&mut self.traces);
    }

    fn act<R: Rng + ?Sized>(&mut self, obs: usize, rng: &mut R) -> usize {
        select_action(self.q, obs, self.params.epsilon, rng)
    }

    fn learn(
        &mut self,
        obs: usize,
        action: usize,
        reward: f64,
        next: Option<(usize, usize)>,
    ) -> Result<()> {
        update(
            self.q,
            &mut self.traces,
            obs,
            action,
            reward,
            next,
            &self.params,
        )
    }
}

/// Runs one episode until the alive draw fails or `cap` transitions complete.
pub fn run_episode<A: Agent, R: Rng + ?Sized>(
    agent: &mut A,
    rng: &mut R,
    cap: u64,
) -> Result<EpisodeResult> {
    agent.begin_episode();
    let (mut state, obs) = reset(rng);
    let mut obs = encode_observation(&obs)?;
    let mut action = agent.act(obs, rng);
    let mut result = EpisodeResult {
        survival_steps: 0,
        battery_at_death: None,
        food_eaten: 0,
        poison_eaten: 0,
        capped: false,
    };
    loop {
        let act = Action::from_index(action).expect("agent returned a valid action");
        let out = step(&state, act, rng);
        if !out.alive {
            agent.learn(obs, action, out.reward, None)?;
            result.battery_at_death = Some(state.battery);
            return Ok(result);
        }
        result.survival_steps += 1;
        match out.next_state.last_eat {
            LastEat::Food => result.food_eaten += 1,
            LastEat::Poison => result.poison_eaten += 1,
            LastEat::Nothing => {}
        }
        let next_obs = encode_observation(&out.observation)?;
        let next_action = agent.act(next_obs, rng);
        agent.learn(obs, action, out.reward, Some((next_obs, next_action)))?;
        if result.survival_steps >= cap {
            result.capped = true;
            return Ok(result);
        }
        state = out.next_state;
        obs = next_obs;
        action = next_action;
    }
}

fn map_episodes<F>(n: u64, execution: Execution, f: F) -> Result<Vec<EpisodeResult>>
where
    F: Fn(u64) -> Result<EpisodeResult> + Sync + Send,
{
    match execution {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Frozen evaluation of `q` for block `block`, scheduled as `execution`.
pub fn evaluate_with(
    q: &QTable,
    config: &ExperimentConfig,
    block: u64,
    execution: Execution,
) -> Result<EvalStats> {
    let epsilon = config.eval_epsilon();
    let results = map_episodes(config.eval_episodes, execution, |i| {
        let mut rng = episode_rng(config.master_seed, Stream::Eval, block, i);
        run_episode(
            &mut FrozenAgent { q, epsilon },
            &mut rng,
            config.episode_cap,
        )
    })?;
    Ok(EvalStats::from_episodes(
        block,
        block * config.eval_every,
        &results,
    ))
}

pub fn evaluate(q: &QTable, config: &ExperimentConfig, block: u64) -> Result<EvalStats> {
    evaluate_with(q, config, block, Execution::default())
}

pub fn run_random_baseline_with(
    config: &ExperimentConfig,
    execution: Execution,
) -> Result<EvalStats> {
    let results = map_episodes(config.eval_episodes, execution, |i| {
        let mut rng = episode_rng(config.master_seed, Stream::Baseline, 0, i);
        run_episode(&mut RandomAgent, &mut rng, config.episode_cap)
    })?;
    Ok(EvalStats::from_episodes(0, 0, &results))
}

/// `eval_episodes` episodes of the uniform random agent.
pub fn run_random_baseline(config: &ExperimentConfig) -> Result<EvalStats> {
    run_random_baseline_with(config, Execution::default())
}

/// Sequential Sarsa(lambda) trainer holding the learned Q table.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: ExperimentConfig,
    q: QTable,
    episodes_trained: u64,
}

impl Trainer {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            config,
            q: QTable::default(),
            episodes_trained: 0,
        })
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn into_q(self) -> QTable {
        self.q
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn episodes_trained(&self) -> u64 {
        self.episodes_trained
    }

    pub fn train_episodes(&mut self, n: u64) -> Result<()> {
        let mut learner = SarsaLearner::new(&mut self.q, self.config.sarsa);
        for _ in 0..n {
            let mut rng = episode_rng(
                self.config.master_seed,
                Stream::Train,
                0,
                self.episodes_trained,
            );
            run_episode(&mut learner, &mut rng, self.config.episode_cap)?;
            self.episodes_trained += 1;
        }
        Ok(())
    }

    /// Trains one block of `eval_every` episodes and evaluates the result.
    pub fn train_block(&mut self) -> Result<EvalStats> {
        self.train_episodes(self.config.eval_every)?;
        let block = self.episodes_trained / self.config.eval_every;
        evaluate(&self.q, &self.config, block)
    }

    pub fn n_blocks(&self) -> u64 {
        self.config.n_train_episodes / self.config.eval_every
    }

    pub fn checkpoint_meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            params: self.config.sarsa,
            episodes_trained: self.episodes_trained,
            master_seed: self.config.master_seed,
        }
    }
}

pub fn checkpoint_path(dir: &Path, block: u64) -> PathBuf {
    dir.join(format!("checkpoint_block_{block:04}.txt"))
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub blocks: Vec<EvalStats>,
    pub q: QTable,
}

/// Full protocol: trains `n_train_episodes`, evaluating every `eval_every`
/// episodes. Streams `metrics.csv` and writes one checkpoint per block
/// into `output_dir`.
pub fn run_training(config: &ExperimentConfig) -> Result<TrainingRun> {
    let mut trainer = Trainer::new(config.clone())?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics_path = dir.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut csv = BufWriter::new(file);
    let io_err = |e| Error::io(&metrics_path, e);
    writeln!(csv, "# master_seed={}", config.master_seed).map_err(io_err)?;
    writeln!(csv, "{METRICS_HEADER}").map_err(io_err)?;

    let mut blocks = Vec::new();
    for _ in 0..trainer.n_blocks() {
        let stats = trainer.train_block()?;
        writeln!(csv, "{}", stats.csv_row()).map_err(io_err)?;
        csv.flush().map_err(io_err)?;
        save_checkpoint(
            trainer.q(),
            &trainer.checkpoint_meta(),
            checkpoint_path(dir, stats.episode_block),
        )?;
        log::info!(
            "block {} ({} episodes): median survival {}",
            stats.episode_block,
            stats.episodes_trained,
            stats.median_survival_steps
        );
        blocks.push(stats);
    }
    Ok(TrainingRun {
        blocks,
        q: trainer.into_q(),
    })
}
