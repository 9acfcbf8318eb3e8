//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use crate::checkpoint::load_checkpoint;
use crate::config::parse_config;
use crate::em::run_em;
use crate::harness::{
    evaluate, run_random_baseline, run_training, ExperimentConfig, METRICS_HEADER,
};
use crate::identities::run_identity_suite;
use crate::mdp::{FiniteMdp, TimeIndexedPolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "survival-rl",
    version,
    about = "Survival-probability reinforcement learning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train Sarsa(lambda) on the grid world with periodic evaluation.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved Q table without learning.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: u64,
        #[arg(long, default_value_t = 10_000)]
        cap: u64,
        /// Act greedily instead of epsilon-greedily.
        #[arg(long)]
        greedy: bool,
    },
    /// Evaluate the uniform random agent.
    Baseline {
        #[arg(long)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        cap: u64,
    },
    /// Run EM on a finite MDP given as JSON and print the per-iteration bound.
    EmDemo {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        iters: usize,
        #[arg(long, default_value_t = crate::em::DEFAULT_TOL)]
        tol: f64,
    },
    /// Check every likelihood / free-energy / EM identity on built-in fixtures.
    OracleCheck,
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn run(command: Command, out: &mut dyn Write) -> anyhow::Result<i32> {
    match command {
        Command::Train {
            config,
            seed,
            out: dir,
        } => {
            let mut cfg = parse_config(&config)?;
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            if let Some(dir) = dir {
                cfg.output_dir = dir;
            }
            let run = run_training(&cfg)?;
            writeln!(out, "{METRICS_HEADER}")?;
            for block in &run.blocks {
                writeln!(out, "{}", block.csv_row())?;
            }
        }
        Command::Eval {
            checkpoint,
            episodes,
            cap,
            greedy,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let cfg = ExperimentConfig {
                master_seed: ck.meta.master_seed,
                eval_episodes: episodes,
                episode_cap: cap,
                sarsa: ck.meta.params,
                greedy_eval: greedy,
                ..ExperimentConfig::default()
            };
            anyhow::ensure!(episodes >= 1, "--episodes must be at least 1");
            let block = ck.meta.episodes_trained / cfg.eval_every;
            let mut stats = evaluate(&ck.to_q_table(), &cfg, block)?;
            stats.episodes_trained = ck.meta.episodes_trained;
            writeln!(out, "{METRICS_HEADER}")?;
            writeln!(out, "{}", stats.csv_row())?;
        }
        Command::Baseline {
            episodes,
            seed,
            cap,
        } => {
            anyhow::ensure!(episodes >= 1, "--episodes must be at least 1");
            let cfg = ExperimentConfig {
                master_seed: seed,
                eval_episodes: episodes,
                episode_cap: cap,
                ..ExperimentConfig::default()
            };
            let stats = run_random_baseline(&cfg)?;
            writeln!(out, "{METRICS_HEADER}")?;
            writeln!(out, "{}", stats.csv_row())?;
        }
        Command::EmDemo {
            model,
            horizon,
            iters,
            tol,
        } => {
            let mdp = FiniteMdp::load(&model)
                .with_context(|| format!("loading model {}", model.display()))?;
            let init = TimeIndexedPolicy::uniform(mdp.n_states, mdp.n_actions, horizon);
            let trace = run_em(&mdp, &init, horizon, iters, tol)?;
            writeln!(out, "k,log_likelihood,neg_free_energy,kl")?;
            for (k, it) in trace.iterations.iter().enumerate() {
                writeln!(
                    out,
                    "{k},{},{},{}",
                    it.prior_log_likelihood,
                    it.e_step_neg_free_energy,
                    it.e_step_kl()
                )?;
            }
            eprintln!(
                "final log-likelihood {} after {} iterations (converged: {})",
                trace.final_log_likelihood(),
                trace.iterations.len(),
                trace.converged
            );
        }
        Command::OracleCheck => {
            let results = run_identity_suite()?;
            for r in &results {
                writeln!(out, "{r}")?;
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            writeln!(out, "{} checks, {failed} failed", results.len())?;
            return Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE });
        }
    }
    Ok(EXIT_OK)
}
