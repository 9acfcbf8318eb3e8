//! Survival-probability maximization on finite MDPs and a grid-world
//! homeostasis task.
//!
//! * [`mdp`], [`survival`], [`em`]: exact planning on small finite MDPs. The
//!   multi-step survival probability is maximized by EM over time-indexed
//!   policies, and each step is checked against exhaustive trajectory
//!   enumeration ([`identities`]).
//! * [`gridworld`], [`sarsa`], [`harness`]: the model-free route. A tabular
//!   Sarsa(lambda) agent is trained with reward `ln P(alive next | state)` on
//!   a 3x3 world with food, poison and a draining battery.
//! * [`checkpoint`], [`config`], [`cli`]: persistence and the command line.
//!
//! Evaluation episodes run on rayon when the `parallel` feature (on by
//! default) is enabled; output is identical either way.

// `!(p >= 0.0)` is how NaN gets rejected; index loops follow the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod em;
pub mod error;
pub mod fixtures;
pub mod gridworld;
pub mod harness;
pub mod identities;
pub mod mdp;
pub mod sarsa;
pub mod seed;
pub mod survival;

pub use error::{Error, Result};
