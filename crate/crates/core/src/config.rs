//! JSON experiment configuration. Absent fields take their defaults.
//!
//! ```json
//! {
//!   "master_seed": 7,
//!   "n_train_episodes": 50000,
//!   "eval_every": 1000,
//!   "eval_episodes": 1000,
//!   "episode_cap": 10000,
//!   "greedy_eval": false,
//!   "output_dir": "runs/seed7",
//!   "sarsa": { "alpha": 0.1, "gamma": 0.95, "lambda": 0.1, "epsilon": 0.01, "trace_cutoff": 0.0001 }
//! }
//! ```

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Json { source, .. } => Error::Json {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

fn count(field: &str, v: &Value) -> Result<u64> {
    match v.as_i64() {
        Some(n) if n >= 1 => Ok(n as u64),
        Some(n) => Err(Error::config(field, format!("must be at least 1, got {n}"))),
        None => Err(Error::config(
            field,
            format!("expected a positive integer, got {v}"),
        )),
    }
}

fn unit(field: &str, v: &Value) -> Result<f64> {
    match v.as_f64() {
        Some(x) if (0.0..=1.0).contains(&x) => Ok(x),
        Some(x) => Err(Error::config(field, format!("{x} not in [0, 1]"))),
        None => Err(Error::config(field, format!("expected a number, got {v}"))),
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let root: Value = serde_json::from_str(text).map_err(|source| Error::Json {
        path: PathBuf::from("<config>"),
        source,
    })?;
    let Value::Object(root) = root else {
        return Err(Error::config("<root>", "expected a JSON object"));
    };
    let mut cfg = ExperimentConfig::default();
    for (key, v) in &root {
        match key.as_str() {
            "master_seed" => {
                cfg.master_seed = v.as_u64().ok_or_else(|| {
                    Error::config(key, format!("expected a non-negative integer, got {v}"))
                })?
            }
            "n_train_episodes" => cfg.n_train_episodes = count(key, v)?,
            "eval_every" => cfg.eval_every = count(key, v)?,
            "eval_episodes" => cfg.eval_episodes = count(key, v)?,
            "episode_cap" => cfg.episode_cap = count(key, v)?,
            "greedy_eval" => {
                cfg.greedy_eval = v
                    .as_bool()
                    .ok_or_else(|| Error::config(key, format!("expected a boolean, got {v}")))?
            }
            "output_dir" => {
                cfg.output_dir = v
                    .as_str()
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::config(key, format!("expected a string, got {v}")))?
            }
            "sarsa" => parse_sarsa(v, &mut cfg)?,
            other => return Err(Error::config(other, "unknown field")),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_sarsa(v: &Value, cfg: &mut ExperimentConfig) -> Result<()> {
    let obj: &Map<String, Value> = v
        .as_object()
        .ok_or_else(|| Error::config("sarsa", "expected an object"))?;
    let p = &mut cfg.sarsa;
    for (key, v) in obj {
        let field = format!("sarsa.{key}");
        let slot = match key.as_str() {
            "alpha" => &mut p.alpha,
            "gamma" => &mut p.gamma,
            "lambda" => &mut p.lambda,
            "epsilon" => &mut p.epsilon,
            "trace_cutoff" => &mut p.trace_cutoff,
            _ => return Err(Error::config(field, "unknown field")),
        };
        *slot = unit(&field, v)?;
    }
    Ok(())
}
