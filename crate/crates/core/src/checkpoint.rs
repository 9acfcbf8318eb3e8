//! Line-based text checkpoints for Q tables.
//!
//! ```text
//! SURVIVAL-RL-QTABLE v1
//! alpha=0.1 gamma=0.95 lambda=0.1 epsilon=0.01 trace_cutoff=0.0001 episodes_trained=2000 master_seed=42
//! 17 4 -0.1
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! loading reproduces every entry bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gridworld::{N_ACTIONS, N_OBSERVATIONS};
use crate::sarsa::{QTable, SarsaParams};

pub const FORMAT_VERSION: &str = "SURVIVAL-RL-QTABLE v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub params: SarsaParams,
    pub episodes_trained: u64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: String,
    pub meta: CheckpointMeta,
    /// `(obs_index, action, q_value)` for every nonzero entry.
    pub entries: Vec<(usize, usize, f64)>,
}

impl Checkpoint {
    pub fn to_q_table(&self) -> QTable {
        let mut q = QTable::default();
        for &(obs, action, value) in &self.entries {
            q.set(obs, action, value);
        }
        q
    }
}

pub fn format_checkpoint(q: &QTable, meta: &CheckpointMeta) -> String {
    let p = &meta.params;
    let mut out = String::new();
    out.push_str(FORMAT_VERSION);
    out.push('\n');
    let _ = writeln!(
        out,
        "alpha={} gamma={} lambda={} epsilon={} trace_cutoff={} episodes_trained={} master_seed={}",
        p.alpha,
        p.gamma,
        p.lambda,
        p.epsilon,
        p.trace_cutoff,
        meta.episodes_trained,
        meta.master_seed
    );
    for (obs, action, value) in q.nonzero_entries() {
        let _ = writeln!(out, "{obs} {action} {value}");
    }
    out
}

pub fn save_checkpoint(q: &QTable, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_checkpoint(q, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        line,
        message: message.into(),
    }
}

fn parse_meta(line: &str) -> Result<CheckpointMeta> {
    let mut params = SarsaParams::default();
    let (mut episodes, mut seed) = (None, None);
    let mut seen = Vec::new();
    for field in line.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad(2, format!("expected key=value, got {field:?}")))?;
        let float = || {
            value
                .parse::<f64>()
                .map_err(|_| bad(2, format!("bad value for {key}: {value:?}")))
        };
        let int = || {
            value
                .parse::<u64>()
                .map_err(|_| bad(2, format!("bad value for {key}: {value:?}")))
        };
        match key {
            "alpha" => params.alpha = float()?,
            "gamma" => params.gamma = float()?,
            "lambda" => params.lambda = float()?,
            "epsilon" => params.epsilon = float()?,
            "trace_cutoff" => params.trace_cutoff = float()?,
            "episodes_trained" => episodes = Some(int()?),
            "master_seed" => seed = Some(int()?),
            other => return Err(bad(2, format!("unknown metadata key {other:?}"))),
        }
        seen.push(key);
    }
    for key in [
        "alpha",
        "gamma",
        "lambda",
        "epsilon",
        "trace_cutoff",
        "episodes_trained",
        "master_seed",
    ] {
        if !seen.contains(&key) {
            return Err(bad(2, format!("missing metadata key {key:?}")));
        }
    }
    Ok(CheckpointMeta {
        params,
        episodes_trained: episodes.expect("checked above"),
        master_seed: seed.expect("checked above"),
    })
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty checkpoint"))?;
    if header != FORMAT_VERSION {
        return Err(Error::CheckpointVersion(header.to_string()));
    }
    let meta = parse_meta(
        lines
            .next()
            .ok_or_else(|| bad(2, "missing metadata line"))?,
    )?;
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 3;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [obs, action, value] = parts[..] else {
            return Err(bad(
                lineno,
                format!("expected `obs action value`, got {line:?}"),
            ));
        };
        let obs: usize = obs
            .parse()
            .map_err(|_| bad(lineno, format!("bad observation index {obs:?}")))?;
        let action: usize = action
            .parse()
            .map_err(|_| bad(lineno, format!("bad action {action:?}")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| bad(lineno, format!("bad value {value:?}")))?;
        if obs >= N_OBSERVATIONS || action >= N_ACTIONS {
            return Err(bad(lineno, format!("entry ({obs}, {action}) out of range")));
        }
        if !value.is_finite() {
            return Err(bad(lineno, format!("non-finite value {value}")));
        }
        entries.push((obs, action, value));
    }
    Ok(Checkpoint {
        format_version: FORMAT_VERSION.to_string(),
        meta,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            params: SarsaParams::default(),
            episodes_trained: 2000,
            master_seed: 42,
        }
    }

    #[test]
    fn empty_table_is_two_lines() {
        let text = format_checkpoint(&QTable::default(), &meta());
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next(), Some(FORMAT_VERSION));
        let ck = parse_checkpoint(&text).unwrap();
        assert!(ck.entries.is_empty());
        assert_eq!(ck.meta, meta());
    }

    #[test]
    fn single_entry_is_one_data_line() {
        let mut q = QTable::default();
        q.set(0, 0, -0.1);
        let text = format_checkpoint(&q, &meta());
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "0 0 -0.1");
    }

    #[test]
    fn corrupt_line_is_named() {
        let mut text = format_checkpoint(&QTable::default(), &meta());
        text.push_str("1 2 -0.5\n3 x 0.1\n");
        let err = parse_checkpoint(&text).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { line: 4, .. }), "{err}");
    }

    #[test]
    fn wrong_version_rejected() {
        let text = format_checkpoint(&QTable::default(), &meta()).replace("v1", "v2");
        assert!(matches!(
            parse_checkpoint(&text),
            Err(Error::CheckpointVersion(_))
        ));
    }

    #[test]
    fn out_of_range_entry_rejected() {
        let mut text = format_checkpoint(&QTable::default(), &meta());
        text.push_str("43740 0 -1\n");
        assert!(matches!(
            parse_checkpoint(&text),
            Err(Error::Checkpoint { line: 3, .. })
        ));
    }

    #[test]
    fn negative_zero_survives() {
        let mut q = QTable::default();
        q.set(5, 1, -0.0);
        let back = parse_checkpoint(&format_checkpoint(&q, &meta()))
            .unwrap()
            .to_q_table();
        assert_eq!(back.get(5, 1).to_bits(), (-0.0f64).to_bits());
    }
}
