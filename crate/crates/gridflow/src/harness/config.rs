//! Run configuration: paper-mirroring defaults, flat `key = value` config
//! files, and CLI-style overrides.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gflownet::Objective;
use crate::hypergrid::{Hypergrid, RewardParams};
use crate::replay::Regime;

/// Everything a single training run needs. Defaults mirror the reference
/// experiment: a 4-dimensional side-8 grid, rewards (1e-3, 0.5, 2),
/// flow matching, Adam at lr 0.001, 16 online + 16 replayed trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ndim: usize,
    /// Side length of the grid (config key `H`).
    pub side: u16,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub objective: Objective,
    pub regime: Regime,
    pub batch_online: usize,
    pub batch_replay: usize,
    pub buffer_capacity: usize,
    pub lr: f64,
    pub epsilon: f64,
    pub train_steps: u64,
    pub eval_every: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ndim: 4,
            side: 8,
            r0: 1e-3,
            r1: 0.5,
            r2: 2.0,
            objective: Objective::FlowMatching,
            regime: Regime::Rprs,
            batch_online: 16,
            batch_replay: 16,
            buffer_capacity: 1000,
            lr: 0.001,
            epsilon: 0.05,
            train_steps: 2500,
            eval_every: 50,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with a config file, then with `--set` overrides.
    pub fn load(file: Option<&Path>, sets: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        for (key, value) in sets {
            cfg.apply_set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply a flat `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected key = value, got {:?}",
                    path.display(),
                    lineno + 1,
                    raw
                ))
            })?;
            self.apply_set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one field by its config key.
    pub fn apply_set(&mut self, key: &str, value: &str) -> Result<()> {
        if value.is_empty() {
            return Err(Error::Config(format!("key {:?} is missing a value", key)));
        }
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::Config(format!("key {:?}: bad value {:?} ({})", key, value, e)))
        }
        match key {
            "ndim" => self.ndim = num(key, value)?,
            "H" => self.side = num(key, value)?,
            "R0" => self.r0 = num(key, value)?,
            "R1" => self.r1 = num(key, value)?,
            "R2" => self.r2 = num(key, value)?,
            "objective" => self.objective = value.parse()?,
            "regime" => self.regime = value.parse()?,
            "batch_online" => self.batch_online = num(key, value)?,
            "batch_replay" => self.batch_replay = num(key, value)?,
            "buffer_capacity" => self.buffer_capacity = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "train_steps" => self.train_steps = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key {:?}", other))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.env()?; // ndim / H checks
        self.reward_params()?; // 0 < R0 < R1 < R2
        self.env()?.num_states()?; // the L1 evaluation must be enumerable
        if self.batch_online == 0 {
            return Err(Error::Config("batch_online must be at least 1".into()));
        }
        match (self.regime, self.batch_replay) {
            (Regime::None, 0) => {}
            (Regime::None, _) => {
                return Err(Error::Config(
                    "batch_replay must be 0 when regime = none".into(),
                ))
            }
            (_, 0) => {
                return Err(Error::Config(
                    "batch_replay must be positive unless regime = none".into(),
                ))
            }
            _ => {}
        }
        if self.buffer_capacity == 0 {
            return Err(Error::Config("buffer_capacity must be at least 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must be in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.train_steps == 0 {
            return Err(Error::Config("train_steps must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn env(&self) -> Result<Hypergrid> {
        Hypergrid::new(self.ndim, self.side)
    }

    pub fn reward_params(&self) -> Result<RewardParams> {
        RewardParams::new(self.r0, self.r1, self.r2)
    }
}

/// Split a `KEY=VALUE` CLI argument.
pub fn parse_set_arg(arg: &str) -> Result<(String, String)> {
    arg.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {:?}", arg)))
}
