//! `key=value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::trainer::{FeedbackRange, Regularization, TrainConfig, WriteBack};

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "task",
    // paths
    "input",
    "output",
    "buffer",
    "model_in",
    "model_out",
    "predictions",
    "ratings",
    "train_ratings",
    "taxonomy",
    // training
    "eta",
    "lam_p",
    "lam_q",
    "lam_bg",
    "lam_bu",
    "lam_bi",
    "num_factor",
    "epochs",
    "seed",
    "loss",
    "base_score",
    "init_sigma",
    "feedback_start",
    "feedback_end",
    "feedback_writeback",
    "queue_capacity",
    // buffering
    "num_global",
    "num_user",
    "num_item",
    // evaluation
    "metric",
    // feature generation
    "encoding",
    "num_users",
    "num_items",
    "num_tracks",
    "time_start",
    "time_end",
    "support",
    "max_pairs",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `key=value` lines; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.apply(line).map_err(|e| {
                Error::Config(format!(
                    "line {}: {}",
                    n + 1,
                    e.to_string().trim_start_matches("config: ")
                ))
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Applies one `key=value` assignment, replacing any earlier value.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| {
                    Error::Config(format!(
                        "invalid {key} `{v}`: {}",
                        e.to_string().trim_start_matches("config: ")
                    ))
                })
            })
            .transpose()
    }

    pub fn parse_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    /// Rejects a `task` key that names a different subcommand.
    pub fn check_task(&self, task: &str) -> Result<()> {
        match self.get("task") {
            Some(t) if t != task => Err(Error::Config(format!(
                "config is for task `{t}`, not `{task}`"
            ))),
            _ => Ok(()),
        }
    }

    pub fn loss(&self) -> Result<LossKind> {
        self.parse_or("loss", LossKind::L2Identity)
    }

    pub fn feedback_range(&self) -> Result<Option<FeedbackRange>> {
        match (
            self.parse::<u32>("feedback_start")?,
            self.parse::<u32>("feedback_end")?,
        ) {
            (None, None) => Ok(None),
            (Some(s), Some(e)) if s <= e => Ok(Some(FeedbackRange::new(s, e))),
            (Some(s), Some(e)) => Err(Error::Config(format!(
                "feedback_start {s} exceeds feedback_end {e}"
            ))),
            _ => Err(Error::Config(
                "feedback_start and feedback_end must be set together".into(),
            )),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        Ok(TrainConfig {
            eta: self.parse_or("eta", d.eta)?,
            lambda: Regularization {
                user_factor: self.parse_or("lam_p", d.lambda.user_factor)?,
                item_factor: self.parse_or("lam_q", d.lambda.item_factor)?,
                global_bias: self.parse_or("lam_bg", d.lambda.global_bias)?,
                user_bias: self.parse_or("lam_bu", d.lambda.user_bias)?,
                item_bias: self.parse_or("lam_bi", d.lambda.item_bias)?,
            },
            num_factor: self.parse_or("num_factor", d.num_factor)?,
            epochs: self.parse_or("epochs", d.epochs)?,
            seed: self.parse_or("seed", d.seed)?,
            init_sigma: self.parse_or("init_sigma", d.init_sigma)?,
            feedback_range: self.feedback_range()?,
            writeback: self.parse_or("feedback_writeback", WriteBack::default())?,
        })
    }
}
