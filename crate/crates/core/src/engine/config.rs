use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GuideError, Result};
use crate::kernel::{ShardView, DEFAULT_EMBEDDING_DIM, DEFAULT_LEVELS};
use crate::model::{Hyper, ModelKind};
use crate::partition::GpfbConfig;
use crate::repair::RepairStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partitioner {
    Fast,
    #[default]
    Sr,
    Random,
}

impl fmt::Display for Partitioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partitioner::Fast => "fast",
            Partitioner::Sr => "sr",
            Partitioner::Random => "random",
        })
    }
}

impl FromStr for Partitioner {
    type Err = GuideError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fast" => Ok(Partitioner::Fast),
            "sr" => Ok(Partitioner::Sr),
            "random" => Ok(Partitioner::Random),
            other => Err(GuideError::Argument(format!(
                "unknown partitioner {other:?} (expected fast, sr or random)"
            ))),
        }
    }
}

/// Which shards a node removal touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnlearnMode {
    /// Every shard holding a neighbor of the removed node loses the
    /// synthetic neighbor that stood in for it and is retrained.
    #[default]
    Strict,
    /// Only the removed node's own shard is rebuilt. Other shards keep a
    /// synthetic neighbor whose existence still reflects the removed node.
    Lax,
}

impl fmt::Display for UnlearnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnlearnMode::Strict => "strict",
            UnlearnMode::Lax => "lax",
        })
    }
}

impl FromStr for UnlearnMode {
    type Err = GuideError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(UnlearnMode::Strict),
            "lax" => Ok(UnlearnMode::Lax),
            other => Err(GuideError::Argument(format!(
                "unknown unlearning mode {other:?} (expected strict or lax)"
            ))),
        }
    }
}

/// Every knob of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub num_shards: usize,
    pub partitioner: Partitioner,
    /// Solver settings; `gpfb.seed` is overridden by `seed`.
    pub gpfb: GpfbConfig,
    /// `None` trains on the unrepaired induced subgraphs.
    pub strategy: Option<RepairStrategy>,
    pub tau: f64,
    pub model: ModelKind,
    pub hyper: Hyper,
    pub d_emb: usize,
    pub max_level: usize,
    pub shard_view: ShardView,
    pub mode: UnlearnMode,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            num_shards: 4,
            partitioner: Partitioner::Sr,
            gpfb: GpfbConfig::default(),
            strategy: Some(RepairStrategy::MixUp),
            tau: 1.0,
            model: ModelKind::Sgc,
            hyper: Hyper::default(),
            d_emb: DEFAULT_EMBEDDING_DIM,
            max_level: DEFAULT_LEVELS,
            shard_view: ShardView::Repaired,
            mode: UnlearnMode::Strict,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| GuideError::Argument(format!("invalid value {value:?} for {key}")))
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_shards < 2 {
            return Err(GuideError::Argument(format!(
                "need at least 2 shards, got {} (one shard makes every request a full retrain)",
                self.num_shards
            )));
        }
        self.gpfb.validate()?;
        self.hyper.validate()?;
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(GuideError::Argument(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.d_emb == 0 {
            return Err(GuideError::Argument("embedding dimension must be positive".into()));
        }
        if self.max_level > 20 {
            return Err(GuideError::Argument(format!(
                "pyramid depth {} is too large (at most 20)",
                self.max_level
            )));
        }
        Ok(())
    }

    /// Sets one option by name, as used in `key=value` config files.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "v" | "num_shards" => self.num_shards = parse(key, value)?,
            "partitioner" => self.partitioner = value.parse()?,
            "alpha" => self.gpfb.alpha = parse(key, value)?,
            "beta" => self.gpfb.beta = parse(key, value)?,
            "max_outer_iters" => self.gpfb.max_outer_iters = parse(key, value)?,
            "max_inner_iters" => self.gpfb.max_inner_iters = parse(key, value)?,
            "max_y_iters" => self.gpfb.max_y_iters = parse(key, value)?,
            "tol" => self.gpfb.tol = parse(key, value)?,
            "shift_gamma" => {
                self.gpfb.shift_gamma = match value {
                    "auto" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "strategy" => {
                self.strategy = match value.to_ascii_lowercase().as_str() {
                    "none" => None,
                    v => Some(v.parse()?),
                }
            }
            "tau" => self.tau = parse(key, value)?,
            "model" => self.model = value.parse()?,
            "lr" | "learning_rate" => self.hyper.learning_rate = parse(key, value)?,
            "epochs" => self.hyper.epochs = parse(key, value)?,
            "weight_decay" => self.hyper.weight_decay = parse(key, value)?,
            "k" | "sgc_k" => self.hyper.k = parse(key, value)?,
            "hidden" => self.hyper.hidden = parse(key, value)?,
            "d_emb" => self.d_emb = parse(key, value)?,
            "l_max" | "max_level" => self.max_level = parse(key, value)?,
            "shard_view" => {
                self.shard_view = match value.to_ascii_lowercase().as_str() {
                    "repaired" => ShardView::Repaired,
                    "raw" => ShardView::Raw,
                    _ => return Err(GuideError::Argument(format!("invalid value {value:?} for {key}"))),
                }
            }
            "mode" => self.mode = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(GuideError::Argument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, path: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| GuideError::Parse {
                path: path.to_string(),
                line: i + 1,
                msg: "expected key=value".into(),
            })?;
            self.set(k, v).map_err(|e| GuideError::Parse {
                path: path.to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }
}
