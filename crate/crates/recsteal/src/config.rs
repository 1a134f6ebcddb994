//! Experiment configuration (JSON, snake_case field names).

use std::fs;
use std::path::{Path, PathBuf};

use recsteal_core::synth::SyntheticConfig;
use recsteal_core::{AttackMethod, ModelKind, StealingLossSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::io::{Format, LoadOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticConfig),
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<Format>,
        #[serde(default)]
        delimiter: Option<String>,
        #[serde(default)]
        header: Option<bool>,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticConfig::default())
    }
}

impl DatasetSource {
    pub fn load_options(&self) -> Option<(&Path, LoadOptions)> {
        match self {
            DatasetSource::Synthetic(_) => None,
            DatasetSource::File {
                path,
                format,
                delimiter,
                header,
            } => Some((
                path.as_path(),
                LoadOptions {
                    format: *format,
                    delimiter: delimiter.clone(),
                    header: *header,
                },
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseSettings {
    pub mix_count: usize,
    pub pool_size: usize,
}

impl Default for DefenseSettings {
    fn default() -> Self {
        Self {
            mix_count: 5,
            pool_size: 100,
        }
    }
}

/// Values swept as a cartesian product; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub k: Vec<usize>,
    pub available_fraction: Vec<f64>,
    pub aux_fraction: Vec<f64>,
    pub overlap_ratio: Vec<f64>,
    pub query_budget: Vec<f64>,
    pub mix_count: Vec<usize>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
            && self.available_fraction.is_empty()
            && self.aux_fraction.is_empty()
            && self.overlap_ratio.is_empty()
            && self.query_budget.is_empty()
            && self.mix_count.is_empty()
    }
}

/// Desk-scale training defaults. The published settings (learning rate
/// 0.001, batch 2048) take one or two optimizer steps per epoch on a few
/// thousand interactions, so the defaults here use smaller batches and a
/// larger step.
pub fn desk_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        batch_size: 256,
        embedding_dim: 64,
        epochs: 40,
        early_stop_tol: 0.0,
        ..TrainConfig::default()
    }
}

pub fn desk_finetune() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        epochs: 60,
        ..desk_train()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSource,
    pub min_interactions: usize,
    /// Fixes the data split across seeds; by default each seed splits anew.
    pub split_seed: Option<u64>,
    pub holdout_ratio: f64,
    pub available_fraction: f64,
    /// Share of auxiliary users the auxiliary model trains on.
    pub aux_fraction: f64,
    /// Share of target items whose auxiliary embeddings may be fused.
    pub overlap_ratio: f64,
    pub target_kind: ModelKind,
    pub clone_kind: ModelKind,
    pub k: usize,
    pub attacks: Vec<AttackMethod>,
    pub stealing_loss: StealingLossSpec,
    pub qsd_loss: StealingLossSpec,
    pub train_attention: bool,
    /// Distinct-user query budget as a share of the available users; those
    /// users are the ones queried. `None` queries every available user.
    /// Agreement is still measured over all available users.
    pub query_budget: Option<f64>,
    pub target_train: TrainConfig,
    pub aux_train: TrainConfig,
    pub clone_train: TrainConfig,
    pub finetune: TrainConfig,
    pub defense: Option<DefenseSettings>,
    pub sweep: SweepAxes,
    pub seeds: Vec<u64>,
    /// Record wall-clock seconds per row (makes output non-reproducible).
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            dataset: DatasetSource::default(),
            min_interactions: 5,
            split_seed: None,
            holdout_ratio: 0.2,
            available_fraction: 0.1,
            aux_fraction: 1.0,
            overlap_ratio: 1.0,
            target_kind: ModelKind::Bpr,
            clone_kind: ModelKind::Bpr,
            k: 50,
            attacks: vec![
                AttackMethod::Qsd,
                AttackMethod::Ptd,
                AttackMethod::Ptq,
                AttackMethod::Pta,
                AttackMethod::Ptaq,
            ],
            stealing_loss: StealingLossSpec::default(),
            qsd_loss: StealingLossSpec::qsd_default(),
            train_attention: true,
            query_budget: Some(0.3),
            target_train: desk_train(),
            aux_train: desk_train(),
            clone_train: desk_train(),
            finetune: desk_finetune(),
            defense: None,
            sweep: SweepAxes::default(),
            seeds: (0..5).collect(),
            record_wall_time: false,
        }
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(AppError::Config(format!(
            "{name} must be in (0, 1], got {v}"
        )))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| AppError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(AppError::Config("seeds must not be empty".into()));
        }
        if self.attacks.is_empty() {
            return Err(AppError::Config("attacks must not be empty".into()));
        }
        if self.min_interactions == 0 {
            return Err(AppError::Config("min_interactions must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_ratio) {
            return Err(AppError::Config("holdout_ratio must be in [0, 1)".into()));
        }
        for k in std::iter::once(self.k).chain(self.sweep.k.iter().copied()) {
            if k == 0 {
                return Err(AppError::Config("k must be >= 1".into()));
            }
        }
        for (name, base, axis) in [
            (
                "available_fraction",
                self.available_fraction,
                &self.sweep.available_fraction,
            ),
            ("aux_fraction", self.aux_fraction, &self.sweep.aux_fraction),
            (
                "overlap_ratio",
                self.overlap_ratio,
                &self.sweep.overlap_ratio,
            ),
        ] {
            check_fraction(name, base)?;
            for &v in axis {
                check_fraction(name, v)?;
            }
        }
        for &q in self.query_budget.iter().chain(&self.sweep.query_budget) {
            check_fraction("query_budget", q)?;
        }
        for c in [
            &self.target_train,
            &self.aux_train,
            &self.clone_train,
            &self.finetune,
        ] {
            c.validate()?;
        }
        if self.clone_train.embedding_dim != self.aux_train.embedding_dim {
            return Err(AppError::Config(
                "aux_train and clone_train must share embedding_dim".into(),
            ));
        }
        self.stealing_loss.validate()?;
        self.qsd_loss.validate()?;
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        Ok(())
    }
}
