//! Core algorithms for stealing embedding-based recommender models.
//!
//! The crate is `no_std` (it needs `alloc` only) and contains everything that
//! is pure computation: interaction datasets and their splits, the BPR / LMF /
//! GMF recommenders, ranking losses with hand-written gradients, the Adam
//! optimizer, the clone-training attacks (PTD, PTA, PTQ, PTAQ, the list-only
//! QSD adaptation and the pretraining variant), a budget-limited query oracle
//! with the popularity-mixing defense, and the Agreement / Recall metrics.
//!
//! File formats, configuration and the experiment CLI live in the `recsteal`
//! crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod attack;
pub mod data;
mod error;
pub mod gradcheck;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod synth;
pub mod train;

pub use attack::{
    AttackMethod, AttentionParams, CloneModel, FusedCloneModel, PairLoss, StealingLossSpec,
};
pub use data::{DataSplit, IdMap, InteractionDataset, ItemMask, NegativeSample};
pub use error::{Error, Result};
pub use model::{EmbeddingModel, GmfHead, Matrix, ModelKind, RecommendationList, Recommender};
pub use optim::AdamState;
pub use oracle::{DefenseConfig, QueryOracle, QueryRecord};
pub use synth::SyntheticConfig;
pub use train::{Gradients, TrainConfig, Trainable, TrainingSummary};
