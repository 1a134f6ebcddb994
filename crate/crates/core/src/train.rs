//! Mini-batch training of embedding recommenders.
//!
//! Models expose their parameters as an ordered list of flat blocks through
//! [`Trainable`]; the loop in [`train_from`] samples negatives, accumulates
//! hand-derived gradients for one batch, and applies an Adam step. The same
//! loop trains plain models and fused clones, which is what makes a fused
//! clone with fusion disabled everywhere reproduce a plain clone bit for bit.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::InteractionDataset;
use crate::loss::{loss_bpr, loss_bpr_grad, loss_logistic, loss_logistic_grad};
use crate::model::{EmbeddingModel, ModelKind, Recommender};
use crate::optim::AdamState;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub embedding_dim: usize,
    pub epochs: usize,
    /// `None` picks 1 for BPR and 4 for the pointwise kinds.
    pub negatives_per_positive: Option<usize>,
    pub margin: f64,
    pub l2_reg: f64,
    pub rng_seed: u64,
    /// Stop once the epoch-mean loss changes by less than this; 0 disables.
    pub early_stop_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 2048,
            embedding_dim: 64,
            epochs: 50,
            negatives_per_positive: None,
            margin: 0.5,
            l2_reg: 0.0,
            rng_seed: 0,
            early_stop_tol: 1e-5,
        }
    }
}

impl TrainConfig {
    /// A learning rate of exactly zero is accepted (it freezes training).
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.embedding_dim == 0 {
            return Err(Error::invalid("embedding_dim must be >= 1"));
        }
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(Error::invalid("margin must be >= 0"));
        }
        if self.l2_reg.is_nan() || self.l2_reg < 0.0 {
            return Err(Error::invalid("l2_reg must be >= 0"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn negatives_for(&self, kind: ModelKind) -> usize {
        self.negatives_per_positive.unwrap_or(match kind {
            ModelKind::Bpr => 1,
            ModelKind::Lmf | ModelKind::Gmf => 4,
        })
    }
}

/// Gradient buffers laid out like a model's parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(layout: &[usize]) -> Self {
        Self {
            blocks: layout.iter().map(|&n| alloc::vec![0.0; n]).collect(),
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.blocks[i]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.blocks[i]
    }

    pub fn clear(&mut self) {
        for b in &mut self.blocks {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Concatenation of all blocks.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }
}

/// A scorer with differentiable, block-structured parameters.
pub trait Trainable: Recommender {
    fn param_layout(&self) -> Vec<usize>;
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    /// Adds `upstream * ∂predict(user, item)/∂θ` into `grads`.
    fn backprop(&self, user: usize, item: usize, upstream: f64, grads: &mut Gradients);
    /// Adds the gradient of `coef * (|p_user|² + |q_item|²)` and returns the
    /// penalty value.
    fn l2_backprop(&self, user: usize, item: usize, coef: f64, grads: &mut Gradients) -> f64;
    fn params_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|b| b.iter().all(|x| x.is_finite()))
    }
}

/// Block indices of a plain embedding model.
pub(crate) const USERS: usize = 0;
pub(crate) const ITEMS: usize = 1;
pub(crate) const HEAD_W: usize = 2;
pub(crate) const HEAD_B: usize = 3;

/// Scatters `upstream * ∂s/∂(p, q, head)` for `s = score_vectors(p, q)`.
#[inline]
pub(crate) fn backprop_base(
    model: &EmbeddingModel,
    user: usize,
    item_block: usize,
    item: usize,
    q: &[f64],
    upstream: f64,
    grads: &mut Gradients,
) {
    let d = model.dim();
    let p = model.user_embeddings().row(user);
    match model.head() {
        None => {
            let gp = &mut grads.block_mut(USERS)[user * d..(user + 1) * d];
            for k in 0..d {
                gp[k] += upstream * q[k];
            }
            let gq = &mut grads.block_mut(item_block)[item * d..(item + 1) * d];
            for k in 0..d {
                gq[k] += upstream * p[k];
            }
        }
        Some(h) => {
            let w = &h.weights;
            let gp = &mut grads.block_mut(USERS)[user * d..(user + 1) * d];
            for k in 0..d {
                gp[k] += upstream * w[k] * q[k];
            }
            let gq = &mut grads.block_mut(item_block)[item * d..(item + 1) * d];
            for k in 0..d {
                gq[k] += upstream * w[k] * p[k];
            }
            let gw = grads.block_mut(HEAD_W);
            for k in 0..d {
                gw[k] += upstream * p[k] * q[k];
            }
            grads.block_mut(HEAD_B)[0] += upstream;
        }
    }
}

pub(crate) fn l2_rows(
    model: &EmbeddingModel,
    user: usize,
    item_block: usize,
    item: usize,
    q: &[f64],
    coef: f64,
    grads: &mut Gradients,
) -> f64 {
    let d = model.dim();
    let p = model.user_embeddings().row(user);
    let mut penalty = 0.0;
    let gp = &mut grads.block_mut(USERS)[user * d..(user + 1) * d];
    for k in 0..d {
        gp[k] += 2.0 * coef * p[k];
        penalty += p[k] * p[k];
    }
    let gq = &mut grads.block_mut(item_block)[item * d..(item + 1) * d];
    for k in 0..d {
        gq[k] += 2.0 * coef * q[k];
        penalty += q[k] * q[k];
    }
    coef * penalty
}

impl Trainable for EmbeddingModel {
    fn param_layout(&self) -> Vec<usize> {
        let mut layout = alloc::vec![
            self.user_embeddings().as_slice().len(),
            self.item_embeddings().as_slice().len()
        ];
        if self.head().is_some() {
            layout.push(self.dim());
            layout.push(1);
        }
        layout
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut out = alloc::vec![
            self.user_embeddings().as_slice(),
            self.item_embeddings().as_slice()
        ];
        if let Some(h) = self.head() {
            out.push(&h.weights);
            out.push(core::slice::from_ref(&h.bias));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let (users, items, head) = self.parts_mut();
        let mut out = alloc::vec![users.as_mut_slice(), items.as_mut_slice()];
        if let Some(h) = head {
            out.push(&mut h.weights[..]);
            out.push(core::slice::from_mut(&mut h.bias));
        }
        out
    }

    fn backprop(&self, user: usize, item: usize, upstream: f64, grads: &mut Gradients) {
        let q = self.item_embeddings().row(item);
        backprop_base(self, user, ITEMS, item, q, upstream, grads);
    }

    fn l2_backprop(&self, user: usize, item: usize, coef: f64, grads: &mut Gradients) -> f64 {
        let q = self.item_embeddings().row(item);
        l2_rows(self, user, ITEMS, item, q, coef, grads)
    }
}

/// What the training loop minimizes over `(user, positive)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Mean BPR loss over `(user, positive, negative)` triplets.
    Pairwise { negatives: usize },
    /// Mean logistic loss over positives (label 1) and sampled negatives
    /// (label 0).
    Pointwise { negatives: usize },
}

impl Objective {
    pub fn for_kind(kind: ModelKind, cfg: &TrainConfig) -> Self {
        let negatives = cfg.negatives_for(kind);
        match kind {
            ModelKind::Bpr => Objective::Pairwise { negatives },
            ModelKind::Lmf | ModelKind::Gmf => Objective::Pointwise { negatives },
        }
    }

    fn terms_per_positive(self) -> usize {
        match self {
            Objective::Pairwise { negatives } => negatives,
            Objective::Pointwise { negatives } => 1 + negatives,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Trains a fresh model of `kind` on `ds`.
pub fn train_model(
    kind: ModelKind,
    ds: &InteractionDataset,
    cfg: &TrainConfig,
) -> Result<EmbeddingModel> {
    train_model_observed(kind, ds, cfg, &mut |_| {}).map(|(m, _)| m)
}

pub fn train_model_observed(
    kind: ModelKind,
    ds: &InteractionDataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<(EmbeddingModel, TrainingSummary)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::NoInteractions);
    }
    let mut model = EmbeddingModel::init_random(
        kind,
        ds.num_users(),
        ds.num_items(),
        cfg.embedding_dim,
        cfg.rng_seed,
    )?;
    let summary = train_from(
        &mut model,
        ds,
        cfg,
        Objective::for_kind(kind, cfg),
        observer,
    )?;
    Ok((model, summary))
}

/// Runs `cfg.epochs` epochs of shuffled mini-batch Adam on `model`.
pub fn train_from<M: Trainable + ?Sized>(
    model: &mut M,
    ds: &InteractionDataset,
    cfg: &TrainConfig,
    objective: Objective,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<TrainingSummary> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::NoInteractions);
    }
    if ds.num_users() > model.num_users() || ds.num_items() > model.num_items() {
        return Err(Error::ShapeMismatch {
            expected: alloc::format!("model covering {}x{}", ds.num_users(), ds.num_items()),
            found: alloc::format!("{}x{}", model.num_users(), model.num_items()),
        });
    }
    let layout = model.param_layout();
    let mut adam = AdamState::new(&layout);
    let mut grads = Gradients::zeros(&layout);
    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, stream::SAMPLING));
    let mut pairs = ds.pairs();
    let terms = objective.terms_per_positive();
    let empty = alloc::collections::BTreeSet::new();
    let mut summary = TrainingSummary::default();
    let mut previous: Option<f64> = None;

    for epoch in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_terms = 0usize;
        for batch in pairs.chunks(cfg.batch_size) {
            grads.clear();
            let weight = 1.0 / (batch.len() * terms) as f64;
            for &(u, i) in batch {
                let r_pos = model.predict(u, i);
                match objective {
                    Objective::Pairwise { negatives } => {
                        let negs = ds.sample_negatives(u, negatives, &empty, &mut rng)?;
                        for &j in &negs.items {
                            let r_neg = model.predict(u, j);
                            epoch_loss += loss_bpr(r_pos, r_neg);
                            let g = weight * loss_bpr_grad(r_pos, r_neg);
                            model.backprop(u, i, g, &mut grads);
                            model.backprop(u, j, -g, &mut grads);
                            if cfg.l2_reg > 0.0 {
                                epoch_loss +=
                                    model.l2_backprop(u, i, cfg.l2_reg * weight, &mut grads)
                                        / weight;
                                epoch_loss +=
                                    model.l2_backprop(u, j, cfg.l2_reg * weight, &mut grads)
                                        / weight;
                            }
                        }
                    }
                    Objective::Pointwise { negatives } => {
                        epoch_loss += loss_logistic(r_pos, true);
                        model.backprop(u, i, weight * loss_logistic_grad(r_pos, true), &mut grads);
                        if cfg.l2_reg > 0.0 {
                            epoch_loss +=
                                model.l2_backprop(u, i, cfg.l2_reg * weight, &mut grads) / weight;
                        }
                        let negs = ds.sample_negatives(u, negatives, &empty, &mut rng)?;
                        for &j in &negs.items {
                            let r_neg = model.predict(u, j);
                            epoch_loss += loss_logistic(r_neg, false);
                            model.backprop(
                                u,
                                j,
                                weight * loss_logistic_grad(r_neg, false),
                                &mut grads,
                            );
                            if cfg.l2_reg > 0.0 {
                                epoch_loss +=
                                    model.l2_backprop(u, j, cfg.l2_reg * weight, &mut grads)
                                        / weight;
                            }
                        }
                    }
                }
            }
            epoch_terms += batch.len() * terms;
            let mut params = model.params_mut();
            adam.step(&mut params, &grads, cfg.learning_rate)?;
        }
        let mean_loss = epoch_loss / epoch_terms.max(1) as f64;
        if !mean_loss.is_finite() || !model.params_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: mean_loss,
            });
        }
        observer(&EpochStats { epoch, mean_loss });
        summary.losses.push(mean_loss);
        summary.epochs_run = epoch + 1;
        summary.final_loss = mean_loss;
        if let Some(prev) = previous {
            if cfg.early_stop_tol > 0.0 && (prev - mean_loss).abs() < cfg.early_stop_tol {
                summary.stopped_early = true;
                break;
            }
        }
        previous = Some(mean_loss);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny() -> InteractionDataset {
        InteractionDataset::from_index_sets(2, 3, vec![(0, vec![0]), (1, vec![1, 2])]).unwrap()
    }

    #[test]
    fn zero_lr_keeps_init() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            embedding_dim: 4,
            negatives_per_positive: Some(1),
            ..TrainConfig::default()
        };
        for kind in ModelKind::ALL {
            let trained = train_model(kind, &tiny(), &cfg).unwrap();
            let init = EmbeddingModel::init_random(kind, 2, 3, 4, cfg.rng_seed).unwrap();
            assert_eq!(trained, init);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 20,
            embedding_dim: 4,
            batch_size: 2,
            rng_seed: 11,
            negatives_per_positive: Some(1),
            ..TrainConfig::default()
        };
        for kind in ModelKind::ALL {
            assert_eq!(
                train_model(kind, &tiny(), &cfg).unwrap(),
                train_model(kind, &tiny(), &cfg).unwrap()
            );
        }
    }

    #[test]
    fn bpr_separates_training_set() {
        let ds = tiny();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 500,
            embedding_dim: 8,
            batch_size: 2,
            early_stop_tol: 0.0,
            rng_seed: 3,
            ..TrainConfig::default()
        };
        let m = train_model(ModelKind::Bpr, &ds, &cfg).unwrap();
        for (u, pos) in ds.iter() {
            for i in 0..3 {
                if pos.contains(&i) {
                    continue;
                }
                for &p in pos {
                    assert!(m.predict(u, p) > m.predict(u, i), "user {u}: {p} vs {i}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train_model(ModelKind::Bpr, &tiny(), &bad).is_err());
        let bad = TrainConfig {
            margin: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
