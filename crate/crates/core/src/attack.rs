//! Clone construction from the attacker's knowledge.
//!
//! * PTD: train a clone on the available slice of the target data.
//! * PTA: as PTD, but item embeddings are an attention-weighted fusion of
//!   the clone's own embeddings and frozen embeddings from a model trained on
//!   auxiliary data.
//! * PTQ / PTAQ: PTD / PTA followed by fine-tuning on the target's
//!   recommendation lists with the stealing loss.
//! * QSD (adapted): a random clone trained on recommendation lists only.
//! * PTA(Pre): auxiliary item embeddings used as the clone's initial items.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::data::{sample_excluding, InteractionDataset, ItemMask, NegativeSample};
use crate::loss::{loss_bpr, loss_bpr_grad, loss_hinge, loss_hinge_grad};
use crate::math::exp;
use crate::model::{
    check_index, EmbeddingModel, Matrix, ModelKind, RecommendationList, Recommender,
};
use crate::optim::AdamState;
use crate::oracle::QueryOracle;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::train::{
    backprop_base, l2_rows, train_from, EpochStats, Gradients, Objective, TrainConfig, Trainable,
    TrainingSummary, HEAD_B, HEAD_W, ITEMS, USERS,
};
use crate::{Error, Result};

/// Single-layer scorer shared by both attention branches.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttentionParams {
    pub w: Vec<f64>,
    pub b: f64,
}

impl AttentionParams {
    /// `w = 0, b = 0`, i.e. equal mixing.
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: alloc::vec![0.0; dim],
            b: 0.0,
        }
    }
}

#[inline]
fn relu_score(att: &AttentionParams, p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..p.len() {
        let h = p[k] * q[k];
        if h > 0.0 {
            acc += att.w[k] * h;
        }
    }
    acc + att.b
}

/// Softmax weights `(α′, β′)` of the clone and auxiliary embeddings.
///
/// `α = w·ReLU(p ⊙ q_c) + b`, `β = w·ReLU(p ⊙ q_a) + b`.
pub fn attention_coefficients(
    p: &[f64],
    q_c: &[f64],
    q_a: &[f64],
    att: &AttentionParams,
) -> (f64, f64) {
    let alpha = relu_score(att, p, q_c);
    let beta = relu_score(att, p, q_a);
    let m = alpha.max(beta);
    let ea = exp(alpha - m);
    let eb = exp(beta - m);
    let s = ea + eb;
    (ea / s, eb / s)
}

/// Clone whose item embeddings fuse its own and frozen auxiliary rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusedCloneModel {
    base: EmbeddingModel,
    aux_items: Matrix,
    attention: AttentionParams,
    eligible: ItemMask,
    attention_trainable: bool,
}

impl FusedCloneModel {
    pub fn new(base: EmbeddingModel, aux_items: Matrix, eligible: ItemMask) -> Result<Self> {
        let q = base.item_embeddings();
        if aux_items.rows() != q.rows() || aux_items.cols() != q.cols() {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("auxiliary items {}x{}", q.rows(), q.cols()),
                found: alloc::format!("{}x{}", aux_items.rows(), aux_items.cols()),
            });
        }
        if eligible.len() != q.rows() {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("mask over {} items", q.rows()),
                found: alloc::format!("{}", eligible.len()),
            });
        }
        let dim = base.dim();
        Ok(Self {
            base,
            aux_items,
            attention: AttentionParams::zeros(dim),
            eligible,
            attention_trainable: true,
        })
    }

    /// Keeps `w, b` fixed during training when `false`.
    pub fn set_attention_trainable(&mut self, trainable: bool) {
        self.attention_trainable = trainable;
    }

    pub fn attention_trainable(&self) -> bool {
        self.attention_trainable
    }

    pub fn set_attention(&mut self, att: AttentionParams) -> Result<()> {
        if att.w.len() != self.base.dim() {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("attention of length {}", self.base.dim()),
                found: alloc::format!("{}", att.w.len()),
            });
        }
        self.attention = att;
        Ok(())
    }

    pub fn base(&self) -> &EmbeddingModel {
        &self.base
    }

    pub fn into_base(self) -> EmbeddingModel {
        self.base
    }

    pub fn aux_items(&self) -> &Matrix {
        &self.aux_items
    }

    pub fn attention(&self) -> &AttentionParams {
        &self.attention
    }

    pub fn mask(&self) -> &ItemMask {
        &self.eligible
    }

    pub fn kind(&self) -> ModelKind {
        self.base.kind()
    }

    /// Weights for `(user, item)`; `(1, 0)` for items outside the mask.
    pub fn coefficients(&self, user: usize, item: usize) -> (f64, f64) {
        if !self.eligible.is_eligible(item) {
            return (1.0, 0.0);
        }
        attention_coefficients(
            self.base.user_embeddings().row(user),
            self.base.item_embeddings().row(item),
            self.aux_items.row(item),
            &self.attention,
        )
    }

    pub fn fused_item(&self, user: usize, item: usize) -> Vec<f64> {
        let q_c = self.base.item_embeddings().row(item);
        if !self.eligible.is_eligible(item) {
            return q_c.to_vec();
        }
        let q_a = self.aux_items.row(item);
        let (a, b) = self.coefficients(user, item);
        q_c.iter().zip(q_a).map(|(c, x)| a * c + b * x).collect()
    }

    pub fn fused_score(&self, user: usize, item: usize) -> Result<f64> {
        check_index("user", user, self.num_users())?;
        check_index("item", item, self.num_items())?;
        Ok(self.predict(user, item))
    }

    fn attention_blocks(&self) -> (usize, usize) {
        let first = self.base.param_layout().len();
        (first, first + 1)
    }
}

impl Recommender for FusedCloneModel {
    fn num_users(&self) -> usize {
        self.base.num_users()
    }

    fn num_items(&self) -> usize {
        self.base.num_items()
    }

    #[inline]
    fn predict(&self, user: usize, item: usize) -> f64 {
        if !self.eligible.is_eligible(item) {
            return self.base.predict(user, item);
        }
        let p = self.base.user_embeddings().row(user);
        let q_c = self.base.item_embeddings().row(item);
        let q_a = self.aux_items.row(item);
        let (a, b) = attention_coefficients(p, q_c, q_a, &self.attention);
        let mut acc = 0.0;
        match self.base.head() {
            None => {
                for k in 0..p.len() {
                    acc += p[k] * (a * q_c[k] + b * q_a[k]);
                }
                acc
            }
            Some(h) => {
                for k in 0..p.len() {
                    acc += h.weights[k] * (p[k] * (a * q_c[k] + b * q_a[k]));
                }
                acc + h.bias
            }
        }
    }
}

impl Trainable for FusedCloneModel {
    fn param_layout(&self) -> Vec<usize> {
        let mut layout = self.base.param_layout();
        if self.attention_trainable {
            layout.push(self.base.dim());
            layout.push(1);
        }
        layout
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut out = self.base.params();
        if self.attention_trainable {
            out.push(&self.attention.w);
            out.push(core::slice::from_ref(&self.attention.b));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let trainable = self.attention_trainable;
        let mut out = self.base.params_mut();
        if trainable {
            out.push(&mut self.attention.w[..]);
            out.push(core::slice::from_mut(&mut self.attention.b));
        }
        out
    }

    fn backprop(&self, user: usize, item: usize, upstream: f64, grads: &mut Gradients) {
        let q_c = self.base.item_embeddings().row(item);
        if !self.eligible.is_eligible(item) {
            backprop_base(&self.base, user, ITEMS, item, q_c, upstream, grads);
            return;
        }
        let d = self.base.dim();
        let p = self.base.user_embeddings().row(user);
        let q_a = self.aux_items.row(item);
        let w = &self.attention.w;
        let (a, b) = attention_coefficients(p, q_c, q_a, &self.attention);
        let q_f: Vec<f64> = (0..d).map(|k| a * q_c[k] + b * q_a[k]).collect();
        let head = self.base.head();

        // ∂r/∂q_f and the direct ∂r/∂p.
        let (g_f, direct_p): (Vec<f64>, Vec<f64>) = match head {
            None => (p.to_vec(), q_f.clone()),
            Some(h) => (
                (0..d).map(|k| h.weights[k] * p[k]).collect(),
                (0..d).map(|k| h.weights[k] * q_f[k]).collect(),
            ),
        };
        // ∂r/∂α = g_f·(q_c − q_a) · α′β′ and ∂r/∂β is its negative.
        let mut diff = 0.0;
        for k in 0..d {
            diff += g_f[k] * (q_c[k] - q_a[k]);
        }
        let s = diff * a * b;

        {
            let gp = &mut grads.block_mut(USERS)[user * d..(user + 1) * d];
            for k in 0..d {
                let mut g = direct_p[k];
                if p[k] * q_c[k] > 0.0 {
                    g += s * w[k] * q_c[k];
                }
                if p[k] * q_a[k] > 0.0 {
                    g -= s * w[k] * q_a[k];
                }
                gp[k] += upstream * g;
            }
        }
        {
            let gq = &mut grads.block_mut(ITEMS)[item * d..(item + 1) * d];
            for k in 0..d {
                let mut g = a * g_f[k];
                if p[k] * q_c[k] > 0.0 {
                    g += s * w[k] * p[k];
                }
                gq[k] += upstream * g;
            }
        }
        if head.is_some() {
            let gw = grads.block_mut(HEAD_W);
            for k in 0..d {
                gw[k] += upstream * p[k] * q_f[k];
            }
            grads.block_mut(HEAD_B)[0] += upstream;
        }
        if self.attention_trainable {
            let (wb, _) = self.attention_blocks();
            let gw = grads.block_mut(wb);
            for k in 0..d {
                let rc = (p[k] * q_c[k]).max(0.0);
                let ra = (p[k] * q_a[k]).max(0.0);
                gw[k] += upstream * s * (rc - ra);
            }
            // b enters α and β equally and cancels in the softmax.
        }
    }

    fn l2_backprop(&self, user: usize, item: usize, coef: f64, grads: &mut Gradients) -> f64 {
        let q = self.base.item_embeddings().row(item);
        l2_rows(&self.base, user, ITEMS, item, q, coef, grads)
    }
}

/// Loss used for one of the two stealing-loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PairLoss {
    Bpr,
    Hinge,
}

impl PairLoss {
    #[inline]
    pub fn value(self, r_pos: f64, r_neg: f64, margin: f64) -> f64 {
        match self {
            PairLoss::Bpr => loss_bpr(r_pos, r_neg),
            PairLoss::Hinge => loss_hinge(r_pos, r_neg, margin),
        }
    }

    /// Derivative with respect to `r_pos - r_neg`.
    #[inline]
    pub fn grad(self, r_pos: f64, r_neg: f64, margin: f64) -> f64 {
        match self {
            PairLoss::Bpr => loss_bpr_grad(r_pos, r_neg),
            PairLoss::Hinge => loss_hinge_grad(r_pos, r_neg, margin),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StealingLossSpec {
    /// Consecutive-pair term over the list order.
    pub ranking: PairLoss,
    /// Listed item versus its sampled negatives.
    pub positive: PairLoss,
    pub margin: f64,
    pub negatives_per_list_item: usize,
}

impl Default for StealingLossSpec {
    /// BPR ranking term, hinge positive term, margin 0.5, four negatives.
    fn default() -> Self {
        Self {
            ranking: PairLoss::Bpr,
            positive: PairLoss::Hinge,
            margin: 0.5,
            negatives_per_list_item: 4,
        }
    }
}

impl StealingLossSpec {
    /// Hinge for both terms, the list-only baseline's default.
    pub fn qsd_default() -> Self {
        Self {
            ranking: PairLoss::Hinge,
            positive: PairLoss::Hinge,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(Error::invalid("stealing-loss margin must be >= 0"));
        }
        if self.negatives_per_list_item == 0 {
            return Err(Error::invalid("negatives_per_list_item must be >= 1"));
        }
        Ok(())
    }
}

/// Draws `n_j` for every listed item, excluding the user's known items and
/// the whole list.
pub fn sample_list_negatives<R: rand::Rng + ?Sized>(
    known: &InteractionDataset,
    list: &RecommendationList,
    n: usize,
    rng: &mut R,
) -> Result<Vec<NegativeSample>> {
    let empty = BTreeSet::new();
    let own = known.items_of(list.user).unwrap_or(&empty);
    let listed = list.item_set();
    list.items
        .iter()
        .map(|_| {
            sample_excluding(known.num_items(), own, &listed, n, rng).map(|items| NegativeSample {
                user: list.user,
                items,
            })
        })
        .collect()
}

fn check_list(list: &RecommendationList, negatives: &[NegativeSample]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::EmptyList);
    }
    if negatives.len() != list.len() {
        return Err(Error::LengthMismatch {
            left: list.len(),
            right: negatives.len(),
        });
    }
    Ok(())
}

/// `L_S = L_r + L_p` for one user's list. `negatives[t]` belongs to
/// `list.items[t]`; the last item has no ranking successor.
pub fn stealing_loss<R: Recommender + ?Sized>(
    model: &R,
    user: usize,
    list: &RecommendationList,
    spec: &StealingLossSpec,
    negatives: &[NegativeSample],
) -> Result<f64> {
    check_list(list, negatives)?;
    let scores: Vec<f64> = list.items.iter().map(|&j| model.predict(user, j)).collect();
    let mut ranking = 0.0;
    for t in 0..scores.len() - 1 {
        ranking += spec.ranking.value(scores[t], scores[t + 1], spec.margin);
    }
    let mut positive = 0.0;
    for (t, negs) in negatives.iter().enumerate() {
        for &k in &negs.items {
            positive += spec
                .positive
                .value(scores[t], model.predict(user, k), spec.margin);
        }
    }
    Ok(ranking + positive)
}

/// Accumulates `scale * ∂L_S/∂θ` and returns `L_S`.
pub fn stealing_loss_backprop<M: Trainable + ?Sized>(
    model: &M,
    user: usize,
    list: &RecommendationList,
    spec: &StealingLossSpec,
    negatives: &[NegativeSample],
    scale: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    check_list(list, negatives)?;
    let items = &list.items;
    let scores: Vec<f64> = items.iter().map(|&j| model.predict(user, j)).collect();
    // Upstream gradient per listed item, flushed once per item.
    let mut upstream = alloc::vec![0.0; items.len()];
    let mut loss = 0.0;
    for t in 0..items.len() - 1 {
        loss += spec.ranking.value(scores[t], scores[t + 1], spec.margin);
        let g = spec.ranking.grad(scores[t], scores[t + 1], spec.margin);
        upstream[t] += g;
        upstream[t + 1] -= g;
    }
    for (t, negs) in negatives.iter().enumerate() {
        for &k in &negs.items {
            let r_k = model.predict(user, k);
            loss += spec.positive.value(scores[t], r_k, spec.margin);
            let g = spec.positive.grad(scores[t], r_k, spec.margin);
            upstream[t] += g;
            if g != 0.0 {
                model.backprop(user, k, -scale * g, grads);
            }
        }
    }
    for (t, &j) in items.iter().enumerate() {
        if upstream[t] != 0.0 {
            model.backprop(user, j, scale * upstream[t], grads);
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FinetuneReport {
    pub queried_users: usize,
    pub summary: TrainingSummary,
}

/// Queries the oracle once per user, then runs full-batch Adam on the mean
/// per-user stealing loss (one update per epoch, negatives re-drawn every
/// epoch). `known` supplies the interactions excluded from negatives.
pub fn finetune_with_queries<M: Trainable + ?Sized>(
    model: &mut M,
    oracle: &mut QueryOracle,
    users: &[usize],
    known: &InteractionDataset,
    spec: &StealingLossSpec,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<FinetuneReport> {
    cfg.validate()?;
    spec.validate()?;
    if users.is_empty() {
        return Err(Error::invalid("fine-tuning needs at least one user"));
    }
    let mut lists = Vec::with_capacity(users.len());
    for &u in users {
        match oracle.query(u) {
            Ok(list) => lists.push(list),
            Err(Error::BudgetExhausted { .. }) => {
                return Err(Error::QueryPassAborted {
                    queried: lists.len(),
                    requested: users.len(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    let layout = model.param_layout();
    let mut adam = AdamState::new(&layout);
    let mut grads = Gradients::zeros(&layout);
    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, stream::FINETUNE));
    let scale = 1.0 / users.len() as f64;
    let mut summary = TrainingSummary::default();
    let mut previous: Option<f64> = None;
    for epoch in 0..cfg.epochs {
        grads.clear();
        let mut total = 0.0;
        for list in &lists {
            let negs = sample_list_negatives(known, list, spec.negatives_per_list_item, &mut rng)?;
            total +=
                stealing_loss_backprop(&*model, list.user, list, spec, &negs, scale, &mut grads)?;
        }
        adam.step(&mut model.params_mut(), &grads, cfg.learning_rate)?;
        let mean_loss = total * scale;
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
    Ok(FinetuneReport {
        queried_users: lists.len(),
        summary,
    })
}

/// PTD: the clone's own objective on the available target data.
pub fn train_ptd(
    available: &InteractionDataset,
    cfg: &TrainConfig,
    clone_kind: ModelKind,
) -> Result<EmbeddingModel> {
    crate::train::train_model(clone_kind, available, cfg)
}

/// PTA: trains `P`, `Q_c`, and (unless frozen) the attention weights with
/// the clone kind's objective through the fused score. `aux_items` is never
/// written.
pub fn train_pta(
    available: &InteractionDataset,
    aux_items: &Matrix,
    mask: &ItemMask,
    cfg: &TrainConfig,
    clone_kind: ModelKind,
) -> Result<FusedCloneModel> {
    train_pta_observed(
        available,
        aux_items,
        mask,
        cfg,
        clone_kind,
        true,
        &mut |_| {},
    )
    .map(|(m, _)| m)
}

pub fn train_pta_observed(
    available: &InteractionDataset,
    aux_items: &Matrix,
    mask: &ItemMask,
    cfg: &TrainConfig,
    clone_kind: ModelKind,
    train_attention: bool,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<(FusedCloneModel, TrainingSummary)> {
    cfg.validate()?;
    let base = EmbeddingModel::init_random(
        clone_kind,
        available.num_users(),
        available.num_items(),
        cfg.embedding_dim,
        cfg.rng_seed,
    )?;
    let mut model = FusedCloneModel::new(base, aux_items.clone(), mask.clone())?;
    model.set_attention_trainable(train_attention);
    let summary = train_from(
        &mut model,
        available,
        cfg,
        Objective::for_kind(clone_kind, cfg),
        observer,
    )?;
    Ok((model, summary))
}

/// PTA(Pre): PTD whose item matrix starts as a copy of `aux_items`.
pub fn train_pta_pretrain(
    available: &InteractionDataset,
    aux_items: &Matrix,
    cfg: &TrainConfig,
    clone_kind: ModelKind,
) -> Result<EmbeddingModel> {
    cfg.validate()?;
    let mut model = EmbeddingModel::init_random(
        clone_kind,
        available.num_users(),
        available.num_items(),
        cfg.embedding_dim,
        cfg.rng_seed,
    )?;
    model.set_item_embeddings(aux_items.clone())?;
    train_from(
        &mut model,
        available,
        cfg,
        Objective::for_kind(clone_kind, cfg),
        &mut |_| {},
    )?;
    Ok(model)
}

/// List-only baseline: a random clone trained solely on query feedback.
pub fn train_qsd_adapted(
    oracle: &mut QueryOracle,
    users: &[usize],
    known: &InteractionDataset,
    spec: &StealingLossSpec,
    cfg: &TrainConfig,
    clone_kind: ModelKind,
) -> Result<EmbeddingModel> {
    cfg.validate()?;
    let mut model = EmbeddingModel::init_random(
        clone_kind,
        known.num_users(),
        oracle.num_items(),
        cfg.embedding_dim,
        cfg.rng_seed,
    )?;
    finetune_with_queries(&mut model, oracle, users, known, spec, cfg, &mut |_| {})?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AttackMethod {
    Ptd,
    Pta,
    Ptq,
    Ptaq,
    Qsd,
    PtaPre,
    PtaqPre,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 7] = [
        AttackMethod::Qsd,
        AttackMethod::Ptd,
        AttackMethod::Ptq,
        AttackMethod::Pta,
        AttackMethod::Ptaq,
        AttackMethod::PtaPre,
        AttackMethod::PtaqPre,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackMethod::Ptd => "ptd",
            AttackMethod::Pta => "pta",
            AttackMethod::Ptq => "ptq",
            AttackMethod::Ptaq => "ptaq",
            AttackMethod::Qsd => "qsd",
            AttackMethod::PtaPre => "pta_pre",
            AttackMethod::PtaqPre => "ptaq_pre",
        }
    }

    pub fn uses_auxiliary(self) -> bool {
        matches!(
            self,
            AttackMethod::Pta | AttackMethod::Ptaq | AttackMethod::PtaPre | AttackMethod::PtaqPre
        )
    }

    pub fn uses_queries(self) -> bool {
        matches!(
            self,
            AttackMethod::Ptq | AttackMethod::Ptaq | AttackMethod::Qsd | AttackMethod::PtaqPre
        )
    }
}

impl core::fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackMethod::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(alloc::format!("unknown attack method `{s}`")))
    }
}

/// A trained clone of either shape.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "lowercase"))]
pub enum CloneModel {
    Plain(EmbeddingModel),
    Fused(FusedCloneModel),
}

impl Recommender for CloneModel {
    fn num_users(&self) -> usize {
        match self {
            CloneModel::Plain(m) => m.num_users(),
            CloneModel::Fused(m) => m.num_users(),
        }
    }

    fn num_items(&self) -> usize {
        match self {
            CloneModel::Plain(m) => m.num_items(),
            CloneModel::Fused(m) => m.num_items(),
        }
    }

    fn predict(&self, user: usize, item: usize) -> f64 {
        match self {
            CloneModel::Plain(m) => m.predict(user, item),
            CloneModel::Fused(m) => m.predict(user, item),
        }
    }
}

/// Everything an attack may draw on; methods ignore what they do not use.
#[derive(Debug, Clone, Copy)]
pub struct AttackInputs<'a> {
    pub available: &'a InteractionDataset,
    /// Auxiliary model's item matrix (required by the auxiliary methods).
    pub aux_items: Option<&'a Matrix>,
    /// Fusion eligibility; `None` treats every item as eligible.
    pub mask: Option<&'a ItemMask>,
    pub clone_kind: ModelKind,
    pub clone_cfg: &'a TrainConfig,
    pub finetune_cfg: &'a TrainConfig,
    pub spec: &'a StealingLossSpec,
    /// Spec for the list-only baseline.
    pub qsd_spec: &'a StealingLossSpec,
    /// Users whose lists are queried.
    pub query_users: &'a [usize],
    pub train_attention: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub method: AttackMethod,
    pub clone: CloneModel,
    pub queries_spent: usize,
}

/// Runs one attack end to end. PTQ / PTAQ first build the PTD / PTA clone
/// exactly as those methods do, then fine-tune it.
pub fn execute_attack(
    method: AttackMethod,
    inputs: &AttackInputs<'_>,
    oracle: &mut QueryOracle,
) -> Result<AttackOutcome> {
    let aux = || {
        inputs
            .aux_items
            .ok_or_else(|| Error::invalid(alloc::format!("{method} needs auxiliary embeddings")))
    };
    let all_items;
    let mask = match inputs.mask {
        Some(m) => m,
        None => {
            all_items = ItemMask::all(inputs.available.num_items());
            &all_items
        }
    };
    let before = oracle.spent();
    let clone = match method {
        AttackMethod::Ptd => CloneModel::Plain(train_ptd(
            inputs.available,
            inputs.clone_cfg,
            inputs.clone_kind,
        )?),
        AttackMethod::Pta | AttackMethod::Ptaq => {
            let (mut model, _) = train_pta_observed(
                inputs.available,
                aux()?,
                mask,
                inputs.clone_cfg,
                inputs.clone_kind,
                inputs.train_attention,
                &mut |_| {},
            )?;
            if method == AttackMethod::Ptaq {
                finetune_with_queries(
                    &mut model,
                    oracle,
                    inputs.query_users,
                    inputs.available,
                    inputs.spec,
                    inputs.finetune_cfg,
                    &mut |_| {},
                )?;
            }
            CloneModel::Fused(model)
        }
        AttackMethod::Ptq => {
            let mut model = train_ptd(inputs.available, inputs.clone_cfg, inputs.clone_kind)?;
            finetune_with_queries(
                &mut model,
                oracle,
                inputs.query_users,
                inputs.available,
                inputs.spec,
                inputs.finetune_cfg,
                &mut |_| {},
            )?;
            CloneModel::Plain(model)
        }
        AttackMethod::PtaPre | AttackMethod::PtaqPre => {
            let mut model = train_pta_pretrain(
                inputs.available,
                aux()?,
                inputs.clone_cfg,
                inputs.clone_kind,
            )?;
            if method == AttackMethod::PtaqPre {
                finetune_with_queries(
                    &mut model,
                    oracle,
                    inputs.query_users,
                    inputs.available,
                    inputs.spec,
                    inputs.finetune_cfg,
                    &mut |_| {},
                )?;
            }
            CloneModel::Plain(model)
        }
        AttackMethod::Qsd => CloneModel::Plain(train_qsd_adapted(
            oracle,
            inputs.query_users,
            inputs.available,
            inputs.qsd_spec,
            inputs.finetune_cfg,
            inputs.clone_kind,
        )?),
    };
    Ok(AttackOutcome {
        method,
        clone,
        queries_spent: oracle.spent() - before,
    })
}
