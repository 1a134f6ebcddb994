//! Seeded experiment pipeline and sweep runner.
//!
//! Per seed: filter and split the data, train the target on its training
//! interactions, train the auxiliary model, then for every sweep point run
//! each attack against a fresh oracle and score the clone.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use recsteal_core::attack::{execute_attack, AttackInputs};
use recsteal_core::data::InteractionDataset;
use recsteal_core::math::ceil_fraction;
use recsteal_core::metrics::{mean_agreement_against, recall_of_lists};
use recsteal_core::model::recommend_top_k;
use recsteal_core::oracle::{mix_popular, popularity_ranking};
use recsteal_core::rng::{derive_seed, partial_shuffle, rng_from_seed, stream};
use recsteal_core::synth::generate;
use recsteal_core::train::train_model;
use recsteal_core::{
    AttackMethod, DefenseConfig, EmbeddingModel, ItemMask, QueryOracle, RecommendationList,
    TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::config::{DefenseSettings, ExperimentConfig};
use crate::error::{AppError, Result};
use crate::io::load_interactions;

/// One output line: a method's clone scored at one sweep point and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub method: String,
    pub target_kind: String,
    pub clone_kind: String,
    pub k: usize,
    pub available_fraction: f64,
    pub aux_fraction: f64,
    pub overlap_ratio: f64,
    /// Empty when every available user is queried.
    pub query_budget: Option<f64>,
    pub mix_count: usize,
    pub agreement: Option<f64>,
    pub recall_raw: Option<f64>,
    pub recall_defended: Option<f64>,
    pub queries_spent: usize,
    pub wall_seconds: f64,
    pub error: String,
}

pub const CSV_COLUMNS: &str = "experiment,seed,method,target_kind,clone_kind,k,available_fraction,\
aux_fraction,overlap_ratio,query_budget,mix_count,agreement,recall_raw,recall_defended,\
queries_spent,wall_seconds,error";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub k: usize,
    pub available_fraction: f64,
    pub aux_fraction: f64,
    pub overlap_ratio: f64,
    pub query_budget: Option<f64>,
    pub defense: Option<DefenseSettings>,
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Cartesian product of the sweep axes, first axis varying slowest.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let s = &cfg.sweep;
    let defenses: Vec<Option<DefenseSettings>> = if s.mix_count.is_empty() {
        vec![cfg.defense]
    } else {
        let base = cfg.defense.unwrap_or_default();
        s.mix_count
            .iter()
            .map(|&d| {
                Some(DefenseSettings {
                    mix_count: d,
                    ..base
                })
            })
            .collect()
    };
    let budgets: Vec<Option<f64>> = if s.query_budget.is_empty() {
        vec![cfg.query_budget]
    } else {
        s.query_budget.iter().map(|&q| Some(q)).collect()
    };
    let mut out = Vec::new();
    for &k in &axis(&s.k, cfg.k) {
        for &available_fraction in &axis(&s.available_fraction, cfg.available_fraction) {
            for &aux_fraction in &axis(&s.aux_fraction, cfg.aux_fraction) {
                for &overlap_ratio in &axis(&s.overlap_ratio, cfg.overlap_ratio) {
                    for &query_budget in &budgets {
                        for &defense in &defenses {
                            out.push(SweepPoint {
                                k,
                                available_fraction,
                                aux_fraction,
                                overlap_ratio,
                                query_budget,
                                defense,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Loads (or generates) the dataset and applies the interaction filter.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<InteractionDataset> {
    let raw = match cfg.dataset.load_options() {
        None => match &cfg.dataset {
            crate::config::DatasetSource::Synthetic(s) => generate(s)?,
            _ => unreachable!(),
        },
        Some((path, opts)) => load_interactions(path, &opts)?,
    };
    Ok(raw.filter_min_interactions(cfg.min_interactions)?)
}

fn stage_cfg(block: &TrainConfig, seed: u64, stage: u64) -> TrainConfig {
    block
        .clone()
        .with_seed(derive_seed(derive_seed(seed, stage), block.rng_seed))
}

/// The data partitions of one seed.
#[derive(Debug, Clone)]
pub struct SeedSplit {
    /// Target users, training plus held-out interactions.
    pub target: InteractionDataset,
    /// Interactions the target model trains on.
    pub target_train: InteractionDataset,
    pub holdout: InteractionDataset,
    pub auxiliary: InteractionDataset,
    split_seed: u64,
}

impl SeedSplit {
    pub fn new(ds: &InteractionDataset, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let split_seed = cfg.split_seed.unwrap_or(seed);
        let (target, auxiliary) =
            ds.split_target_auxiliary(derive_seed(split_seed, stream::SPLIT))?;
        let (target_train, holdout) =
            target.split_holdout(cfg.holdout_ratio, derive_seed(split_seed, stream::HOLDOUT))?;
        Ok(Self {
            target,
            target_train,
            holdout,
            auxiliary,
            split_seed,
        })
    }

    /// The attacker's share of the target's training interactions.
    pub fn available(&self, fraction: f64) -> Result<InteractionDataset> {
        Ok(self
            .target_train
            .sample_available(fraction, derive_seed(self.split_seed, stream::AVAILABLE))?)
    }

    pub fn aux_subset(&self, fraction: f64) -> Result<InteractionDataset> {
        Ok(self
            .auxiliary
            .sample_available(fraction, derive_seed(self.split_seed, stream::AUX_SUBSET))?)
    }

    /// Items whose auxiliary embeddings may be fused; every item at ratio 1.
    pub fn overlap_mask(&self, ratio: f64) -> Result<ItemMask> {
        if ratio >= 1.0 {
            return Ok(ItemMask::all(self.target.num_items()));
        }
        Ok(self.target.restrict_item_overlap(
            ratio,
            &self.target.item_set(),
            derive_seed(self.split_seed, stream::OVERLAP),
        )?)
    }

    /// Available users in query order; the first `ceil(q * n)` are queried
    /// under budget share `q`.
    pub fn query_order(&self, available: &InteractionDataset) -> Vec<usize> {
        let mut users: Vec<usize> = available.users().collect();
        let n = users.len();
        partial_shuffle(
            &mut users,
            n,
            &mut rng_from_seed(derive_seed(self.split_seed, stream::QUERY_USERS)),
        );
        users
    }

    /// Sorted query users and the distinct-user budget for share `q`.
    pub fn query_users(
        &self,
        available: &InteractionDataset,
        q: Option<f64>,
    ) -> (Vec<usize>, Option<usize>) {
        let order = self.query_order(available);
        let budget = q.map(|q| ceil_fraction(q, order.len()));
        let mut users = order[..budget.unwrap_or(order.len())].to_vec();
        users.sort_unstable();
        (users, budget)
    }
}

pub fn target_train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    stage_cfg(&cfg.target_train, seed, stream::TARGET_TRAIN)
}

pub fn aux_train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    stage_cfg(&cfg.aux_train, seed, stream::AUX_TRAIN)
}

pub fn clone_train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    stage_cfg(&cfg.clone_train, seed, stream::CLONE_TRAIN)
}

pub fn finetune_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    stage_cfg(&cfg.finetune, seed, stream::FINETUNE)
}

pub fn defense_config(settings: DefenseSettings, seed: u64) -> DefenseConfig {
    DefenseConfig {
        mix_count: settings.mix_count,
        pool_size: settings.pool_size,
        rng_seed: derive_seed(seed, stream::DEFENSE_ATTACK),
    }
}

/// Everything about a seed that does not depend on the sweep point.
struct SeedState {
    split: SeedSplit,
    target_model: Arc<EmbeddingModel>,
    target_interactions: Arc<InteractionDataset>,
    popular: Vec<usize>,
    aux_models: BTreeMap<u64, Result<Arc<EmbeddingModel>, String>>,
    target_lists: BTreeMap<usize, BTreeMap<usize, RecommendationList>>,
}

impl SeedState {
    fn new(ds: &InteractionDataset, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let split = SeedSplit::new(ds, cfg, seed)?;
        let target_model = train_model(
            cfg.target_kind,
            &split.target_train,
            &target_train_config(cfg, seed),
        )?;
        Ok(Self {
            popular: popularity_ranking(&split.target_train),
            target_interactions: Arc::new(split.target_train.clone()),
            split,
            target_model: Arc::new(target_model),
            aux_models: BTreeMap::new(),
            target_lists: BTreeMap::new(),
        })
    }

    fn aux_model(
        &mut self,
        cfg: &ExperimentConfig,
        seed: u64,
        fraction: f64,
    ) -> Result<Arc<EmbeddingModel>> {
        let key = fraction.to_bits();
        if !self.aux_models.contains_key(&key) {
            let trained = self
                .split
                .aux_subset(fraction)
                .and_then(|subset| {
                    Ok(train_model(
                        cfg.clone_kind,
                        &subset,
                        &aux_train_config(cfg, seed),
                    )?)
                })
                .map(Arc::new)
                .map_err(|e| e.to_string());
            self.aux_models.insert(key, trained);
        }
        self.aux_models[&key].clone().map_err(AppError::Config)
    }

    /// Undefended target lists, excluding the target's training items.
    fn target_list(&mut self, k: usize, user: usize) -> Result<RecommendationList> {
        let lists = self.target_lists.entry(k).or_default();
        if let Some(l) = lists.get(&user) {
            return Ok(l.clone());
        }
        let empty = Default::default();
        let ex = self.split.target_train.items_of(user).unwrap_or(&empty);
        let l = recommend_top_k(&*self.target_model, user, k, ex)?;
        lists.insert(user, l.clone());
        Ok(l)
    }

    fn recalls(
        &mut self,
        k: usize,
        defense: Option<&DefenseConfig>,
        seed: u64,
    ) -> Result<(f64, f64)> {
        let users: Vec<usize> = self.split.holdout.users().collect();
        let raw = users
            .iter()
            .map(|&u| self.target_list(k, u))
            .collect::<Result<Vec<_>>>()?;
        let recall_raw = recall_of_lists(&raw, &self.split.holdout)?;
        let recall_defended = match defense {
            None => recall_raw,
            Some(d) => {
                let mut rng = rng_from_seed(derive_seed(seed, stream::DEFENSE_EVAL));
                let empty = Default::default();
                let served = raw
                    .iter()
                    .map(|l| {
                        let ex = self.split.target_train.items_of(l.user).unwrap_or(&empty);
                        mix_popular(l, d, &self.popular, ex, &mut rng)
                    })
                    .collect::<recsteal_core::Result<Vec<_>>>()?;
                recall_of_lists(&served, &self.split.holdout)?
            }
        };
        Ok((recall_raw, recall_defended))
    }
}

struct Evaluated {
    agreement: f64,
    queries: usize,
}

fn run_method(
    state: &mut SeedState,
    cfg: &ExperimentConfig,
    seed: u64,
    point: &SweepPoint,
    method: AttackMethod,
    available: &InteractionDataset,
) -> Result<Evaluated> {
    let aux = if method.uses_auxiliary() {
        Some(state.aux_model(cfg, seed, point.aux_fraction)?)
    } else {
        None
    };
    let mask = state.split.overlap_mask(point.overlap_ratio)?;
    let (query_users, budget) = state.split.query_users(available, point.query_budget);
    let clone_cfg = clone_train_config(cfg, seed);
    let finetune_cfg = finetune_config(cfg, seed);
    let inputs = AttackInputs {
        available,
        aux_items: aux.as_ref().map(|m| m.item_embeddings()),
        mask: Some(&mask),
        clone_kind: cfg.clone_kind,
        clone_cfg: &clone_cfg,
        finetune_cfg: &finetune_cfg,
        spec: &cfg.stealing_loss,
        qsd_spec: &cfg.qsd_loss,
        query_users: &query_users,
        train_attention: cfg.train_attention,
    };
    let mut oracle = QueryOracle::new(
        Arc::clone(&state.target_model),
        Arc::clone(&state.target_interactions),
        point.k,
        budget,
    )?;
    if let Some(d) = point.defense {
        oracle = oracle.with_defense(defense_config(d, seed))?;
    }
    let outcome = execute_attack(method, &inputs, &mut oracle)?;
    let lists = available
        .users()
        .map(|u| state.target_list(point.k, u))
        .collect::<Result<Vec<_>>>()?;
    let agreement = mean_agreement_against(&lists, &outcome.clone, &state.split.target_train)?;
    Ok(Evaluated {
        agreement,
        queries: outcome.queries_spent,
    })
}

fn base_row(cfg: &ExperimentConfig, seed: u64, point: &SweepPoint, method: &str) -> ResultRow {
    ResultRow {
        experiment: cfg.name.clone(),
        seed,
        method: method.to_string(),
        target_kind: cfg.target_kind.to_string(),
        clone_kind: cfg.clone_kind.to_string(),
        k: point.k,
        available_fraction: point.available_fraction,
        aux_fraction: point.aux_fraction,
        overlap_ratio: point.overlap_ratio,
        query_budget: point.query_budget,
        mix_count: point.defense.map_or(0, |d| d.mix_count),
        agreement: None,
        recall_raw: None,
        recall_defended: None,
        queries_spent: 0,
        wall_seconds: 0.0,
        error: String::new(),
    }
}

fn run_seed(
    ds: &InteractionDataset,
    cfg: &ExperimentConfig,
    points: &[SweepPoint],
    seed: u64,
) -> Vec<(usize, ResultRow)> {
    let mut rows = Vec::new();
    let mut state = match SeedState::new(ds, cfg, seed) {
        Ok(s) => s,
        Err(e) => {
            for (pi, p) in points.iter().enumerate() {
                let mut row = base_row(cfg, seed, p, "-");
                row.error = format!("setup: {e}");
                rows.push((pi, row));
            }
            return rows;
        }
    };
    for (pi, point) in points.iter().enumerate() {
        let defense = point.defense.map(|d| defense_config(d, seed));
        let setup = state
            .split
            .available(point.available_fraction)
            .and_then(|available| {
                let recalls = state.recalls(point.k, defense.as_ref(), seed)?;
                Ok((available, recalls))
            });
        let (available, (recall_raw, recall_defended)) = match setup {
            Ok(v) => v,
            Err(e) => {
                let mut row = base_row(cfg, seed, point, "-");
                row.error = format!("setup: {e}");
                rows.push((pi, row));
                continue;
            }
        };
        for &method in &cfg.attacks {
            let started = Instant::now();
            let mut row = base_row(cfg, seed, point, method.as_str());
            row.recall_raw = Some(recall_raw);
            row.recall_defended = Some(recall_defended);
            match run_method(&mut state, cfg, seed, point, method, &available) {
                Ok(ev) => {
                    row.agreement = Some(ev.agreement);
                    row.queries_spent = ev.queries;
                }
                Err(e) => row.error = e.to_string(),
            }
            if cfg.record_wall_time {
                row.wall_seconds = started.elapsed().as_secs_f64();
            }
            rows.push((pi, row));
        }
    }
    rows
}

fn thread_cap() -> Option<usize> {
    std::env::var("RECSTEAL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs every seed and sweep point. Rows come out ordered by sweep point,
/// then seed position, then attack position, whatever the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let ds = prepare_dataset(cfg)?;
    run_on_dataset(cfg, &ds)
}

pub fn run_on_dataset(cfg: &ExperimentConfig, ds: &InteractionDataset) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let points = sweep_points(cfg);
    let work = || -> Vec<Vec<(usize, ResultRow)>> {
        cfg.seeds
            .par_iter()
            .map(|&seed| run_seed(ds, cfg, &points, seed))
            .collect()
    };
    let per_seed = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| AppError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut tagged: Vec<(usize, usize, usize, ResultRow)> = Vec::new();
    for (si, rows) in per_seed.into_iter().enumerate() {
        for (ri, (pi, row)) in rows.into_iter().enumerate() {
            tagged.push((pi, si, ri, row));
        }
    }
    tagged.sort_by_key(|t| (t.0, t.1, t.2));
    Ok(tagged.into_iter().map(|t| t.3).collect())
}

pub fn write_csv<W: std::io::Write>(out: W, rows: &[ResultRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
