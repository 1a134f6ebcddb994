//! Black-box access to a target model: a budget-limited query oracle and the
//! popularity-mixing defense.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::InteractionDataset;
use crate::model::{check_index, recommend_top_k, EmbeddingModel, RecommendationList, Recommender};
use crate::rng::{partial_shuffle, rng_from_seed, StdRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DefenseConfig {
    /// Number of list positions replaced by popular items.
    pub mix_count: usize,
    /// How many of the most popular items form the replacement pool.
    pub pool_size: usize,
    pub rng_seed: u64,
}

impl DefenseConfig {
    pub fn new(mix_count: usize) -> Self {
        Self {
            mix_count,
            pool_size: 100,
            rng_seed: 0,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.mix_count > k {
            return Err(Error::invalid(alloc::format!(
                "mix_count {} exceeds list length {k}",
                self.mix_count
            )));
        }
        if self.pool_size < self.mix_count {
            return Err(Error::invalid(alloc::format!(
                "pool_size {} smaller than mix_count {}",
                self.pool_size,
                self.mix_count
            )));
        }
        Ok(())
    }
}

/// Items by descending interaction count, ascending index on ties.
pub fn popularity_ranking(ds: &InteractionDataset) -> Vec<usize> {
    let counts = ds.item_counts();
    let mut items: Vec<usize> = (0..ds.num_items()).collect();
    items.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    items
}

/// Replaces `cfg.mix_count` positions of `list` with popular items.
///
/// RNG contract: positions are the first `d` slots of
/// [`partial_shuffle`] over `0..K`; replacements are the first `d` slots of
/// [`partial_shuffle`] over the eligible pool (top `pool_size` items of
/// `popular`, in popularity order, minus list items and `user_exclusions`).
/// The `t`-th drawn position receives the `t`-th drawn item.
pub fn mix_popular<R: Rng + ?Sized>(
    list: &RecommendationList,
    cfg: &DefenseConfig,
    popular: &[usize],
    user_exclusions: &BTreeSet<usize>,
    rng: &mut R,
) -> Result<RecommendationList> {
    let k = list.len();
    cfg.validate(k)?;
    let d = cfg.mix_count;
    if d == 0 {
        return Ok(list.clone());
    }
    let in_list = list.item_set();
    let mut pool: Vec<usize> = popular
        .iter()
        .take(cfg.pool_size)
        .copied()
        .filter(|i| !in_list.contains(i) && !user_exclusions.contains(i))
        .collect();
    if pool.len() < d {
        return Err(Error::PoolExhausted {
            needed: d,
            available: pool.len(),
        });
    }
    let mut positions: Vec<usize> = (0..k).collect();
    partial_shuffle(&mut positions, d, rng);
    partial_shuffle(&mut pool, d, rng);
    let mut items = list.items.clone();
    for t in 0..d {
        items[positions[t]] = pool[t];
    }
    Ok(RecommendationList {
        user: list.user,
        items,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QueryRecord {
    pub index: usize,
    pub user: usize,
    pub items: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Defense {
    cfg: DefenseConfig,
    popular: Vec<usize>,
    rng: StdRng,
}

/// Serves the target's top-K lists under a budget of distinct users.
///
/// A repeated query for a user returns the cached list and costs nothing.
/// With a defense configured, each distinct query draws fresh mixing
/// randomness from the oracle's own stream.
#[derive(Debug, Clone)]
pub struct QueryOracle {
    target: Arc<EmbeddingModel>,
    interactions: Arc<InteractionDataset>,
    k: usize,
    budget: Option<usize>,
    defense: Option<Defense>,
    cache: BTreeMap<usize, RecommendationList>,
    log: Vec<QueryRecord>,
}

impl QueryOracle {
    /// `interactions` are the target's training interactions, excluded from
    /// every list. `budget = None` means unlimited.
    pub fn new(
        target: Arc<EmbeddingModel>,
        interactions: Arc<InteractionDataset>,
        k: usize,
        budget: Option<usize>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("list length K must be >= 1"));
        }
        if k > target.num_items() {
            return Err(Error::invalid(alloc::format!(
                "K = {k} exceeds {} items",
                target.num_items()
            )));
        }
        Ok(Self {
            target,
            interactions,
            k,
            budget,
            defense: None,
            cache: BTreeMap::new(),
            log: Vec::new(),
        })
    }

    /// Enables popularity mixing, with popularity counted on the target's
    /// training interactions.
    pub fn with_defense(mut self, cfg: DefenseConfig) -> Result<Self> {
        cfg.validate(self.k)?;
        self.defense = Some(Defense {
            cfg,
            popular: popularity_ranking(&self.interactions),
            rng: rng_from_seed(cfg.rng_seed),
        });
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn spent(&self) -> usize {
        self.log.len()
    }

    pub fn remaining(&self) -> Option<usize> {
        self.budget.map(|b| b - self.spent())
    }

    pub fn defense(&self) -> Option<&DefenseConfig> {
        self.defense.as_ref().map(|d| &d.cfg)
    }

    pub fn log(&self) -> &[QueryRecord] {
        &self.log
    }

    pub fn num_items(&self) -> usize {
        self.target.num_items()
    }

    pub fn query(&mut self, user: usize) -> Result<RecommendationList> {
        check_index("user", user, self.target.num_users())?;
        if let Some(hit) = self.cache.get(&user) {
            return Ok(hit.clone());
        }
        if let Some(b) = self.budget {
            if self.spent() >= b {
                return Err(Error::BudgetExhausted { budget: b });
            }
        }
        let empty = BTreeSet::new();
        let exclude = self.interactions.items_of(user).unwrap_or(&empty);
        let raw = recommend_top_k(&*self.target, user, self.k, exclude)?;
        let list = match &mut self.defense {
            None => raw,
            Some(def) => mix_popular(&raw, &def.cfg, &def.popular, exclude, &mut def.rng)?,
        };
        self.log.push(QueryRecord {
            index: self.log.len(),
            user,
            items: list.items.clone(),
        });
        self.cache.insert(user, list.clone());
        Ok(list)
    }
}
