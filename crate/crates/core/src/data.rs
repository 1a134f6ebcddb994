//! Implicit-feedback interaction logs and the subsets an experiment carves out
//! of them: target / auxiliary halves, the attacker's available slice, the
//! per-user evaluation holdout, and negative sampling.
//!
//! Every subset keeps the global user and item index space of the dataset it
//! came from, so embeddings trained on any subset line up row for row.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::math::ceil_fraction;
use crate::rng::partial_shuffle;
use crate::{Error, Result};

/// Dense index <-> original identifier.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    raw: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl IdMap {
    /// Map where index `i` has the raw identifier `"i"`.
    pub fn identity(n: usize) -> Self {
        Self::from_raw((0..n).map(|i| i.to_string()).collect())
    }

    pub fn from_raw(raw: Vec<String>) -> Self {
        let index = raw
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        Self { raw, index }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self, index: usize) -> Option<&str> {
        self.raw.get(index).map(String::as_str)
    }

    pub fn index_of(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    fn intern(&mut self, raw: &str) -> usize {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.raw.len();
        self.raw.push(raw.to_string());
        self.index.insert(raw.to_string(), i);
        i
    }

    fn restrict(&self, keep: &[usize]) -> Self {
        Self::from_raw(keep.iter().map(|&i| self.raw[i].clone()).collect())
    }
}

/// Per-user interacted-item sets over a shared item index space.
///
/// A user "belongs" to the dataset iff it has at least one interaction;
/// `num_users` is the size of the user index space, which subsets inherit
/// from their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    interactions: BTreeMap<usize, BTreeSet<usize>>,
    user_ids: Arc<IdMap>,
    item_ids: Arc<IdMap>,
}

impl InteractionDataset {
    /// Builds a dense dataset from raw `(user, item)` identifier pairs.
    /// Indices are assigned in order of first appearance; duplicate pairs
    /// collapse into one interaction.
    pub fn from_raw_pairs<I, U, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (U, T)>,
        U: AsRef<str>,
        T: AsRef<str>,
    {
        let mut users = IdMap::default();
        let mut items = IdMap::default();
        let mut interactions: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (u, i) in pairs {
            let u = users.intern(u.as_ref());
            let i = items.intern(i.as_ref());
            interactions.entry(u).or_default().insert(i);
        }
        if interactions.is_empty() {
            return Err(Error::NoInteractions);
        }
        Ok(Self {
            num_users: users.len(),
            num_items: items.len(),
            interactions,
            user_ids: Arc::new(users),
            item_ids: Arc::new(items),
        })
    }

    /// Builds a dataset over an explicit index space with identity ID maps.
    pub fn from_index_sets<I, S>(num_users: usize, num_items: usize, sets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, S)>,
        S: IntoIterator<Item = usize>,
    {
        let mut interactions: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (u, items) in sets {
            if u >= num_users {
                return Err(Error::IndexOutOfRange {
                    what: "user",
                    index: u,
                    len: num_users,
                });
            }
            for i in items {
                if i >= num_items {
                    return Err(Error::IndexOutOfRange {
                        what: "item",
                        index: i,
                        len: num_items,
                    });
                }
                interactions.entry(u).or_default().insert(i);
            }
        }
        interactions.retain(|_, s| !s.is_empty());
        Ok(Self {
            num_users,
            num_items,
            interactions,
            user_ids: Arc::new(IdMap::identity(num_users)),
            item_ids: Arc::new(IdMap::identity(num_items)),
        })
    }

    /// Same index space and ID maps, different interactions.
    fn derive(&self, interactions: BTreeMap<usize, BTreeSet<usize>>) -> Self {
        Self {
            num_users: self.num_users,
            num_items: self.num_items,
            interactions,
            user_ids: Arc::clone(&self.user_ids),
            item_ids: Arc::clone(&self.item_ids),
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn user_ids(&self) -> &IdMap {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &IdMap {
        &self.item_ids
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Number of users with at least one interaction.
    pub fn user_count(&self) -> usize {
        self.interactions.len()
    }

    pub fn num_interactions(&self) -> usize {
        self.interactions.values().map(BTreeSet::len).sum()
    }

    /// Users with interactions, ascending.
    pub fn users(&self) -> impl Iterator<Item = usize> + '_ {
        self.interactions.keys().copied()
    }

    pub fn items_of(&self, user: usize) -> Option<&BTreeSet<usize>> {
        self.interactions.get(&user)
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.interactions
            .get(&user)
            .is_some_and(|s| s.contains(&item))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BTreeSet<usize>)> + '_ {
        self.interactions.iter().map(|(&u, s)| (u, s))
    }

    /// All `(user, item)` pairs in ascending order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.interactions
            .iter()
            .flat_map(|(&u, s)| s.iter().map(move |&i| (u, i)))
            .collect()
    }

    /// Interaction count per item index.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0usize; self.num_items];
        for s in self.interactions.values() {
            for &i in s {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Items with at least one interaction.
    pub fn item_set(&self) -> BTreeSet<usize> {
        self.interactions.values().flatten().copied().collect()
    }

    pub fn mean_interactions_per_user(&self) -> f64 {
        if self.interactions.is_empty() {
            return 0.0;
        }
        self.num_interactions() as f64 / self.interactions.len() as f64
    }

    /// Keeps only the given users' interaction sets.
    pub fn restrict_users(&self, users: &BTreeSet<usize>) -> Self {
        self.derive(
            self.interactions
                .iter()
                .filter(|(u, _)| users.contains(u))
                .map(|(&u, s)| (u, s.clone()))
                .collect(),
        )
    }

    /// Removes users and items with fewer than `k` interactions, repeating
    /// until nothing changes, then re-densifies both index spaces.
    pub fn filter_min_interactions(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("min_interactions must be >= 1"));
        }
        let mut current = self.interactions.clone();
        loop {
            let mut counts = alloc::vec![0usize; self.num_items];
            for s in current.values() {
                for &i in s {
                    counts[i] += 1;
                }
            }
            let mut changed = false;
            for s in current.values_mut() {
                let before = s.len();
                s.retain(|&i| counts[i] >= k);
                changed |= s.len() != before;
            }
            let before = current.len();
            current.retain(|_, s| s.len() >= k);
            changed |= current.len() != before;
            if !changed {
                break;
            }
        }
        if current.is_empty() {
            return Err(Error::NoInteractions);
        }
        let users: Vec<usize> = current.keys().copied().collect();
        let items: Vec<usize> = current
            .values()
            .flatten()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut item_remap = alloc::vec![usize::MAX; self.num_items];
        for (new, &old) in items.iter().enumerate() {
            item_remap[old] = new;
        }
        let interactions = current
            .values()
            .enumerate()
            .map(|(new_u, s)| (new_u, s.iter().map(|&i| item_remap[i]).collect()))
            .collect();
        Ok(Self {
            num_users: users.len(),
            num_items: items.len(),
            interactions,
            user_ids: Arc::new(self.user_ids.restrict(&users)),
            item_ids: Arc::new(self.item_ids.restrict(&items)),
        })
    }

    /// Partitions users uniformly at random into two halves (target first,
    /// which receives the extra user when the count is odd).
    pub fn split_target_auxiliary(&self, rng_seed: u64) -> Result<(Self, Self)> {
        if self.is_empty() {
            return Err(Error::NoInteractions);
        }
        let mut users: Vec<usize> = self.users().collect();
        users.shuffle(&mut crate::rng::rng_from_seed(rng_seed));
        let half = users.len().div_ceil(2);
        let target: BTreeSet<usize> = users[..half].iter().copied().collect();
        let aux: BTreeSet<usize> = users[half..].iter().copied().collect();
        Ok((self.restrict_users(&target), self.restrict_users(&aux)))
    }

    /// Draws `ceil(fraction * users)` users uniformly, keeping their full sets.
    pub fn sample_available(&self, fraction: f64, rng_seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(alloc::format!(
                "fraction must be in (0, 1], got {fraction}"
            )));
        }
        let mut users: Vec<usize> = self.users().collect();
        let n = ceil_fraction(fraction, users.len());
        users.shuffle(&mut crate::rng::rng_from_seed(rng_seed));
        Ok(self.restrict_users(&users[..n].iter().copied().collect()))
    }

    /// Moves a uniformly drawn share of each user's items into a holdout set.
    ///
    /// A user with `n >= 2` interactions holds out `max(1, round(ratio * n))`
    /// of them, never all; users with a single interaction keep it.
    pub fn split_holdout(&self, ratio: f64, rng_seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::invalid(alloc::format!(
                "holdout ratio must be in [0, 1), got {ratio}"
            )));
        }
        let mut rng = crate::rng::rng_from_seed(rng_seed);
        let mut train = BTreeMap::new();
        let mut held = BTreeMap::new();
        for (&u, s) in &self.interactions {
            let mut items: Vec<usize> = s.iter().copied().collect();
            let n = items.len();
            let mut h = if ratio == 0.0 || n < 2 {
                0
            } else {
                (libm::round(ratio * n as f64) as usize).max(1)
            };
            h = h.min(n.saturating_sub(1));
            items.shuffle(&mut rng);
            let (out, keep) = items.split_at(h);
            if !out.is_empty() {
                held.insert(u, out.iter().copied().collect());
            }
            train.insert(u, keep.iter().copied().collect());
        }
        Ok((self.derive(train), self.derive(held)))
    }

    /// Marks `ceil(ratio * |target_items|)` of `target_items`, drawn
    /// uniformly, as items whose auxiliary embeddings the attacker may use.
    pub fn restrict_item_overlap(
        &self,
        ratio: f64,
        target_items: &BTreeSet<usize>,
        rng_seed: u64,
    ) -> Result<ItemMask> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::invalid(alloc::format!(
                "overlap ratio must be in (0, 1], got {ratio}"
            )));
        }
        let mut items: Vec<usize> = target_items.iter().copied().collect();
        let n = ceil_fraction(ratio, items.len());
        items.shuffle(&mut crate::rng::rng_from_seed(rng_seed));
        let mut mask = ItemMask::none(self.num_items);
        for &i in &items[..n] {
            if i >= self.num_items {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: i,
                    len: self.num_items,
                });
            }
            mask.eligible[i] = true;
        }
        Ok(mask)
    }

    /// `n` distinct items drawn uniformly from the items the user has not
    /// interacted with and that are not in `extra_exclusions`.
    pub fn sample_negatives<R: Rng + ?Sized>(
        &self,
        user: usize,
        n: usize,
        extra_exclusions: &BTreeSet<usize>,
        rng: &mut R,
    ) -> Result<NegativeSample> {
        if user >= self.num_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                len: self.num_users,
            });
        }
        let empty = BTreeSet::new();
        let own = self.interactions.get(&user).unwrap_or(&empty);
        let items = sample_excluding(self.num_items, own, extra_exclusions, n, rng)?;
        Ok(NegativeSample { user, items })
    }
}

/// Uniform sample of `n` distinct items from `0..num_items` minus both sets.
pub(crate) fn sample_excluding<R: Rng + ?Sized>(
    num_items: usize,
    a: &BTreeSet<usize>,
    b: &BTreeSet<usize>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let excluded = |i: &usize| a.contains(i) || b.contains(i);
    let blocked = a.iter().filter(|&&i| i < num_items).count()
        + b.iter()
            .filter(|&&i| i < num_items && !a.contains(&i))
            .count();
    let available = num_items - blocked;
    if n > available {
        return Err(Error::InsufficientCandidates {
            needed: n,
            available,
        });
    }
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    if available * 2 >= num_items && n * 4 <= available {
        // Sparse exclusions: rejection sampling.
        while out.len() < n {
            let i = rng.gen_range(0..num_items);
            if !excluded(&i) && !out.contains(&i) {
                out.push(i);
            }
        }
    } else {
        let mut pool: Vec<usize> = (0..num_items).filter(|i| !excluded(i)).collect();
        partial_shuffle(&mut pool, n, rng);
        out.extend_from_slice(&pool[..n]);
    }
    Ok(out)
}

/// Items whose auxiliary embedding may be fused into the clone.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ItemMask {
    eligible: Vec<bool>,
}

impl ItemMask {
    pub fn all(num_items: usize) -> Self {
        Self {
            eligible: alloc::vec![true; num_items],
        }
    }

    pub fn none(num_items: usize) -> Self {
        Self {
            eligible: alloc::vec![false; num_items],
        }
    }

    pub fn from_flags(eligible: Vec<bool>) -> Self {
        Self { eligible }
    }

    pub fn len(&self) -> usize {
        self.eligible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eligible.is_empty()
    }

    #[inline]
    pub fn is_eligible(&self, item: usize) -> bool {
        self.eligible.get(item).copied().unwrap_or(false)
    }

    pub fn eligible_count(&self) -> usize {
        self.eligible.iter().filter(|&&e| e).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSample {
    pub user: usize,
    pub items: Vec<usize>,
}

/// One experiment's view of a dataset.
#[derive(Debug, Clone)]
pub struct DataSplit {
    /// Target half: the victim's users.
    pub target: InteractionDataset,
    /// `target` minus `eval_holdout`; what the target model trains on.
    pub target_train: InteractionDataset,
    /// Per-user held-out target interactions for Recall.
    pub eval_holdout: InteractionDataset,
    /// Auxiliary half: user-disjoint from `target`, same item space.
    pub auxiliary: InteractionDataset,
    /// The attacker's slice of `target_train`.
    pub available_target: InteractionDataset,
}

impl DataSplit {
    /// Split, holdout and availability draws each use their own stream of
    /// `seed`.
    pub fn build(
        ds: &InteractionDataset,
        seed: u64,
        holdout_ratio: f64,
        available_fraction: f64,
    ) -> Result<Self> {
        use crate::rng::{derive_seed, stream};
        let (target, auxiliary) = ds.split_target_auxiliary(derive_seed(seed, stream::SPLIT))?;
        let (target_train, eval_holdout) =
            target.split_holdout(holdout_ratio, derive_seed(seed, stream::HOLDOUT))?;
        let available_target = target_train
            .sample_available(available_fraction, derive_seed(seed, stream::AVAILABLE))?;
        Ok(Self {
            target,
            target_train,
            eval_holdout,
            auxiliary,
            available_target,
        })
    }
}
