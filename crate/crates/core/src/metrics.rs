//! Clone fidelity and accuracy metrics.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::data::InteractionDataset;
use crate::model::{recommend_top_k, RecommendationList, Recommender};
use crate::{Error, Result};

/// `|R_t ∩ R_c| / K` for two lists of the same length `K`.
pub fn agreement(target: &[usize], clone: &[usize]) -> Result<f64> {
    if target.len() != clone.len() {
        return Err(Error::LengthMismatch {
            left: target.len(),
            right: clone.len(),
        });
    }
    if target.is_empty() {
        return Err(Error::EmptyList);
    }
    let t: BTreeSet<usize> = target.iter().copied().collect();
    let shared = clone
        .iter()
        .copied()
        .collect::<BTreeSet<usize>>()
        .intersection(&t)
        .count();
    Ok(shared as f64 / target.len() as f64)
}

/// Mean agreement of the clone's top-K with precomputed target lists. The
/// clone's list for each user excludes `exclusions`' items for that user.
pub fn mean_agreement_against<R: Recommender + ?Sized>(
    targets: &[RecommendationList],
    clone: &R,
    exclusions: &InteractionDataset,
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::invalid("no users to evaluate"));
    }
    let empty = BTreeSet::new();
    let mut total = 0.0;
    for t in targets {
        let ex = exclusions.items_of(t.user).unwrap_or(&empty);
        let c = recommend_top_k(clone, t.user, t.len(), ex)?;
        total += agreement(&t.items, &c.items)?;
    }
    Ok(total / targets.len() as f64)
}

/// Mean agreement of the two models' top-K lists over `users`.
pub fn mean_agreement<T: Recommender + ?Sized, C: Recommender + ?Sized>(
    target: &T,
    clone: &C,
    users: &[usize],
    k: usize,
    exclusions: &InteractionDataset,
) -> Result<f64> {
    let empty = BTreeSet::new();
    let lists = users
        .iter()
        .map(|&u| recommend_top_k(target, u, k, exclusions.items_of(u).unwrap_or(&empty)))
        .collect::<Result<Vec<_>>>()?;
    mean_agreement_against(&lists, clone, exclusions)
}

/// Mean over holdout users of `|top-K ∩ held| / |held|`, with top-K
/// excluding each user's training items.
pub fn recall_at_k<R: Recommender + ?Sized>(
    model: &R,
    train: &InteractionDataset,
    holdout: &InteractionDataset,
    k: usize,
) -> Result<f64> {
    let empty = BTreeSet::new();
    let lists = holdout
        .users()
        .map(|u| recommend_top_k(model, u, k, train.items_of(u).unwrap_or(&empty)))
        .collect::<Result<Vec<_>>>()?;
    recall_of_lists(&lists, holdout)
}

/// Recall of already-served lists; users without held-out items are
/// skipped.
pub fn recall_of_lists(lists: &[RecommendationList], holdout: &InteractionDataset) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for list in lists {
        let Some(held) = holdout.items_of(list.user) else {
            continue;
        };
        if held.is_empty() {
            continue;
        }
        let hits = list.items.iter().filter(|i| held.contains(i)).count();
        total += hits as f64 / held.len() as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no held-out interactions to evaluate"));
    }
    Ok(total / n as f64)
}

/// Expected agreement of a uniformly random list of `k` items drawn from
/// `candidates` items.
pub fn random_agreement(k: usize, candidates: f64) -> f64 {
    k as f64 / candidates
}
