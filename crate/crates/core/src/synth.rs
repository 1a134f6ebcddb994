//! Cluster-structured synthetic implicit feedback.
//!
//! Users and items get latent vectors scattered around shared cluster
//! centers. Each user draws their items without replacement with
//! probability proportional to `exp(affinity / temperature + popularity)`,
//! sampled through Gumbel top-k.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::InteractionDataset;
use crate::math::{ln, standard_normal};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub clusters: usize,
    pub latent_dim: usize,
    pub min_per_user: usize,
    pub max_per_user: usize,
    /// Standard deviation of a latent vector around its cluster center.
    pub spread: f64,
    /// Softmax temperature on the user-item affinity.
    pub temperature: f64,
    /// Scale of the per-item log-popularity offset (Gaussian).
    pub popularity_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_users: 500,
            num_items: 800,
            clusters: 8,
            latent_dim: 16,
            min_per_user: 10,
            max_per_user: 60,
            spread: 0.5,
            temperature: 0.15,
            popularity_scale: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 {
            return Err(Error::invalid("synthetic dataset needs users and items"));
        }
        if self.clusters == 0 || self.latent_dim == 0 {
            return Err(Error::invalid("clusters and latent_dim must be >= 1"));
        }
        if self.min_per_user == 0
            || self.min_per_user > self.max_per_user
            || self.max_per_user > self.num_items
        {
            return Err(Error::invalid(
                "need 1 <= min_per_user <= max_per_user <= num_items",
            ));
        }
        let ok = self.temperature > 0.0 && self.spread >= 0.0 && self.popularity_scale >= 0.0;
        if !ok {
            return Err(Error::invalid(
                "temperature must be > 0; spread and popularity_scale >= 0",
            ));
        }
        Ok(())
    }
}

fn unit_gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
    let norm = crate::math::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

fn around<R: Rng + ?Sized>(center: &[f64], spread: f64, rng: &mut R) -> Vec<f64> {
    let s = spread / crate::math::sqrt(center.len() as f64);
    center
        .iter()
        .map(|c| c + s * standard_normal(rng))
        .collect()
}

pub fn generate(cfg: &SyntheticConfig) -> Result<InteractionDataset> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let d = cfg.latent_dim;
    let centers: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|_| unit_gaussian(d, &mut rng))
        .collect();
    let items: Vec<Vec<f64>> = (0..cfg.num_items)
        .map(|_| {
            let c = rng.gen_range(0..cfg.clusters);
            around(&centers[c], cfg.spread, &mut rng)
        })
        .collect();
    let popularity: Vec<f64> = (0..cfg.num_items)
        .map(|_| cfg.popularity_scale * standard_normal(&mut rng))
        .collect();
    let mut sets = Vec::with_capacity(cfg.num_users);
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(cfg.num_items);
    for u in 0..cfg.num_users {
        let c = rng.gen_range(0..cfg.clusters);
        let user = around(&centers[c], cfg.spread, &mut rng);
        let n = rng.gen_range(cfg.min_per_user..=cfg.max_per_user);
        keyed.clear();
        for (i, q) in items.iter().enumerate() {
            let affinity: f64 = user.iter().zip(q).map(|(a, b)| a * b).sum();
            // Gumbel(0, 1) noise; the open interval keeps ln finite.
            let uniform: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let gumbel = -ln(-ln(uniform));
            keyed.push((affinity / cfg.temperature + popularity[i] + gumbel, i));
        }
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let chosen: BTreeSet<usize> = keyed[..n].iter().map(|&(_, i)| i).collect();
        sets.push((u, chosen));
    }
    InteractionDataset::from_index_sets(cfg.num_users, cfg.num_items, sets)
}
