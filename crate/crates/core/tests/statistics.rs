use std::collections::BTreeSet;

use recsteal_core::metrics::{mean_agreement, recall_at_k, recall_of_lists};
use recsteal_core::rng::rng_from_seed;
use recsteal_core::synth::{generate, SyntheticConfig};
use recsteal_core::train::train_model_observed;
use recsteal_core::{
    EmbeddingModel, InteractionDataset, Matrix, ModelKind, RecommendationList, TrainConfig,
};

/// chi-square(df = 19) quantile at 0.999 (scipy.stats.chi2.ppf).
const CHI2_19_999: f64 = 43.82019596451753;

#[test]
fn negative_sampling_is_uniform() {
    // 25 items; the user holds 3 and 2 more are excluded, leaving 20.
    let ds = InteractionDataset::from_index_sets(1, 25, vec![(0, vec![0, 5, 9])]).unwrap();
    let extra: BTreeSet<usize> = [13, 24].into_iter().collect();
    let mut rng = rng_from_seed(77);
    let mut counts = [0usize; 25];
    let draws = 100_000;
    for _ in 0..draws / 2 {
        for i in ds.sample_negatives(0, 2, &extra, &mut rng).unwrap().items {
            counts[i] += 1;
        }
    }
    let expected = draws as f64 / 20.0;
    let mut chi2 = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        if [0, 5, 9, 13, 24].contains(&i) {
            assert_eq!(c, 0);
        } else {
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
    }
    assert!(chi2 < CHI2_19_999, "chi2 = {chi2}");
}

#[test]
fn dense_exclusions_use_the_same_distribution() {
    // 18 of 20 items excluded so the enumeration branch runs.
    let own: Vec<usize> = (0..18).collect();
    let ds = InteractionDataset::from_index_sets(1, 20, vec![(0, own)]).unwrap();
    let mut rng = rng_from_seed(78);
    let mut counts = [0usize; 2];
    for _ in 0..10_000 {
        let s = ds
            .sample_negatives(0, 1, &BTreeSet::new(), &mut rng)
            .unwrap();
        counts[s.items[0] - 18] += 1;
    }
    // Binomial(10^4, 1/2): sd = 50.
    assert!((counts[0] as f64 - 5000.0).abs() < 150.0);
}

#[test]
fn init_mean_within_three_sigma() {
    let d = 10;
    let m = EmbeddingModel::init_random(ModelKind::Bpr, 5_000, 5_000, d, 12).unwrap();
    let entries: Vec<f64> = m
        .user_embeddings()
        .as_slice()
        .iter()
        .take(100_000)
        .copied()
        .collect();
    let half = 0.5 / d as f64;
    assert!(entries.iter().all(|x| x.abs() <= half));
    let mean = entries.iter().sum::<f64>() / entries.len() as f64;
    // Uniform(-h, h) has variance h^2 / 3.
    let sigma = (half * half / 3.0 / entries.len() as f64).sqrt();
    assert!(mean.abs() < 3.0 * sigma, "{mean} vs {sigma}");
}

#[test]
fn random_clone_agrees_at_hypergeometric_rate() {
    let ds = generate(&SyntheticConfig {
        num_users: 200,
        num_items: 1000,
        seed: 5,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let users: Vec<usize> = ds.users().collect();
    let k = 50;
    let mean_items = ds.mean_interactions_per_user();
    let mut total = 0.0;
    let mut var = 0.0;
    for seed in 0..5 {
        let target =
            EmbeddingModel::init_random(ModelKind::Bpr, 200, 1000, 16, 100 + seed).unwrap();
        let clone = EmbeddingModel::init_random(ModelKind::Bpr, 200, 1000, 16, 200 + seed).unwrap();
        total += mean_agreement(&target, &clone, &users, k, &ds).unwrap();
        for &u in &users {
            let n = (1000 - ds.items_of(u).unwrap().len()) as f64;
            let p = k as f64 / n;
            // Var of |A ∩ B| / K for two uniform K-subsets of n items.
            var += p * (1.0 - p) * (n - k as f64) / (n - 1.0) / k as f64;
        }
    }
    let n_obs = (5 * users.len()) as f64;
    let mean = total / 5.0;
    let sigma = (var / (n_obs * n_obs)).sqrt();
    let expected = k as f64 / (1000.0 - mean_items);
    assert!(
        (mean - expected).abs() < 3.0 * sigma + 1e-4,
        "{mean} vs {expected} (sd {sigma})"
    );
}

#[test]
fn self_agreement_is_one() {
    let ds = generate(&SyntheticConfig {
        num_users: 30,
        num_items: 100,
        seed: 2,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let m = EmbeddingModel::init_random(ModelKind::Gmf, 30, 100, 4, 0).unwrap();
    let users: Vec<usize> = ds.users().collect();
    for k in [1, 10, 40] {
        assert_eq!(mean_agreement(&m, &m, &users, k, &ds).unwrap(), 1.0);
    }
}

#[test]
fn mean_agreement_averages_users() {
    // Target scores rise with the item index for both users.
    let target = EmbeddingModel::from_parts(
        ModelKind::Bpr,
        Matrix::from_rows(&[&[1.0], &[1.0]]).unwrap(),
        Matrix::from_vec(10, 1, (0..10).map(|i| i as f64).collect()).unwrap(),
        None,
    )
    .unwrap();
    // User 0's clone top five is {9, 8, 0, 1, 2} (0.4), user 1's is
    // {9, 8, 7, 0, 1} (0.6).
    let s0 = [8.5, 8.0, 7.5, 1.0, 1.1, 1.2, 1.3, 1.4, 9.5, 10.0];
    let s1 = [8.5, 8.0, 1.0, 1.5, 1.2, 2.0, 2.5, 9.0, 9.5, 10.0];
    let items: Vec<f64> = s0.iter().zip(&s1).flat_map(|(a, b)| [*a, *b]).collect();
    let clone = EmbeddingModel::from_parts(
        ModelKind::Bpr,
        Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(),
        Matrix::from_vec(10, 2, items).unwrap(),
        None,
    )
    .unwrap();
    let ex = InteractionDataset::from_index_sets(2, 10, Vec::<(usize, Vec<usize>)>::new()).unwrap();
    let a0 = mean_agreement(&target, &clone, &[0], 5, &ex).unwrap();
    let a1 = mean_agreement(&target, &clone, &[1], 5, &ex).unwrap();
    assert!(
        (a0 - 0.4).abs() < 1e-15 && (a1 - 0.6).abs() < 1e-15,
        "{a0} {a1}"
    );
    assert!((mean_agreement(&target, &clone, &[0, 1], 5, &ex).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn recall_hand_instance() {
    // Scores increase with item index.
    let m = EmbeddingModel::from_parts(
        ModelKind::Bpr,
        Matrix::from_rows(&[&[1.0], &[1.0], &[1.0]]).unwrap(),
        Matrix::from_vec(6, 1, (0..6).map(|i| i as f64).collect()).unwrap(),
        None,
    )
    .unwrap();
    let train = InteractionDataset::from_index_sets(
        3,
        6,
        vec![(0, vec![5]), (1, vec![0]), (2, vec![4, 3])],
    )
    .unwrap();
    let held = InteractionDataset::from_index_sets(
        3,
        6,
        vec![(0, vec![4, 0]), (1, vec![5, 4]), (2, vec![0])],
    )
    .unwrap();
    // Top-2 lists: u0 [4, 3] -> 1/2, u1 [5, 4] -> 1, u2 [5, 2] -> 0.
    let r = recall_at_k(&m, &train, &held, 2).unwrap();
    assert!((r - 0.5).abs() < 1e-15);
    // Top-1: u0 [4] -> 1/2, u1 [5] -> 1/2, u2 [5] -> 0.
    let top1 = recall_at_k(&m, &train, &held, 1).unwrap();
    assert!((top1 - 1.0 / 3.0).abs() < 1e-15);
    let all = vec![
        RecommendationList {
            user: 0,
            items: vec![4, 0],
        },
        RecommendationList {
            user: 1,
            items: vec![4, 5],
        },
        RecommendationList {
            user: 2,
            items: vec![0, 1],
        },
    ];
    assert_eq!(recall_of_lists(&all, &held).unwrap(), 1.0);
    let miss = vec![RecommendationList {
        user: 0,
        items: vec![1, 2],
    }];
    assert_eq!(recall_of_lists(&miss, &held).unwrap(), 0.0);
}

#[test]
fn smoothed_training_loss_does_not_increase() {
    let ds = generate(&SyntheticConfig {
        num_users: 100,
        num_items: 150,
        seed: 8,
        ..SyntheticConfig::default()
    })
    .unwrap();
    for kind in ModelKind::ALL {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: 256,
            embedding_dim: 16,
            epochs: 40,
            early_stop_tol: 0.0,
            rng_seed: 1,
            ..TrainConfig::default()
        };
        let (_, summary) = train_model_observed(kind, &ds, &cfg, &mut |_| {}).unwrap();
        let smooth: Vec<f64> = summary
            .losses
            .windows(5)
            .map(|w| w.iter().sum::<f64>() / 5.0)
            .collect();
        for w in smooth.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{kind}: {:?}", summary.losses);
        }
    }
}
