use recsteal::config::{DatasetSource, DefenseSettings, ExperimentConfig};
use recsteal::experiment::{read_csv, run_experiment, sweep_points, write_csv, CSV_COLUMNS};
use recsteal::report::{aggregate, Stat};
use recsteal_core::synth::SyntheticConfig;
use recsteal_core::{AttackMethod, TrainConfig};

fn tiny() -> ExperimentConfig {
    let train = TrainConfig {
        learning_rate: 0.02,
        batch_size: 128,
        embedding_dim: 8,
        epochs: 4,
        early_stop_tol: 0.0,
        ..Default::default()
    };
    ExperimentConfig {
        name: "tiny".into(),
        dataset: DatasetSource::Synthetic(SyntheticConfig {
            num_users: 120,
            num_items: 150,
            min_per_user: 6,
            max_per_user: 20,
            seed: 11,
            ..Default::default()
        }),
        available_fraction: 0.3,
        k: 10,
        attacks: AttackMethod::ALL.to_vec(),
        target_train: train.clone(),
        aux_train: train.clone(),
        clone_train: train.clone(),
        finetune: TrainConfig { epochs: 3, ..train },
        seeds: vec![1, 2],
        ..Default::default()
    }
}

#[test]
fn one_row_per_seed_method_and_point() {
    let mut cfg = tiny();
    cfg.sweep.k = vec![5, 10, 20];
    cfg.attacks = vec![AttackMethod::Ptd, AttackMethod::Ptaq];
    assert_eq!(sweep_points(&cfg).len(), 3);
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 2);
    for r in &rows {
        assert!(r.error.is_empty(), "{}", r.error);
        let a = r.agreement.unwrap();
        assert!((0.0..=1.0).contains(&a));
        assert!((0.0..=1.0).contains(&r.recall_raw.unwrap()));
    }
    // Sorted by point, then seed, then method.
    let keys: Vec<(usize, u64, &str)> = rows
        .iter()
        .map(|r| (r.k, r.seed, r.method.as_str()))
        .collect();
    assert_eq!(keys[0], (5, 1, "ptd"));
    assert_eq!(keys[1], (5, 1, "ptaq"));
    assert_eq!(keys[2], (5, 2, "ptd"));
    assert_eq!(keys[4], (10, 1, "ptd"));
}

#[test]
fn repeated_seed_gives_identical_rows() {
    let mut cfg = tiny();
    cfg.seeds = vec![1, 1];
    let rows = run_experiment(&cfg).unwrap();
    let n = cfg.attacks.len();
    assert_eq!(rows.len(), 2 * n);
    assert_eq!(rows[..n], rows[n..]);
}

#[test]
fn thread_count_does_not_change_output() {
    let cfg = tiny();
    let a = run_experiment(&cfg).unwrap();
    std::env::set_var("RECSTEAL_THREADS", "1");
    let b = run_experiment(&cfg).unwrap();
    std::env::remove_var("RECSTEAL_THREADS");
    assert_eq!(a, b);
}

#[test]
fn queries_respect_the_budget_share() {
    let mut cfg = tiny();
    cfg.attacks = vec![AttackMethod::Ptd, AttackMethod::Ptq, AttackMethod::Qsd];
    cfg.query_budget = Some(0.5);
    let rows = run_experiment(&cfg).unwrap();
    // 60 target users, 20% holdout stays per user, 30% available -> 18 users.
    for r in &rows {
        match r.method.as_str() {
            "ptd" => assert_eq!(r.queries_spent, 0),
            _ => assert_eq!(r.queries_spent, 9),
        }
    }
}

#[test]
fn defense_lowers_defended_recall_only() {
    let mut cfg = tiny();
    cfg.attacks = vec![AttackMethod::Ptq];
    cfg.defense = Some(DefenseSettings {
        mix_count: 5,
        pool_size: 50,
    });
    let rows = run_experiment(&cfg).unwrap();
    for r in &rows {
        assert_eq!(r.mix_count, 5);
        assert!(r.recall_defended.unwrap() <= r.recall_raw.unwrap() + 1e-12);
    }
}

#[test]
fn failing_stage_yields_diagnostic_row() {
    let mut cfg = tiny();
    // K larger than the item count: every attack fails at the oracle.
    cfg.k = 5000;
    let rows = run_experiment(&cfg).unwrap();
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(!r.error.is_empty());
        assert!(r.agreement.is_none());
    }
}

#[test]
fn csv_round_trip_preserves_report() {
    let rows = run_experiment(&tiny()).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS);
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, rows);
    assert_eq!(aggregate(&back), aggregate(&rows));
}

#[test]
fn empty_result_still_has_header() {
    let mut buf = Vec::new();
    write_csv(&mut buf, &[]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_COLUMNS);
}

#[test]
fn report_matches_hand_aggregation() {
    let rows = run_experiment(&tiny()).unwrap();
    let groups = aggregate(&rows);
    assert_eq!(groups.len(), AttackMethod::ALL.len());
    for g in &groups {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == g.method)
            .map(|r| r.agreement.unwrap())
            .collect();
        assert_eq!(vals.len(), 2);
        let mean = (vals[0] + vals[1]) / 2.0;
        let std = ((vals[0] - mean).powi(2) + (vals[1] - mean).powi(2)).sqrt();
        let s = g.agreement.unwrap();
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - std).abs() < 1e-12);
        assert_eq!(s.n, 2);
    }
}

#[test]
fn sample_std_of_known_values() {
    let s = Stat::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
    assert_eq!(s.mean, 5.0);
    assert!((s.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    assert_eq!(Stat::of(&[3.0]).unwrap().std, 0.0);
    assert!(Stat::of(&[]).is_none());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = tiny();
    cfg.seeds.clear();
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = tiny();
    cfg.sweep.available_fraction = vec![0.0];
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = tiny();
    cfg.clone_train.embedding_dim = 4;
    assert!(run_experiment(&cfg).is_err());
    let json = r#"{"seeds":[1],"bogus":3}"#;
    assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
}

#[test]
fn config_json_uses_snake_case_defaults() {
    let cfg: ExperimentConfig = serde_json::from_str(
        r#"{"name":"x","attacks":["ptd","pta_pre"],"target_kind":"gmf","sweep":{"k":[10]}}"#,
    )
    .unwrap();
    assert_eq!(cfg.attacks, vec![AttackMethod::Ptd, AttackMethod::PtaPre]);
    assert_eq!(cfg.k, 50);
    assert_eq!(cfg.seeds.len(), 5);
    assert_eq!(cfg.min_interactions, 5);
    let file: ExperimentConfig =
        serde_json::from_str(r#"{"dataset":{"file":{"path":"ml.dat"}}}"#).unwrap();
    assert!(matches!(file.dataset, DatasetSource::File { .. }));
}
