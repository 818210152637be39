mod common;

use common::random_instances;
use deepmr::data::Instance;
use deepmr::model::{init_params, BetaMode, HyperParams};
use deepmr::train::{fit, TrainConfig};

fn data(m: usize, seed: u64) -> Vec<Instance> {
    random_instances(&[6, 9, 4], m, seed)
}

fn hp() -> HyperParams {
    let mut hp = HyperParams::new(vec![6, 9, 4], 8);
    hp.heads = 2;
    hp
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: 0.01,
        patience: 0,
        seeds: vec![1],
        deterministic: true,
        threads: None,
    }
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let (train, val) = (data(64, 1), data(20, 2));
    let mut h = hp();
    h.dropout = 0.3;
    h.l2_lambda = 0.01;
    let mut c = cfg(3);
    c.learning_rate = 0.0;
    let runs = fit::<f64>(&train, &val, &h, &c).unwrap();
    let init = init_params::<f64>(&h, 1).unwrap();
    let best = &runs[0].best_params;
    assert_eq!(best.embedding, init.embedding);
    assert_eq!(best.dnn, init.dnn);
    assert_eq!(best.attention, init.attention);
    let logs = &runs[0].logs;
    assert!(logs.windows(2).all(|w| w[0].val_auc == w[1].val_auc && w[0].val_logloss == w[1].val_logloss));
}

#[test]
fn patience_zero_runs_every_epoch() {
    let runs = fit::<f64>(&data(48, 3), &data(16, 4), &hp(), &cfg(7)).unwrap();
    assert_eq!(runs[0].logs.len(), 7);
    assert_eq!(runs[0].logs.iter().map(|l| l.epoch).collect::<Vec<_>>(), (1..=7).collect::<Vec<_>>());
}

#[test]
fn early_stopping_restores_best_epoch() {
    // random labels: validation AUC wanders, so patience triggers
    let mut c = cfg(40);
    c.patience = 2;
    c.learning_rate = 0.05;
    let runs = fit::<f64>(&data(64, 5), &data(30, 6), &hp(), &c).unwrap();
    let run = &runs[0];
    assert!(run.logs.len() < 40);
    let best = run.best_log().val_auc;
    assert!(run.logs.iter().all(|l| l.val_auc <= best));
    let (auc, _) = deepmr::train::evaluate_split(&data(30, 6), &run.best_params, &hp(), 16).unwrap();
    assert_eq!(auc, best);
}

#[test]
fn five_seeds_give_five_runs_in_order() {
    let mut c = cfg(2);
    c.seeds = vec![1, 2, 3, 4, 5];
    c.deterministic = false;
    c.threads = Some(3);
    let parallel = fit::<f64>(&data(40, 7), &data(16, 8), &hp(), &c).unwrap();
    c.deterministic = true;
    let serial = fit::<f64>(&data(40, 7), &data(16, 8), &hp(), &c).unwrap();
    assert_eq!(parallel.len(), 5);
    assert_eq!(parallel.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    for (a, b) in parallel.iter().zip(&serial) {
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.best_params, b.best_params);
    }
}

#[test]
fn reruns_are_identical() {
    let mut h = hp();
    h.dropout = 0.2;
    let a = fit::<f64>(&data(40, 9), &data(16, 10), &h, &cfg(3)).unwrap();
    let b = fit::<f64>(&data(40, 9), &data(16, 10), &h, &cfg(3)).unwrap();
    assert_eq!(a[0].logs, b[0].logs);
    assert_eq!(a[0].best_params, b[0].best_params);
}

#[test]
fn learnable_beta_starts_at_half_and_moves() {
    let mut h = hp();
    h.beta = BetaMode::Learnable;
    assert_eq!(init_params::<f64>(&h, 1).unwrap().combine.beta, 0.5);
    let runs = fit::<f64>(&data(64, 11), &data(16, 12), &h, &cfg(3)).unwrap();
    let betas: Vec<f64> = runs[0].logs.iter().map(|l| l.beta).collect();
    assert!(betas.iter().all(|&b| b != 0.5), "{betas:?}");
    assert!(betas.windows(2).all(|w| w[0] != w[1]), "{betas:?}");
}

#[test]
fn fixed_beta_is_never_updated() {
    let mut h = hp();
    h.beta = BetaMode::Fixed(0.3);
    let runs = fit::<f64>(&data(32, 13), &data(16, 14), &h, &cfg(2)).unwrap();
    assert!(runs[0].logs.iter().all(|l| l.beta == 0.3));
}

#[test]
fn invalid_training_config_is_rejected() {
    let mut c = cfg(0);
    c.batch_size = 0;
    let err = fit::<f64>(&data(10, 1), &data(10, 2), &hp(), &c).unwrap_err();
    assert!(err.is_usage());
    assert!(err.to_string().contains("epochs") && err.to_string().contains("batch_size"));
}
