use deepmr::data::Instance;
use deepmr::model::{backward, forward, init_params, BetaMode, BranchMode, HyperParams, Mode, ModelParams, ResidualStyle};
use deepmr::numerics::finite_diff_check;
use deepmr::train::{bce_loss, l2_penalty};
use deepmr::ParamSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instances(cards: &[usize], m: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|i| {
            let ids = cards.iter().map(|&z| rng.random_range(0..z as u32)).collect();
            Instance::new((i % 2) as u8, ids)
        })
        .collect()
}

/// Randomizes the scalars that start at zero so every path carries gradient.
fn perturb(params: &mut ModelParams<f64>, seed: u64, spread: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut params.dnn.layers {
        layer.alpha = rng.random_range(0.2..0.8);
    }
    params.attention.alpha_sa = rng.random_range(0.2..0.8);
    params.attention.alpha_ff = rng.random_range(0.2..0.8);
    if params.combine.learnable {
        params.combine.beta = 0.37;
    }
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-spread..spread);
        }
    }
}

fn check(hp: &HyperParams, seed: u64) -> f64 {
    check_spread(hp, seed, 0.05)
}

fn check_spread(hp: &HyperParams, seed: u64, spread: f64) -> f64 {
    let data = instances(&hp.cardinalities, 6, seed);
    let batch: Vec<&Instance> = data.iter().collect();
    let labels: Vec<u8> = data.iter().map(|x| x.label).collect();
    let mut params = init_params::<f64>(hp, seed).unwrap();
    perturb(&mut params, seed + 100, spread);
    params.bump_version();

    let objective = |p: &ModelParams<f64>| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
        let (probs, _) = forward(&batch, p, hp, Mode::Train, &mut rng).unwrap();
        bce_loss(&probs, &labels).unwrap() + l2_penalty(p, hp.l2_lambda)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    let (_, trace) = forward(&batch, &params, hp, Mode::Train, &mut rng).unwrap();
    let grads = backward(&trace, &labels, &params, hp).unwrap();
    let report = finite_diff_check(objective, &params, &grads, 1e-5).unwrap();
    eprintln!("worst {} {:.3e}", report.worst_param, report.max_relative_error);
    report.max_relative_error
}

fn base() -> HyperParams {
    let mut hp = HyperParams::new(vec![7; 4], 8);
    hp.heads = 2;
    hp.dnn_layers = 2;
    hp.beta = BetaMode::Learnable;
    hp.l2_lambda = 1e-3;
    hp
}

#[test]
fn full_model_learnable_beta() {
    assert!(check(&base(), 1) < 1e-4);
}

#[test]
fn with_dropout_masks() {
    let mut hp = base();
    hp.dropout = 0.3;
    assert!(check(&hp, 2) < 1e-4);
}

#[test]
fn additive_residual() {
    let mut hp = base();
    hp.residual = ResidualStyle::Additive;
    assert!(check(&hp, 3) < 1e-4);
}

#[test]
fn without_rezero() {
    let mut hp = base();
    hp.rezero = false;
    assert!(check(&hp, 4) < 1e-4);
}

#[test]
fn single_branches() {
    for (i, mode) in [BranchMode::DnnOnly, BranchMode::AttentionOnly].into_iter().enumerate() {
        let mut hp = base();
        hp.branches = mode;
        hp.beta = BetaMode::Fixed(0.5);
        assert!(check(&hp, 5 + i as u64) < 1e-4, "{mode:?}");
    }
}

#[test]
fn wider_output_and_more_heads() {
    let mut hp = HyperParams::new(vec![3, 5, 4], 6);
    hp.output_dim = 8;
    hp.heads = 4;
    hp.dnn_layers = 3;
    hp.leaky_slope = 0.2;
    assert!(check_spread(&hp, 9, 1.0) < 1e-4);
}

#[test]
fn f32_forward_tracks_f64() {
    let hp = base();
    let data = instances(&hp.cardinalities, 5, 11);
    let batch: Vec<&Instance> = data.iter().collect();
    let p64 = init_params::<f64>(&hp, 11).unwrap();
    let p32 = init_params::<f32>(&hp, 11).unwrap();
    let a = deepmr::model::predict(&batch, &p64, &hp).unwrap();
    let b = deepmr::model::predict(&batch, &p32, &hp).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - *y as f64).abs() < 1e-5);
    }
}

