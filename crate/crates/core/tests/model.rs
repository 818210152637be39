mod common;

use common::random_instances;
use deepmr::data::Instance;
use deepmr::model::{
    attention_heads, backward, combine_branches, embed_fields, forward, forward_attention_block, forward_dnn_branch,
    init_params, predict, predict_proba, rezero_dense_layer, BetaMode, BranchMode, DenseLayer, HyperParams, Mode,
};
use deepmr::{Error, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hp() -> HyperParams {
    let mut hp = HyperParams::new(vec![5, 7, 3, 4], 8);
    hp.heads = 2;
    hp
}

fn randomize(m: &mut Matrix<f64>, rng: &mut ChaCha8Rng) {
    for v in m.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
}

#[test]
fn init_is_deterministic_with_zero_alphas() {
    let mut h = hp();
    h.beta = BetaMode::Learnable;
    let a = init_params::<f64>(&h, 3).unwrap();
    let b = init_params::<f64>(&h, 3).unwrap();
    assert_eq!(a, b);
    assert!(a.alphas().iter().all(|&x| x == 0.0));
    assert_eq!(a.combine.beta, 0.5);
    assert_ne!(a, init_params::<f64>(&h, 4).unwrap());
}

#[test]
fn invalid_hyperparams_list_every_violation() {
    let mut h = hp();
    h.heads = 3;
    h.dropout = 1.0;
    match init_params::<f64>(&h, 0).unwrap_err() {
        Error::InvalidHyperParams(v) => assert_eq!(v.len(), 2, "{v:?}"),
        e => panic!("{e}"),
    }
}

#[test]
fn embedding_rows_add_positions() {
    let h = HyperParams::new(vec![3, 2], 2);
    let mut p = init_params::<f64>(&h, 0).unwrap();
    p.embedding.tables[0] = Matrix::from_rows(&[&[0.0, 0.0], &[2.0, 3.0], &[9.0, 9.0]]);
    p.embedding.tables[1] = Matrix::from_rows(&[&[2.0, 3.0], &[1.0, 1.0]]);
    p.embedding.positions = Matrix::from_rows(&[&[0.5, 0.5], &[0.0, 1.0]]);
    let inst = Instance::new(1, vec![1, 0]);
    let e = &embed_fields(&[&inst], &p.embedding).unwrap()[0];
    assert_eq!(e.row(0), &[2.5, 3.5]);
    assert_eq!(e.row(1), &[2.0, 4.0]);

    let bad = Instance::new(1, vec![3, 0]);
    assert!(matches!(embed_fields(&[&bad], &p.embedding), Err(Error::Index { .. })));
}

#[test]
fn rezero_layer_arithmetic() {
    // weight = identity, bias 0: f(l) = relu(l)
    let layer = |alpha| DenseLayer {
        weight: Matrix::<f64>::identity(2),
        bias: vec![0.0, 0.0],
        alpha,
    };
    let x = Matrix::from_rows(&[&[1.0, 2.0]]);
    assert_eq!(rezero_dense_layer(&x, &layer(0.0), true).unwrap(), x);
    let shifted = DenseLayer {
        bias: vec![2.0, 2.0],
        ..layer(0.5)
    };
    assert_eq!(rezero_dense_layer(&x, &shifted, true).unwrap().data(), &[2.5, 4.0]);
    let y = rezero_dense_layer(&Matrix::from_rows(&[&[1.0, -2.0]]), &layer(1.0), true).unwrap();
    assert_eq!(y.data(), &[2.0, -2.0]);
    let wide = DenseLayer {
        weight: Matrix::zeros(2, 3),
        bias: vec![0.0; 3],
        alpha: 0.0,
    };
    assert!(matches!(rezero_dense_layer(&x, &wide, true), Err(Error::Shape { .. })));
}

#[test]
fn zero_embeddings_give_zero_branch_outputs() {
    let h = hp();
    let mut p = init_params::<f64>(&h, 1).unwrap();
    p.set_alphas(0.3);
    let n = h.field_count() * h.embedding_dim;
    let o = forward_dnn_branch(&Matrix::zeros(2, n), &p.dnn, &h).unwrap();
    assert!(o.data().iter().all(|&v| v == 0.0));
    let sa = forward_attention_block(&Matrix::zeros(4, 8), &p.attention, &h).unwrap();
    assert!(sa.iter().all(|&v| v == 0.0));
}

#[test]
fn singleton_attention_returns_value_projection() {
    let h = HyperParams::new(vec![3], 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = init_params::<f64>(&h, 0).unwrap();
    randomize(&mut p.attention.heads[0].value, &mut rng);
    let mut x = Matrix::zeros(1, 4);
    randomize(&mut x, &mut rng);
    let (sa, traces) = attention_heads(&x, &p.attention).unwrap();
    assert_eq!(traces[0].weights.data(), &[1.0]);
    assert_eq!(sa, x.matmul(&p.attention.heads[0].value).unwrap());
}

#[test]
fn identical_keys_give_uniform_attention() {
    let h = HyperParams::new(vec![3, 3], 2);
    let mut p = init_params::<f64>(&h, 0).unwrap();
    p.attention.heads[0].key = Matrix::zeros(2, 2);
    p.attention.heads[0].value = Matrix::identity(2);
    let x = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, -4.0]]);
    let (sa, traces) = attention_heads(&x, &p.attention).unwrap();
    assert!(traces[0].weights.data().iter().all(|&w| w == 0.5));
    assert_eq!(sa.row(0), &[2.0, -1.0]);
    assert_eq!(sa.row(1), &[2.0, -1.0]);
}

#[test]
fn hand_set_two_field_attention() {
    // Reference evaluation written out step by step.
    let h = HyperParams::new(vec![3, 3], 2);
    let mut p = init_params::<f64>(&h, 0).unwrap();
    p.attention.heads[0].query = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    p.attention.heads[0].key = Matrix::from_rows(&[&[0.5, 0.0], &[0.0, 2.0]]);
    p.attention.heads[0].value = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, -1.0]]);
    let x = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    // Q = x, K = diag(0.5, 2), V = [[1,1],[0,-1]], scale 1/sqrt(2)
    let s = 1.0 / 2f64.sqrt();
    let w0 = [0.5 * s, 0.0];
    let w1 = [0.0, 2.0 * s];
    let softmax = |r: [f64; 2]| {
        let m = r[0].max(r[1]);
        let e = [(r[0] - m).exp(), (r[1] - m).exp()];
        [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])]
    };
    let a0 = softmax(w0);
    let a1 = softmax(w1);
    let expect = [a0[0], a0[0] - a0[1], a1[0], a1[0] - a1[1]];
    let (sa, _) = attention_heads(&x, &p.attention).unwrap();
    for (got, want) in sa.data().iter().zip(expect) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
}

#[test]
fn attention_rows_are_stochastic() {
    let h = hp();
    let data = random_instances(&h.cardinalities, 4, 2);
    let batch: Vec<&Instance> = data.iter().collect();
    let p = init_params::<f64>(&h, 2).unwrap();
    let (_, trace) = forward(&batch, &p, &h, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for at in &trace.attention {
        for head in &at.heads {
            for r in 0..head.weights.rows() {
                let row = head.weights.row(r);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            }
        }
    }
}

#[test]
fn pooled_attention_ignores_field_order() {
    let h = hp();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut p = init_params::<f64>(&h, 8).unwrap();
    p.set_alphas(0.7);
    let mut e = Matrix::zeros(4, 8);
    randomize(&mut e, &mut rng);
    let perm = [2, 0, 3, 1];
    let mut permuted = Matrix::zeros(4, 8);
    for (dst, &src) in perm.iter().enumerate() {
        permuted.row_mut(dst).copy_from_slice(e.row(src));
    }
    let a = forward_attention_block(&e, &p.attention, &h).unwrap();
    let b = forward_attention_block(&permuted, &p.attention, &h).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn combine_and_predict_examples() {
    assert_eq!(combine_branches(&[2.0, 0.0], &[0.0, 2.0], 0.5).unwrap(), vec![1.0, 1.0]);
    assert!(matches!(combine_branches(&[1.0], &[1.0, 2.0], 0.5), Err(Error::Shape { .. })));
    assert_eq!(predict_proba(&[0.0, 0.0]), 0.5);
    assert!((predict_proba(&[3f64.ln()]) - 0.75).abs() < 1e-15);
    assert!(predict_proba(&[-25.0, -25.0]) < 1e-20);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let d: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: f64 = rng.random_range(0.0..1.0);
        let at0 = combine_branches(&d, &s, 0.0).unwrap();
        let at1 = combine_branches(&d, &s, 1.0).unwrap();
        assert_eq!(at0, d);
        assert_eq!(at1, s);
        for ((o, z), w) in combine_branches(&d, &s, b).unwrap().iter().zip(&at0).zip(&at1) {
            assert!((o - (z + b * (w - z))).abs() < 1e-12);
        }
    }
}

#[test]
fn eval_is_repeatable_and_matches_train_without_dropout() {
    let h = hp();
    let data = random_instances(&h.cardinalities, 6, 3);
    let batch: Vec<&Instance> = data.iter().collect();
    let mut p = init_params::<f64>(&h, 3).unwrap();
    p.set_alphas(0.4);
    let a = predict(&batch, &p, &h).unwrap();
    assert_eq!(a, predict(&batch, &p, &h).unwrap());
    let (t, _) = forward(&batch, &p, &h, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, t);
    assert!(a.iter().all(|&y| y > 0.0 && y < 1.0));
}

#[test]
fn alpha_gradient_is_nonzero_at_zero() {
    let h = hp();
    let data = random_instances(&h.cardinalities, 6, 4);
    let batch: Vec<&Instance> = data.iter().collect();
    let labels: Vec<u8> = data.iter().map(|x| x.label).collect();
    let p = init_params::<f64>(&h, 4).unwrap();
    let (_, trace) = forward(&batch, &p, &h, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let g = backward(&trace, &labels, &p, &h).unwrap();
    assert!(g.alphas().iter().all(|&a| a != 0.0), "{:?}", g.alphas());
    assert_eq!(g.combine.beta, 0.0);
    assert!(!g.combine.learnable);
}

#[test]
fn stale_trace_is_rejected() {
    let h = hp();
    let data = random_instances(&h.cardinalities, 3, 5);
    let batch: Vec<&Instance> = data.iter().collect();
    let labels: Vec<u8> = data.iter().map(|x| x.label).collect();
    let mut p = init_params::<f64>(&h, 5).unwrap();
    let (_, trace) = forward(&batch, &p, &h, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    p.bump_version();
    assert!(matches!(backward(&trace, &labels, &p, &h), Err(Error::StaleTrace { .. })));
}

#[test]
fn beta_endpoints_match_single_branch_models() {
    let h = hp();
    let data = random_instances(&h.cardinalities, 16, 6);
    let batch: Vec<&Instance> = data.iter().collect();
    let mut p = init_params::<f64>(&h, 6).unwrap();
    p.set_alphas(0.25);
    for (beta, branch) in [(0.0, BranchMode::DnnOnly), (1.0, BranchMode::AttentionOnly)] {
        let mut mixed = h.clone();
        mixed.beta = BetaMode::Fixed(beta);
        let mut q = p.clone();
        q.combine.beta = beta;
        let mut single = h.clone();
        single.branches = branch;
        assert_eq!(predict(&batch, &q, &mixed).unwrap(), predict(&batch, &q, &single).unwrap());
    }
}
