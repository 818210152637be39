use super::forward::{AttentionTrace, DnnTrace, ForwardTrace};
use super::params::{AttentionParams, BranchMode, HyperParams, ModelParams, ResidualStyle};
use crate::numerics::{leaky_relu_backward, softmax_rows_backward, Matrix, Real};
use crate::train::{bce_logit_grad, l2_gradient_into};
use crate::{Error, Result};

fn add_into<T: Real>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn sum_product<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    a.data().iter().zip(b.data()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn masked<T: Real>(d: Matrix<T>, mask: &Option<Matrix<T>>) -> Matrix<T> {
    match mask {
        Some(m) => d.hadamard(m).expect("mask shaped like activation"),
        None => d,
    }
}

/// Exact gradients of mean BCE plus the L2 penalty for the batch in `trace`.
///
/// The result has the layout of `params`; β carries a gradient only when it
/// is learnable (and is flagged non-trainable otherwise).
pub fn backward<T: Real>(
    trace: &ForwardTrace<T>,
    labels: &[u8],
    params: &ModelParams<T>,
    hp: &HyperParams,
) -> Result<ModelParams<T>> {
    if trace.version != params.version() {
        return Err(Error::StaleTrace {
            trace: trace.version,
            params: params.version(),
        });
    }
    let b = trace.batch_size();
    if labels.len() != b {
        return Err(Error::Shape {
            op: "backward",
            left: (b, 1),
            right: (labels.len(), 1),
        });
    }
    let mut grads = params.zeros_like();
    let d_o = hp.output_dim;
    let dz = bce_logit_grad(&trace.probs, labels)?;

    let mut d_dnn = Matrix::zeros(b, d_o);
    let mut d_sa = Matrix::zeros(b, d_o);
    let beta = trace.beta;
    for (i, &g) in dz.iter().enumerate() {
        let (w_sa, w_dnn) = match hp.branches {
            BranchMode::Both => (beta * g, (T::one() - beta) * g),
            BranchMode::DnnOnly => (T::zero(), g),
            BranchMode::AttentionOnly => (g, T::zero()),
        };
        d_sa.row_mut(i).fill(w_sa);
        d_dnn.row_mut(i).fill(w_dnn);
        if params.combine.learnable && hp.branches == BranchMode::Both {
            let diff = trace
                .o_sa
                .row(i)
                .iter()
                .zip(trace.o_dnn().row(i))
                .fold(T::zero(), |acc, (&s, &d)| acc + (s - d));
            grads.combine.beta += g * diff;
        }
    }

    let mut d_flat = dnn_backward(&trace.dnn, d_dnn, params, hp, &mut grads)?;

    let d_pooled = masked(d_sa, &trace.pooled_mask);
    let n = hp.field_count();
    let dn = hp.embedding_dim;
    for (i, at) in trace.attention.iter().enumerate() {
        let mut dg = Matrix::zeros(n, d_o);
        for r in 0..n {
            dg.row_mut(r).copy_from_slice(d_pooled.row(i));
        }
        let d_e = attention_backward(at, dg, &params.attention, hp, &mut grads.attention)?;
        add_into(d_flat.row_mut(i), d_e.data());
    }

    for (i, ids) in trace.field_ids.iter().enumerate() {
        let row = d_flat.row(i);
        for (f, &id) in ids.iter().enumerate() {
            let slice = &row[f * dn..(f + 1) * dn];
            add_into(grads.embedding.tables[f].row_mut(id as usize), slice);
            add_into(grads.embedding.positions.row_mut(f), slice);
        }
    }

    l2_gradient_into(params, T::lit(hp.l2_lambda), &mut grads);
    Ok(grads)
}

/// Returns the gradient with respect to the flattened (pre-dropout) input.
fn dnn_backward<T: Real>(
    trace: &DnnTrace<T>,
    d_out: Matrix<T>,
    params: &ModelParams<T>,
    hp: &HyperParams,
    grads: &mut ModelParams<T>,
) -> Result<Matrix<T>> {
    let mut dl = d_out;
    for (j, lt) in trace.layers.iter().enumerate().rev() {
        let layer = &params.dnn.layers[j];
        let g = &mut grads.dnn.layers[j];
        let d_branch = if hp.rezero {
            g.alpha += sum_product(&dl, &lt.branch);
            dl.scale(layer.alpha)
        } else {
            dl.clone()
        };
        let d_act = masked(d_branch, &lt.mask);
        let d_pre = leaky_relu_backward(&lt.pre, &d_act, T::zero());
        g.weight.add_assign(&lt.input.t_matmul(&d_pre)?)?;
        add_into(&mut g.bias, &d_pre.column_sums());
        let d_input = d_pre.matmul_t(&layer.weight)?;
        if hp.rezero {
            dl.add_assign(&d_input)?;
        } else {
            dl = d_input;
        }
    }
    grads.dnn.entry_weight.add_assign(&trace.input.t_matmul(&dl)?)?;
    add_into(&mut grads.dnn.entry_bias, &dl.column_sums());
    let dx = dl.matmul_t(&params.dnn.entry_weight)?;
    Ok(masked(dx, &trace.input_mask))
}

/// Gradient through one residual sublayer `y = r(x, f)`. Returns `(dx, df)`
/// and accumulates the scalar's gradient into `d_alpha`.
fn residual_backward<T: Real>(
    x: &Matrix<T>,
    f: &Matrix<T>,
    alpha: T,
    dy: &Matrix<T>,
    hp: &HyperParams,
    d_alpha: &mut T,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if !hp.rezero {
        return Ok((dy.clone(), dy.clone()));
    }
    match hp.residual {
        ResidualStyle::Multiplicative => {
            let dx = dy.zip_map(f, "residual_backward", |g, fv| g * (T::one() + alpha * fv))?;
            let dyx = dy.hadamard(x)?;
            *d_alpha += sum_product(&dyx, f);
            Ok((dx, dyx.scale(alpha)))
        }
        ResidualStyle::Additive => {
            *d_alpha += sum_product(dy, f);
            Ok((dy.clone(), dy.scale(alpha)))
        }
    }
}

/// Returns the gradient with respect to E_i (N × d_n).
fn attention_backward<T: Real>(
    t: &AttentionTrace<T>,
    d_out: Matrix<T>,
    a: &AttentionParams<T>,
    hp: &HyperParams,
    g: &mut AttentionParams<T>,
) -> Result<Matrix<T>> {
    let (mut d_hidden, d_ffn) = residual_backward(&t.hidden, &t.ffn_out, a.alpha_ff, &d_out, hp, &mut g.alpha_ff)?;
    g.ffn_w2.add_assign(&t.ffn_act.t_matmul(&d_ffn)?)?;
    add_into(&mut g.ffn_b2, &d_ffn.column_sums());
    let d_act = d_ffn.matmul_t(&a.ffn_w2)?;
    let d_pre = leaky_relu_backward(&t.ffn_pre, &d_act, T::lit(hp.leaky_slope));
    g.ffn_w1.add_assign(&t.hidden.t_matmul(&d_pre)?)?;
    add_into(&mut g.ffn_b1, &d_pre.column_sums());
    d_hidden.add_assign(&d_pre.matmul_t(&a.ffn_w1)?)?;

    let (mut d_proj, d_sa) = residual_backward(&t.proj, &t.sa, a.alpha_sa, &d_hidden, hp, &mut g.alpha_sa)?;

    let dk = hp.head_dim();
    let scale = T::one() / T::lit(dk as f64).sqrt();
    for (h, (ht, (hp_, hg))) in t.heads.iter().zip(a.heads.iter().zip(g.heads.iter_mut())).enumerate() {
        let d_head = d_sa.column_block(h * dk, dk);
        let d_weights = d_head.matmul_t(&ht.value)?;
        let d_value = ht.weights.t_matmul(&d_head)?;
        let d_scores = softmax_rows_backward(&ht.weights, &d_weights).scale(scale);
        let d_query = d_scores.matmul(&ht.key)?;
        let d_key = d_scores.t_matmul(&ht.query)?;
        hg.query.add_assign(&t.proj.t_matmul(&d_query)?)?;
        hg.key.add_assign(&t.proj.t_matmul(&d_key)?)?;
        hg.value.add_assign(&t.proj.t_matmul(&d_value)?)?;
        d_proj.add_assign(&d_query.matmul_t(&hp_.query)?)?;
        d_proj.add_assign(&d_key.matmul_t(&hp_.key)?)?;
        d_proj.add_assign(&d_value.matmul_t(&hp_.value)?)?;
    }

    g.input_proj.add_assign(&t.input.t_matmul(&d_proj)?)?;
    d_proj.matmul_t(&a.input_proj)
}
