use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{
    AttentionParams, BranchMode, DenseLayer, DnnParams, EmbeddingParams, HyperParams, ModelParams,
    ResidualStyle,
};
use crate::data::Instance;
use crate::numerics::{leaky_relu, sigmoid, softmax_rows, Matrix, Real};
use crate::train::apply_dropout;
use crate::{Error, Result};

/// Eval mode draws nothing; any generator will do.
fn unused_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from the supplied RNG.
    Train,
    /// Deterministic; consumes no randomness.
    Eval,
}

#[derive(Clone, Debug)]
pub struct DnnLayerTrace<T> {
    pub input: Matrix<T>,
    pub pre: Matrix<T>,
    pub mask: Option<Matrix<T>>,
    /// `relu(pre)` after dropout.
    pub branch: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct DnnTrace<T> {
    /// Flattened embeddings after input dropout, B × N·d_n.
    pub input: Matrix<T>,
    pub input_mask: Option<Matrix<T>>,
    pub layers: Vec<DnnLayerTrace<T>>,
    /// O_DNN, B × d_o.
    pub output: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct HeadTrace<T> {
    pub query: Matrix<T>,
    pub key: Matrix<T>,
    pub value: Matrix<T>,
    /// Row-stochastic N × N attention weights.
    pub weights: Matrix<T>,
}

/// Intermediate values of the attention block for one instance.
#[derive(Clone, Debug)]
pub struct AttentionTrace<T> {
    /// E_i, N × d_n.
    pub input: Matrix<T>,
    /// E' = E_i·W^in, N × d_o.
    pub proj: Matrix<T>,
    pub heads: Vec<HeadTrace<T>>,
    /// Concatenated head outputs SA(E').
    pub sa: Matrix<T>,
    /// Output of the attention sublayer.
    pub hidden: Matrix<T>,
    pub ffn_pre: Matrix<T>,
    pub ffn_act: Matrix<T>,
    pub ffn_out: Matrix<T>,
    /// Output of the feed-forward sublayer, summed over rows to pool.
    pub out: Matrix<T>,
}

/// Everything backward needs for one batch.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub version: u64,
    pub mode: Mode,
    pub field_ids: Vec<Vec<u32>>,
    pub dnn: DnnTrace<T>,
    pub attention: Vec<AttentionTrace<T>>,
    pub pooled_mask: Option<Matrix<T>>,
    /// O_SA, B × d_o (after dropout).
    pub o_sa: Matrix<T>,
    pub o_comb: Matrix<T>,
    pub beta: T,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn o_dnn(&self) -> &Matrix<T> {
        &self.dnn.output
    }

    pub fn batch_size(&self) -> usize {
        self.probs.len()
    }
}

/// Flattened embeddings for a batch: row i is E_i in row-major order.
pub(crate) fn embed_batch<T: Real>(batch: &[&Instance], p: &EmbeddingParams<T>) -> Result<Matrix<T>> {
    let n = p.tables.len();
    let dn = p.positions.cols();
    let mut out = Matrix::zeros(batch.len(), n * dn);
    for (i, inst) in batch.iter().enumerate() {
        if inst.field_ids.len() != n {
            return Err(Error::Shape {
                op: "embed_fields",
                left: (1, inst.field_ids.len()),
                right: (n, dn),
            });
        }
        let row = out.row_mut(i);
        for (f, (&id, table)) in inst.field_ids.iter().zip(&p.tables).enumerate() {
            let id = id as usize;
            if id >= table.rows() {
                return Err(Error::Index {
                    what: format!("embedding table of field {f}"),
                    index: id,
                    size: table.rows(),
                });
            }
            for ((o, &w), &pos) in row[f * dn..(f + 1) * dn]
                .iter_mut()
                .zip(table.row(id))
                .zip(p.positions.row(f))
            {
                *o = w + pos;
            }
        }
    }
    Ok(out)
}

/// Row n of each E_i is `W^(n)[id_n] + P^(n)`.
pub fn embed_fields<T: Real>(batch: &[&Instance], p: &EmbeddingParams<T>) -> Result<Vec<Matrix<T>>> {
    let flat = embed_batch(batch, p)?;
    let (n, dn) = p.positions.shape();
    Ok((0..batch.len())
        .map(|i| Matrix::new(n, dn, flat.row(i).to_vec()).expect("sized"))
        .collect())
}

fn dense<T: Real>(x: &Matrix<T>, w: &Matrix<T>, b: &[T]) -> Result<Matrix<T>> {
    let mut out = x.matmul(w)?;
    out.add_row_assign(b)?;
    Ok(out)
}

/// `l + α·relu(l·W + b)` with ReZero, `relu(l·W + b)` without.
pub fn rezero_dense_layer<T: Real>(input: &Matrix<T>, layer: &DenseLayer<T>, rezero: bool) -> Result<Matrix<T>> {
    if layer.weight.rows() != layer.weight.cols() {
        return Err(Error::Shape {
            op: "rezero_dense_layer",
            left: layer.weight.shape(),
            right: (layer.weight.cols(), layer.weight.cols()),
        });
    }
    let f = leaky_relu(&dense(input, &layer.weight, &layer.bias)?, T::zero());
    combine_dnn_residual(input, &f, layer.alpha, rezero)
}

fn combine_dnn_residual<T: Real>(input: &Matrix<T>, f: &Matrix<T>, alpha: T, rezero: bool) -> Result<Matrix<T>> {
    if rezero {
        input.zip_map(f, "rezero_dense_layer", |x, y| x + alpha * y)
    } else {
        Ok(f.clone())
    }
}

fn dnn_traced<T: Real, R: Rng + ?Sized>(
    flat: &Matrix<T>,
    dnn: &DnnParams<T>,
    hp: &HyperParams,
    mode: Mode,
    rng: &mut R,
) -> Result<DnnTrace<T>> {
    let (input, input_mask) = apply_dropout(flat, hp.dropout, rng, mode);
    let mut current = dense(&input, &dnn.entry_weight, &dnn.entry_bias)?;
    let mut layers = Vec::with_capacity(dnn.layers.len());
    for layer in &dnn.layers {
        let pre = dense(&current, &layer.weight, &layer.bias)?;
        let act = leaky_relu(&pre, T::zero());
        let (branch, mask) = apply_dropout(&act, hp.dropout, rng, mode);
        let next = combine_dnn_residual(&current, &branch, layer.alpha, hp.rezero)?;
        layers.push(DnnLayerTrace {
            input: std::mem::replace(&mut current, next),
            pre,
            mask,
            branch,
        });
    }
    Ok(DnnTrace {
        input,
        input_mask,
        layers,
        output: current,
    })
}

/// Deep branch in eval mode: entry layer (N·d_n → d_o), then the ReZero stack.
/// `flat` holds one flattened E_i per row.
pub fn forward_dnn_branch<T: Real>(flat: &Matrix<T>, dnn: &DnnParams<T>, hp: &HyperParams) -> Result<Matrix<T>> {
    if flat.cols() != dnn.entry_weight.rows() {
        return Err(Error::Shape {
            op: "forward_dnn_branch",
            left: flat.shape(),
            right: dnn.entry_weight.shape(),
        });
    }
    Ok(dnn_traced(flat, dnn, hp, Mode::Eval, &mut unused_rng())?.output)
}

/// Multi-head scaled dot-product self-attention over the field rows of `proj`.
/// Returns the column-concatenated head outputs and per-head traces.
pub fn attention_heads<T: Real>(proj: &Matrix<T>, attn: &AttentionParams<T>) -> Result<(Matrix<T>, Vec<HeadTrace<T>>)> {
    let n = proj.rows();
    let dk = attn.heads.first().map_or(0, |h| h.query.cols());
    let d_o = dk * attn.heads.len();
    let scale = T::one() / T::lit(dk as f64).sqrt();
    let mut sa = Matrix::zeros(n, d_o);
    let mut traces = Vec::with_capacity(attn.heads.len());
    for (h, head) in attn.heads.iter().enumerate() {
        let query = proj.matmul(&head.query)?;
        let key = proj.matmul(&head.key)?;
        let value = proj.matmul(&head.value)?;
        let scores = query.matmul_t(&key)?.scale(scale);
        let weights = softmax_rows(&scores);
        let out = weights.matmul(&value)?;
        sa.set_column_block(h * dk, &out);
        traces.push(HeadTrace {
            query,
            key,
            value,
            weights,
        });
    }
    Ok((sa, traces))
}

fn attention_residual<T: Real>(x: &Matrix<T>, f: &Matrix<T>, alpha: T, hp: &HyperParams) -> Result<Matrix<T>> {
    if !hp.rezero {
        return x.add(f);
    }
    match hp.residual {
        ResidualStyle::Multiplicative => x.zip_map(f, "residual", |a, b| a * (T::one() + alpha * b)),
        ResidualStyle::Additive => x.zip_map(f, "residual", |a, b| a + alpha * b),
    }
}

pub(crate) fn attention_traced<T: Real>(
    input: Matrix<T>,
    attn: &AttentionParams<T>,
    hp: &HyperParams,
) -> Result<AttentionTrace<T>> {
    let proj = input.matmul(&attn.input_proj)?;
    let (sa, heads) = attention_heads(&proj, attn)?;
    let hidden = attention_residual(&proj, &sa, attn.alpha_sa, hp)?;
    let ffn_pre = dense(&hidden, &attn.ffn_w1, &attn.ffn_b1)?;
    let ffn_act = leaky_relu(&ffn_pre, T::lit(hp.leaky_slope));
    let ffn_out = dense(&ffn_act, &attn.ffn_w2, &attn.ffn_b2)?;
    let out = attention_residual(&hidden, &ffn_out, attn.alpha_ff, hp)?;
    Ok(AttentionTrace {
        input,
        proj,
        heads,
        sa,
        hidden,
        ffn_pre,
        ffn_act,
        ffn_out,
        out,
    })
}

/// Attention block for one instance (eval mode): projection, attention
/// sublayer, feed-forward sublayer, then sum-pooling over fields to d_o.
pub fn forward_attention_block<T: Real>(e: &Matrix<T>, attn: &AttentionParams<T>, hp: &HyperParams) -> Result<Vec<T>> {
    Ok(attention_traced(e.clone(), attn, hp)?.out.column_sums())
}

/// `β·O_SA + (1 − β)·O_DNN`.
pub fn combine_branches<T: Real>(o_dnn: &[T], o_sa: &[T], beta: T) -> Result<Vec<T>> {
    if o_dnn.len() != o_sa.len() {
        return Err(Error::Shape {
            op: "combine_branches",
            left: (1, o_dnn.len()),
            right: (1, o_sa.len()),
        });
    }
    let keep = T::one() - beta;
    Ok(o_dnn.iter().zip(o_sa).map(|(&d, &s)| beta * s + keep * d).collect())
}

/// `σ(Σ_r O_comb[r])`.
pub fn predict_proba<T: Real>(o_comb: &[T]) -> T {
    sigmoid(o_comb.iter().fold(T::zero(), |acc, &x| acc + x))
}

/// Full forward pass over a batch.
pub fn forward<T: Real, R: Rng + ?Sized>(
    batch: &[&Instance],
    params: &ModelParams<T>,
    hp: &HyperParams,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<T>, ForwardTrace<T>)> {
    if batch.is_empty() {
        return Err(Error::Dataset("empty batch".into()));
    }
    let flat = embed_batch(batch, &params.embedding)?;
    let dnn = dnn_traced(&flat, &params.dnn, hp, mode, rng)?;

    let (n, dn) = params.embedding.positions.shape();
    let d_o = hp.output_dim;
    let mut attention = Vec::with_capacity(batch.len());
    let mut pooled = Matrix::zeros(batch.len(), d_o);
    for i in 0..batch.len() {
        let e = Matrix::new(n, dn, flat.row(i).to_vec())?;
        let trace = attention_traced(e, &params.attention, hp)?;
        pooled.row_mut(i).copy_from_slice(&trace.out.column_sums());
        attention.push(trace);
    }
    let (o_sa, pooled_mask) = apply_dropout(&pooled, hp.dropout, rng, mode);

    let beta = params.combine.beta;
    let mut o_comb = Matrix::zeros(batch.len(), d_o);
    let mut logits = Vec::with_capacity(batch.len());
    let mut probs = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let row = match hp.branches {
            BranchMode::Both => combine_branches(dnn.output.row(i), o_sa.row(i), beta)?,
            BranchMode::DnnOnly => dnn.output.row(i).to_vec(),
            BranchMode::AttentionOnly => o_sa.row(i).to_vec(),
        };
        let z = row.iter().fold(T::zero(), |acc, &x| acc + x);
        logits.push(z);
        probs.push(sigmoid(z));
        o_comb.row_mut(i).copy_from_slice(&row);
    }

    let trace = ForwardTrace {
        version: params.version(),
        mode,
        field_ids: batch.iter().map(|x| x.field_ids.clone()).collect(),
        dnn,
        attention,
        pooled_mask,
        o_sa,
        o_comb,
        beta,
        logits,
        probs: probs.clone(),
    };
    Ok((probs, trace))
}

/// Eval-mode click probabilities.
pub fn predict<T: Real>(batch: &[&Instance], params: &ModelParams<T>, hp: &HyperParams) -> Result<Vec<T>> {
    Ok(forward(batch, params, hp, Mode::Eval, &mut unused_rng())?.0)
}

/// Eval-mode predictions over a whole split, chunked to bound memory.
pub fn predict_all<T: Real>(
    instances: &[Instance],
    params: &ModelParams<T>,
    hp: &HyperParams,
    chunk: usize,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(instances.len());
    for part in instances.chunks(chunk.max(1)) {
        let refs: Vec<&Instance> = part.iter().collect();
        out.extend(predict(&refs, params, hp)?);
    }
    Ok(out)
}
