use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, ParamSet, ParamTensor, Real};
use crate::{Error, Result};

/// How the combination weight β is treated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaMode {
    Fixed(f64),
    /// Trained jointly, starting from 0.5.
    Learnable,
}

/// Residual form used inside the attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualStyle {
    /// `x ⊙ (1 + α·f(x))`
    Multiplicative,
    /// `x + α·f(x)`
    Additive,
}

/// Which branch outputs feed the prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchMode {
    /// `β·O_SA + (1 − β)·O_DNN`
    Both,
    DnnOnly,
    AttentionOnly,
}

/// Architecture and regularization constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Z_n per field; N is the length.
    pub cardinalities: Vec<usize>,
    pub embedding_dim: usize,
    pub output_dim: usize,
    pub heads: usize,
    /// ReZero layers after the entry layer of the deep branch.
    pub dnn_layers: usize,
    pub leaky_slope: f64,
    pub dropout: f64,
    pub l2_lambda: f64,
    pub beta: BetaMode,
    /// When false the deep branch uses plain dense layers and the attention
    /// block uses unweighted additive residuals.
    pub rezero: bool,
    pub residual: ResidualStyle,
    pub branches: BranchMode,
    /// Initialize the attention input projection to the identity (needs d_n = d_o).
    pub identity_projection: bool,
}

impl HyperParams {
    /// Defaults for everything but the data shape and embedding width.
    pub fn new(cardinalities: Vec<usize>, embedding_dim: usize) -> Self {
        Self {
            cardinalities,
            embedding_dim,
            output_dim: embedding_dim,
            heads: 1,
            dnn_layers: 2,
            leaky_slope: 0.01,
            dropout: 0.0,
            l2_lambda: 0.0,
            beta: BetaMode::Fixed(0.5),
            rezero: true,
            residual: ResidualStyle::Multiplicative,
            branches: BranchMode::Both,
            identity_projection: false,
        }
    }

    pub fn field_count(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn head_dim(&self) -> usize {
        self.output_dim / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.cardinalities.is_empty() {
            problems.push("at least one field is required".to_string());
        }
        if let Some(n) = self.cardinalities.iter().position(|&z| z == 0) {
            problems.push(format!("field {n} has an empty vocabulary"));
        }
        if self.embedding_dim == 0 {
            problems.push("embedding_dim must be positive".into());
        }
        if self.output_dim == 0 {
            problems.push("output_dim must be positive".into());
        }
        if self.heads == 0 {
            problems.push("heads must be positive".into());
        } else if self.output_dim % self.heads != 0 {
            problems.push(format!(
                "output_dim {} not divisible by heads {}",
                self.output_dim, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.l2_lambda >= 0.0) || !self.l2_lambda.is_finite() {
            problems.push(format!("l2_lambda {} must be non-negative", self.l2_lambda));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            problems.push(format!("leaky_slope {} outside [0, 1)", self.leaky_slope));
        }
        if let BetaMode::Fixed(b) = self.beta {
            if !(0.0..=1.0).contains(&b) {
                problems.push(format!("fixed beta {b} outside [0, 1]"));
            }
        }
        if self.identity_projection && self.embedding_dim != self.output_dim {
            problems.push("identity_projection requires embedding_dim == output_dim".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidHyperParams(problems))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingParams<T> {
    /// W^(n): Z_n × d_n.
    pub tables: Vec<Matrix<T>>,
    /// Row n is the positional vector P^(n): N × d_n.
    pub positions: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
    pub alpha: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DnnParams<T> {
    /// N·d_n × d_o, no residual.
    pub entry_weight: Matrix<T>,
    pub entry_bias: Vec<T>,
    pub layers: Vec<DenseLayer<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    pub query: Matrix<T>,
    pub key: Matrix<T>,
    pub value: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T> {
    /// d_n × d_o.
    pub input_proj: Matrix<T>,
    /// Each projection is d_o × d_o/H.
    pub heads: Vec<HeadParams<T>>,
    pub ffn_w1: Matrix<T>,
    pub ffn_b1: Vec<T>,
    pub ffn_w2: Matrix<T>,
    pub ffn_b2: Vec<T>,
    pub alpha_sa: T,
    pub alpha_ff: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombineParams<T> {
    pub beta: T,
    pub learnable: bool,
}

/// All model tensors. Also used, zero-filled, as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub embedding: EmbeddingParams<T>,
    pub dnn: DnnParams<T>,
    pub attention: AttentionParams<T>,
    pub combine: CombineParams<T>,
    version: u64,
}

fn glorot<T: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.random_range(-limit..=limit)))
        .collect();
    Matrix::new(rows, cols, data).expect("sized")
}

fn normal<T: Real>(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let dist = Normal::new(0.0, std).expect("valid std");
    let data = (0..rows * cols).map(|_| T::lit(dist.sample(rng))).collect();
    Matrix::new(rows, cols, data).expect("sized")
}

/// Embeddings and positions ~ N(0, 0.01²), weights Glorot-uniform, biases and
/// every ReZero scalar zero, β = 0.5 when learnable.
pub fn init_params<T: Real>(hp: &HyperParams, rng_seed: u64) -> Result<ModelParams<T>> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (n, dn, d_o, dk) = (hp.field_count(), hp.embedding_dim, hp.output_dim, hp.head_dim());

    let tables = hp
        .cardinalities
        .iter()
        .map(|&z| normal(z, dn, 0.01, &mut rng))
        .collect();
    let positions = normal(n, dn, 0.01, &mut rng);

    let entry_weight = glorot(n * dn, d_o, &mut rng);
    let layers = (0..hp.dnn_layers)
        .map(|_| DenseLayer {
            weight: glorot(d_o, d_o, &mut rng),
            bias: vec![T::zero(); d_o],
            alpha: T::zero(),
        })
        .collect();

    let input_proj = if hp.identity_projection {
        Matrix::identity(dn)
    } else {
        glorot(dn, d_o, &mut rng)
    };
    let heads = (0..hp.heads)
        .map(|_| HeadParams {
            query: glorot(d_o, dk, &mut rng),
            key: glorot(d_o, dk, &mut rng),
            value: glorot(d_o, dk, &mut rng),
        })
        .collect();
    let ffn_w1 = glorot(d_o, d_o, &mut rng);
    let ffn_w2 = glorot(d_o, d_o, &mut rng);

    let (beta, learnable) = match hp.beta {
        BetaMode::Fixed(b) => (T::lit(b), false),
        BetaMode::Learnable => (T::lit(0.5), true),
    };

    Ok(ModelParams {
        embedding: EmbeddingParams { tables, positions },
        dnn: DnnParams {
            entry_weight,
            entry_bias: vec![T::zero(); d_o],
            layers,
        },
        attention: AttentionParams {
            input_proj,
            heads,
            ffn_w1,
            ffn_b1: vec![T::zero(); d_o],
            ffn_w2,
            ffn_b2: vec![T::zero(); d_o],
            alpha_sa: T::zero(),
            alpha_ff: T::zero(),
        },
        combine: CombineParams { beta, learnable },
        version: 0,
    })
}

impl<T: Real> ModelParams<T> {
    /// Same layout, all values zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(T::zero());
        }
        out.version = 0;
        out
    }

    /// Mutation counter; forward traces record it to detect staleness.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    /// Every ReZero scalar: deep-branch layers, then α_SA, α_FF.
    pub fn alphas(&self) -> Vec<T> {
        let mut out: Vec<T> = self.dnn.layers.iter().map(|l| l.alpha).collect();
        out.push(self.attention.alpha_sa);
        out.push(self.attention.alpha_ff);
        out
    }

    pub fn set_alphas(&mut self, value: T) {
        for l in &mut self.dnn.layers {
            l.alpha = value;
        }
        self.attention.alpha_sa = value;
        self.attention.alpha_ff = value;
    }

    /// Checks tensor shapes against `hp`.
    pub fn check_shapes(&self, hp: &HyperParams) -> Result<()> {
        let expected = init_params::<T>(hp, 0)?;
        let want: Vec<(String, (usize, usize))> =
            expected.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        let have: Vec<(String, (usize, usize))> = self.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        if want != have {
            return Err(Error::Checkpoint(format!(
                "parameter layout does not match hyperparameters ({} tensors expected, {} found)",
                want.len(),
                have.len()
            )));
        }
        Ok(())
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}

fn view<'a, T>(name: String, shape: (usize, usize), data: &'a [T], regularized: bool) -> ParamTensor<'a, T> {
    ParamTensor {
        name,
        shape,
        data,
        regularized,
        trainable: true,
    }
}

fn mat<'a, T: Real>(name: String, m: &'a Matrix<T>, regularized: bool) -> ParamTensor<'a, T> {
    view(name, m.shape(), m.data(), regularized)
}

fn vector<T>(name: String, v: &[T]) -> ParamTensor<'_, T> {
    view(name, (1, v.len()), v, false)
}

fn scalar<T>(name: String, x: &T) -> ParamTensor<'_, T> {
    view(name, (1, 1), std::slice::from_ref(x), false)
}

impl<T: Real> ParamSet<T> for ModelParams<T> {
    fn tensors(&self) -> Vec<ParamTensor<'_, T>> {
        let mut out = Vec::new();
        for (n, t) in self.embedding.tables.iter().enumerate() {
            out.push(mat(format!("embedding.table.{n}"), t, true));
        }
        out.push(mat("embedding.positions".into(), &self.embedding.positions, false));
        out.push(mat("dnn.entry.weight".into(), &self.dnn.entry_weight, true));
        out.push(vector("dnn.entry.bias".into(), &self.dnn.entry_bias));
        for (j, l) in self.dnn.layers.iter().enumerate() {
            out.push(mat(format!("dnn.layer.{j}.weight"), &l.weight, true));
            out.push(vector(format!("dnn.layer.{j}.bias"), &l.bias));
            out.push(scalar(format!("dnn.layer.{j}.alpha"), &l.alpha));
        }
        let a = &self.attention;
        out.push(mat("attention.input_proj".into(), &a.input_proj, true));
        for (h, head) in a.heads.iter().enumerate() {
            out.push(mat(format!("attention.head.{h}.query"), &head.query, true));
            out.push(mat(format!("attention.head.{h}.key"), &head.key, true));
            out.push(mat(format!("attention.head.{h}.value"), &head.value, true));
        }
        out.push(mat("attention.ffn.w1".into(), &a.ffn_w1, true));
        out.push(vector("attention.ffn.b1".into(), &a.ffn_b1));
        out.push(mat("attention.ffn.w2".into(), &a.ffn_w2, true));
        out.push(vector("attention.ffn.b2".into(), &a.ffn_b2));
        out.push(scalar("attention.alpha_sa".into(), &a.alpha_sa));
        out.push(scalar("attention.alpha_ff".into(), &a.alpha_ff));
        let mut beta = scalar("combine.beta".into(), &self.combine.beta);
        beta.trainable = self.combine.learnable;
        out.push(beta);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for t in &mut self.embedding.tables {
            out.push(t.data_mut());
        }
        out.push(self.embedding.positions.data_mut());
        out.push(self.dnn.entry_weight.data_mut());
        out.push(&mut self.dnn.entry_bias);
        for l in &mut self.dnn.layers {
            out.push(l.weight.data_mut());
            out.push(&mut l.bias);
            out.push(std::slice::from_mut(&mut l.alpha));
        }
        let a = &mut self.attention;
        out.push(a.input_proj.data_mut());
        for head in &mut a.heads {
            out.push(head.query.data_mut());
            out.push(head.key.data_mut());
            out.push(head.value.data_mut());
        }
        out.push(a.ffn_w1.data_mut());
        out.push(&mut a.ffn_b1);
        out.push(a.ffn_w2.data_mut());
        out.push(&mut a.ffn_b2);
        out.push(std::slice::from_mut(&mut a.alpha_sa));
        out.push(std::slice::from_mut(&mut a.alpha_ff));
        out.push(std::slice::from_mut(&mut self.combine.beta));
        out
    }

    fn mark_updated(&mut self) {
        self.bump_version();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp() -> HyperParams {
        let mut hp = HyperParams::new(vec![5, 7, 3], 8);
        hp.heads = 2;
        hp
    }

    #[test]
    fn rezero_scalars_start_at_zero() {
        for seed in 0..5 {
            let p = init_params::<f64>(&hp(), seed).unwrap();
            assert!(p.alphas().iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn learnable_beta_starts_at_half() {
        let mut h = hp();
        h.beta = BetaMode::Learnable;
        let p = init_params::<f64>(&h, 3).unwrap();
        assert_eq!(p.combine.beta, 0.5);
        assert!(p.tensors().last().unwrap().trainable);
        h.beta = BetaMode::Fixed(0.3);
        let p = init_params::<f64>(&h, 3).unwrap();
        assert!(!p.tensors().last().unwrap().trainable);
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params::<f64>(&hp(), 11).unwrap();
        let b = init_params::<f64>(&hp(), 11).unwrap();
        let bits = |p: &ModelParams<f64>| -> Vec<u64> {
            p.tensors().iter().flat_map(|t| t.data.iter().map(|x| x.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&init_params::<f64>(&hp(), 12).unwrap()));
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut h = hp();
        h.heads = 3;
        h.dropout = 1.0;
        h.l2_lambda = -1.0;
        match init_params::<f64>(&h, 0).unwrap_err() {
            Error::InvalidHyperParams(v) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tensor_views_align() {
        let mut p = init_params::<f64>(&hp(), 1).unwrap();
        let lens: Vec<usize> = p.tensors().iter().map(|t| t.data.len()).collect();
        let lens_mut: Vec<usize> = p.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(lens, lens_mut);
        p.check_shapes(&hp()).unwrap();
        let mut other = hp();
        other.dnn_layers = 1;
        assert!(p.check_shapes(&other).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = init_params::<f32>(&hp(), 1).unwrap();
        assert_eq!(p.embedding.tables[1].shape(), (7, 8));
        assert_eq!(p.attention.heads[0].query.shape(), (8, 4));
    }
}
