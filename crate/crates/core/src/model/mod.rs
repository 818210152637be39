//! DeepMR parameters, forward pass, hand-derived backward pass and checkpoints.

mod backward;
mod checkpoint;
mod forward;
mod params;

pub use backward::backward;
pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, Manifest, TensorEntry};
pub use forward::{
    attention_heads, combine_branches, embed_fields, forward, forward_attention_block, forward_dnn_branch,
    predict, predict_all, predict_proba, rezero_dense_layer, AttentionTrace, DnnLayerTrace, DnnTrace,
    ForwardTrace, HeadTrace, Mode,
};
pub use params::{
    init_params, AttentionParams, BetaMode, BranchMode, CombineParams, DenseLayer, DnnParams, EmbeddingParams,
    HeadParams, HyperParams, ModelParams, ResidualStyle,
};
