//! The dual contrastive network: embeddings, dual sequence encoders,
//! representation transforms, three prediction towers and the joint loss.

mod check;
mod config;
mod dcn;
mod layers;

pub use check::{check_model_gradients, random_batch};
pub use config::{Backbone, LossConfig, ModelConfig, StaticTowerInput};
pub use dcn::{forward_with, AffineIds, Batch, DcnModel, EncoderIds, ForwardOutputs, ForwardPass, Layout, ModelError, Side, Tower};
pub use layers::{
    affine_graph, attention_encode, attention_graph, gru_encode, gru_graph, tower_graph, transform, AffineVars, AttentionVars,
    AttentionWeights, GruVars, GruWeights,
};
