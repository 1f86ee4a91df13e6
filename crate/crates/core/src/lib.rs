//! Dual-sequence sequential recommendation.
//!
//! Learns from per-user item sequences and per-item user sequences at once:
//! two sequence encoders, a representation contrastive term tying encoded
//! sequences to the target embeddings, three prediction towers (next item,
//! next user, static matching) and an interest contrastive term tying their
//! probabilities together. Ranking quality is evaluated both per user
//! (ranking items) and per item (ranking users).
//!
//! The numeric core is generic over [`numeric::Scalar`]; the aliases below
//! fix the common precisions.

pub mod cli;
pub mod data;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod trainer;

pub type Tensor64 = numeric::Tensor<f64>;
pub type Tensor32 = numeric::Tensor<f32>;
pub type Tape64 = numeric::Tape<f64>;
pub type DcnModel64 = model::DcnModel<f64>;
pub type DcnModel32 = model::DcnModel<f32>;
