//! Dense tensors, a reverse-mode tape, initialization and optimization.

mod adam;
mod error;
pub mod gradcheck;
mod init;
mod params;
mod rng;
mod scalar;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::TensorError;
pub use init::{uniform_init, xavier_bound, xavier_uniform};
pub use params::{Binding, ParamId, ParamStore, Parameter};
pub use rng::{derive_seed, SeededRng};
pub use scalar::Scalar;
pub use tape::{Elementwise, Gradients, OpKind, Tape, Var, LOGLOSS_CLAMP};
pub use tensor::Tensor;

