//! Training loop, checkpoints, and the ablation and λ-sweep workflows.

mod checkpoint;
mod config;
mod experiments;
mod train;

use thiserror::Error;

use crate::data::DataError;
use crate::eval::EvalError;
use crate::model::ModelError;
use crate::numeric::TensorError;

pub use checkpoint::{load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use config::TrainConfig;
pub use experiments::{ablate, ablation_grid, sweep_lambda, table_csv, AblationRow, SweepRow, DEFAULT_SWEEP_GRID};
pub use train::{
    epoch_samples, test_eval_config, test_reports, train, training_positives, validation_auc, EpochRecord, TrainHistory, TrainOutcome,
    Trainer,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training split has no positive interactions")]
    EmptyTrainSplit,
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
