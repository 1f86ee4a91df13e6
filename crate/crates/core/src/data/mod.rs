//! Interaction logs to dual-sequence samples: ingestion, n-core filtering,
//! chronological splits, history indexes, padding and negative sampling.

mod batch;
mod error;
mod filter;
mod history;
mod log;
mod prepared;
mod sample;
mod split;
mod synth;

pub use batch::{batch_indices, batch_iter};
pub use error::DataError;
pub use filter::n_core_filter;
pub use history::HistoryIndex;
pub use log::{ingest, ingest_reader, write_events, IdMap, Ingester, Interaction, InteractionLog};
pub use prepared::{Metadata, PreparedData, METADATA_FILE, TEST_FILE, TRAIN_FILE, VALID_FILE};
pub use sample::{make_dual_sample, sample_negatives, DualSample, NegativeMode, MAX_ATTEMPTS};
pub use split::{chronological_split, SplitSpec, Splits};
pub use synth::{planted_dataset, planted_log, PlantedConfig};
