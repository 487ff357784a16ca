//! Training, evaluation, ablation and the on-disk formats around them.
//!
//! Only the refinement parameters are trained. The audio and text encoders
//! are frozen toys whose outputs are computed once per dataset.

mod ablate;
mod adam;
mod config;
mod container;
mod dataset;
mod synthetic;
mod train;

pub use ablate::{ablate, ablation_csv, parse_grid, AblationAxis, AblationRow, ABLATION_HEADER};
pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use config::{TrainConfig, BATCH_RANGE, DEFAULT_LEARNING_RATE, DEFAULT_PATIENCE, EPOCH_RANGE, KEYS};
pub use container::{
    decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use dataset::{caption_id, stored_chunks, AudioRef, Caption, Dataset, Item, Split, SUB_ID_BITS};
pub use synthetic::{SyntheticDatasetSpec, BLOCK_RMS, DISTRACTOR_SPREAD, ENVELOPE_POINTS};
pub use train::{embed_split, evaluate, train, Embedded, EpochRecord, Evaluation, StepRecord, TrainLog, TrainOutcome, Trainer};

#[cfg(test)]
mod tests;
