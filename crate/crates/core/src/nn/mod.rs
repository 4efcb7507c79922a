//! Embedding + LSTM/BiLSTM binary classifier, trained from scratch.

pub mod checkpoint;
pub mod lstm;
pub mod model;
pub mod optim;
pub mod split;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use lstm::{lstm_step, Gate, GateValues, LstmCell, LstmState};
pub use model::{BatchGradients, Classifier, Example, Gradients, ModelConfig, Weights};
pub use optim::Adam;
pub use split::{split_traditional, Splits};
pub use train::{evaluate, train, EarlyStopping, EpochRecord, History, StopReason, TrainConfig, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("token id {id} is outside the embedding table ({rows} rows)")]
    IdOutOfRange { id: u32, rows: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss on sample {sample}")]
    NonFiniteLoss { sample: String },
    #[error("training diverged at epoch {epoch}: non-finite loss on sample {sample}")]
    Diverged { epoch: usize, sample: String },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
