//! Small reverse-mode network kernel: layers with explicit backward passes,
//! Adam, the MLP and the text CNN fused with structured features, binary
//! checkpoints and finite-difference gradient checks.

mod checkpoint;
mod cnn;
pub mod gradcheck;
pub mod layers;
mod mlp;
mod tensor;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CheckpointHeader, TensorSpec};
pub use cnn::{init_cnn, load_embeddings, token_ids, train_cnn_fusion, CnnData, CnnFusionModel, CnnParams};
pub use mlp::{init_mlp, train_mlp, MlpModel, MlpParams};
pub use tensor::{ParamSet, Tensor};
pub use train::{Adam, EpochLog, TrainParams, TrainingLog};
