//! Dilated-convolution match-mismatch networks, trained with Adam.

mod checkpoint;
mod layers;
mod model;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry};
pub use layers::{conv1d_forward, cosine_similarity, Activation, Conv1DLayer, ConvShape};
pub use model::{
    bce_with_logit, sigmoid, Architecture, ExampleView, ForwardPass, LayerSlot, MatchMismatchModel, ModelConfig,
    Stream, StreamCache, SubNetwork,
};
pub use tensor::Tensor;
pub use train::{
    continue_training, evaluate_groups, evaluate_pairs, evaluate_subject, group_pairs, is_correct, train_model,
    Adam, AdamConfig, EpochStats, PairGroup, Source, TrainConfig, TrainedModel,
};
