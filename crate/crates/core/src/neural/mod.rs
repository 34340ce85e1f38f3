//! The learnable stack: a reverse-mode tape, parameter containers,
//! encoder/attention/scoring/head forwards, losses, the Adam training loop,
//! and finite-difference gradient verification.

pub mod gradcheck;
pub mod model;
pub mod params;
pub mod tape;
pub mod train;

pub use gradcheck::{check_batch_gradients, check_gradients_with, GradCheckReport};
pub use model::{
    coarse_head, cross_entropy, encode_observed, encode_paths, huber, interaction_attention,
    predict, refine, score_paths, total_loss, AgentPrediction, ConfidenceVector, Embedding,
    Forward, Hypothesis,
};
pub use params::{ModelDims, ModelParams};
pub use tape::{Mat, NodeId, Tape};
pub use train::{
    batch_loss_and_grads, batch_loss_value, loss_log_csv, prepare_window, prepare_windows, train,
    train_step, Adam, EpochRecord, LossBreakdown, PreparedAgent, PreparedWindow, TrainConfig,
};
