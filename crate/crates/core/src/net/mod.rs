//! Stacked-LSTM data association network.
//!
//! The input of a frame is the encoded [`FrameInput`](crate::FrameInput)
//! standardized with the training-set statistics. It runs through
//! [`DEFAULT_LAYERS`] LSTM layers of [`DEFAULT_HIDDEN`] units; the top hidden
//! vector feeds one softmax head per detection slot over the `K = N + 1`
//! classes (false positive, robot 1..N).

mod adam;
mod bptt;
mod cell;
mod checkpoint;
mod loss;
mod params;
mod predict;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState, StepInfo};
pub use bptt::{BatchState, Bptt, Window, WindowOutput};
pub use cell::{forward, lstm_cell, network_input, AssignmentProbs, HiddenState, LayerState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_VERSION,
};
pub use loss::{frame_nll, nll_loss};
pub use params::{
    Architecture, Gate, LstmLayerParams, NetworkParams, Normalization, OutputParams, Tensor, Weights,
    DEFAULT_HIDDEN, DEFAULT_LAYERS,
};
pub use predict::{decode, predict, FramePrediction, InferenceSession, RobotAssignment};
pub use train::{dataset_loss, fit_normalization, train, LogEntry, TrainConfig, TrainLog, Trainer};

/// Probability floor inside the logarithm of the loss.
pub const PROB_FLOOR: f64 = 1e-12;
