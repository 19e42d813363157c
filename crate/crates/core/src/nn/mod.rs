//! Small-model neural network primitives: dense projections, affine
//! conditioning, LSTM and conditional gated LSTM cells with exact
//! backpropagation through time, gradient checking, and Adam.

mod adam;
mod affine;
mod cell;
pub mod checkpoint;
pub mod gradcheck;
mod params;
mod sequence;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use affine::{affine_condition, AffineParams};
pub use cell::{
    cglstm_step, lstm_step, CellState, CglstmParams, GateComposition, LstmParams, Recurrent,
    StepCache,
};
pub use params::{check_same_layout, param_count, proj, BlockInfo, Dense, Embedding, Parameters, Role};
pub use sequence::{sequence_backward, sequence_forward, Control, GradientTape, SequenceGrads};
