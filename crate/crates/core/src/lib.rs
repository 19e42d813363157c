//! Excitation spectrograms and conditional gated LSTM decoders for
//! multi-speaker acoustic modeling.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dsp;
pub mod error;
pub mod excitation;
pub mod features;
mod fsutil;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod xspc;

pub use error::{Error, Result};
