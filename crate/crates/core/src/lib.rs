//! Multiplierless in-filter acoustic classification.
//!
//! A band-pass filter bank doubles as the kernel of a margin-propagation (MP)
//! kernel machine. Every inner product in the filters and the classifier is
//! replaced by MP, which needs only addition, comparison and shifts, and a
//! fixed-point engine executes the whole chain bit-exactly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod chirp;
pub mod error;
pub mod filterbank;
pub mod fixedpoint;
pub mod kernel_machine;
pub mod model_file;
pub mod mp;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
