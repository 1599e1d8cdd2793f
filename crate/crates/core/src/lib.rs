//! Universal pattern-recurrence sequential prediction for stationary ergodic
//! processes, with the generators, exact conditional-expectation oracles and
//! dyadic-odometer counterexamples needed to exercise it.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel seed scheduling live in the `recurpred-cli` companion crate.
#![no_std]
#![deny(unused_must_use, rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod quantizer;
pub mod predictor;
pub mod processes;
pub mod odometer;
pub mod harness;
pub mod martingale_lab;

pub use predictor::{
    backward_estimate, compute_recurrence_trace, forward_predict, r_k_infinite, OnlinePredictor,
    PredictError, Prediction, RecurrenceTrace,
};
pub use quantizer::{dequantize, quantize, quantize_segment, QuantizeError, QuantizedPattern, QuantizedValue};
