//! Hybrid quantum-classical recurrent models for battery state-of-health
//! prognostics.
//!
//! The crate is layered bottom-up:
//!
//! - [`quantum`]: dense statevector simulator, bit-flip noise and the
//!   variational circuit with parameter-shift gradients.
//! - [`tape`]: small reverse-mode autodiff over dense vectors, with a node that
//!   splices circuit gradients into ordinary backpropagation.
//! - [`models`]: LSTM, GRU, the circuit-gated QLSTM and its two ablations.
//! - [`features`]: SOH labels, the 13 health indicators, and MI/Spearman
//!   feature ranking.
//! - [`partition`]: cell-level splits, normalization and sliding windows.
//! - [`train`]: Adam, clipping, scheduling, metrics, the synthetic fade
//!   generator and the experiment protocols.

pub mod error;
pub mod features;
pub mod quantum;
pub mod models;
pub mod partition;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
