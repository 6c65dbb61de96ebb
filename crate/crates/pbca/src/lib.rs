//! Sequence-to-sequence time series forecasting with position-based content
//! attention.
//!
//! The crate implements a bidirectional peephole-LSTM encoder-decoder whose
//! attention scores can be modulated by learned per-lag parameters (the
//! `pi1`/`pi2`/`pi3` variants) so that pseudo-periodic structure in a series
//! is picked up directly by the attention weights. Training runs over a small
//! reverse-mode differentiation core; data handling, metrics, significance
//! testing and a CLI round out an end-to-end pipeline.

pub mod attention;
pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod recurrent;
pub mod rng;

pub use error::{Error, Result};
