//! Gated recurrent networks with constant-gate slim variants.
//!
//! - [`numerics`]: row-major matrices, activations, seeded init.
//! - [`cells`]: the `srnn`, `lstm`, `lstm6` and `lstm_c6` cell kernels,
//!   readout layer, bidirectional wrapper and cost accounting.
//! - [`training`]: exact BPTT, losses, optimizers, finite-difference oracle
//!   and the epoch loop.
//! - [`data`]: vocabulary, pad/truncate, embeddings, synthetic tasks, TSV
//!   loading.

pub mod cells;
pub mod data;
pub mod error;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
