//! Character-level recurrent language models for Persian poetry.
//!
//! The toolkit learns next-character distributions from a corpus via
//! sliding-window pattern extraction and a stacked recurrent network,
//! then generates fixed-length text from a seed. Merging corpora from
//! two poets before training yields blended-style generation.
//!
//! The pipeline:
//!
//! 1. [`corpus`] loads and normalizes text, builds the character
//!    vocabulary, and extracts the windowed pattern dataset.
//! 2. [`network`] defines the `baseline` and `deep` presets over GRU or
//!    LSTM cells and evaluates them as a pure forward pass.
//! 3. [`trainer`] runs cross-entropy training with full backpropagation
//!    through time, Adam, and gradient clipping, and persists
//!    checkpoints.
//! 4. [`generator`] produces exactly `limit` characters from a seed by
//!    predict-append-shift.
//! 5. [`analysis`] emits learning curves and word-frequency comparisons.
//!
//! Everything is deterministic given the seeds; see [`numerics`] for the
//! pinned random generator.

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod generator;
pub mod network;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
