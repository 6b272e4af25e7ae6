// SPDX-License-Identifier: MIT OR Apache-2.0

//! Failure-vs-success audit of sparse-autoencoder features on IOI-style
//! prompts.
//!
//! The pipeline reads a prompt corpus, per-prompt success labels and an
//! activation matrix, then reports per-feature Welch statistics with Holm
//! correction, stratified failure rates with a Fisher test, cross-validated
//! failure prediction, ablation and multi-seed comparisons, and SVG figures.

pub mod contingency;
pub mod corpus;
pub mod error;
pub mod featurestats;
pub mod predictor;
pub mod report;
pub mod store;
pub mod sweep;
pub mod synth;

pub use error::{AuditError, Result};
