//! Sentence-structure detector core.
//!
//! A document is a sequence of sentence embeddings. A small transformer
//! encoder with a learned `cls` slot models the relations between sentences
//! and a two-layer head turns the final `cls` state into a single logit
//! (machine-generated vs. human-written). Training combines plain binary
//! cross-entropy with two counterfactual terms: one that swaps the word-level
//! realisation of the sentences (same structure, different wording) and one
//! that keeps the attention relations of the factual pass fixed while the
//! content comes from a document on another topic.
//!
//! The crate is `no_std` + `alloc`; file formats, reports and the CLI live in
//! the `sentstruct` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod counterfactual;
pub mod data;
pub mod encoder;
mod error;
pub mod real;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, NumericSite, Result};
pub use real::Real;
pub use tensor::Tensor;
