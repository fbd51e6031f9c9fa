//! Superpixels from the last hidden layer of under-parameterized,
//! non-convolutional deep decoders.
//!
//! A small decoder is fitted per image from blurred noise. Its target is
//! the RGB image plus lightness modulated by sinusoidal position
//! encodings, so the last hidden activation maps carry both edge and
//! spatial information. The maps of a few independently seeded decoders
//! become per-pixel embeddings, which a SLIC-like clustering turns into
//! connected superpixels.
//!
//! Pipeline:
//!
//! 1. [`decoder::extract_embeddings`] fits the ensemble and stacks the maps.
//! 2. [`clustering::cluster`] groups pixels into a [`Labeling`].
//! 3. [`metrics::evaluate`] scores a labeling against ground truth;
//!    [`foreground`] turns superpixels into a binary foreground mask.
//!
//! Data-parallel loops go through [`Exec`]; results are identical with
//! and without the `parallel` feature.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod clustering;
pub mod components;
pub mod decoder;
pub mod diagnostics;
pub mod encoding;
pub mod error;
pub mod foreground;
pub mod imaging;
pub mod labeling;
pub mod metrics;
pub mod parallel;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use labeling::Labeling;
pub use parallel::Exec;
pub use tensor::Tensor;
