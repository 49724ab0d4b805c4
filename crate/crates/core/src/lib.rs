//! Patch-trainability selection for joint denoising and demosaicing.
//!
//! A selector network scores every training patch of a restored image; the
//! scores reweight the per-patch restoration loss so gradient concentrates
//! on useful patches. The crate bundles the numeric core, the networks, the
//! Bayer degradation model, a synthetic long-tail corpus, the training
//! loop with its baselines, and evaluation tooling.

pub mod autograd;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod image;
pub mod models;
pub mod mosaic;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
