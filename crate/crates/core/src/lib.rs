//! Context-aware social gaze prediction.
//!
//! The crate is organised around the pipeline stages:
//!
//! * [`data`] domain types, manifests, rasters and heatmap targets;
//! * [`synth`] synthetic dyadic scenes with exact geometric ground truth;
//! * [`context`] scene descriptions and their cache;
//! * [`nn`] and [`model`] the differentiable encoders and fusion stack;
//! * [`train`] the pretraining and classification phases;
//! * [`eval`] metrics, class-subset protocols, ablations and attention reports;
//! * [`experiment`] the end-to-end toy pipeline built from the above.

pub mod context;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
