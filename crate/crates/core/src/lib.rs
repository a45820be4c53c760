//! Egocentric 3D hand-pose forecasting at desk scale.
//!
//! The crate covers the full pipeline: rigid-body geometry and egocentric
//! canonicalization, a bit-exact clip-bundle format with a synthetic
//! kinematic generator, multimodal context featurizers, composite geometric
//! training objectives with exact gradients, a cross-attention forecaster
//! trained with AdamW under a warmup-cosine schedule, constant-velocity and
//! static baselines, and an ADE/FDE/MPJPE evaluation harness with egomotion
//! stratification and corruption ablations.
//!
//! Everything is deterministic: all randomness flows from explicit seeds
//! through a splitmix64 stream, training math runs in binary64, and storage
//! formats are little-endian binary32 with documented layouts.

pub mod baselines;
pub mod context;
pub mod dataio;
pub mod error;
pub mod forecaster;
pub mod geometry;
pub mod metrics;
pub mod nnkernel;
pub mod objectives;
pub mod trainer;

pub use error::{Error, Result};
