//! Audio-driven synthesis of personalized 3D talking faces.
//!
//! The pipeline decomposes talking-head video into pose-normalized geometry
//! (468 tracked vertices) and a lighting-normalized 256×256 texture atlas,
//! learns a joint audio→(geometry, texture, blendshapes) model on the
//! normalized data, and re-synthesizes full frames by inverting the
//! normalization against a target video.
//!
//! Module map:
//! - [`geom`]: rigid alignment, cylindrical unwrapping, triangle warping.
//! - [`light`]: IRLS gain estimation, color transfer, symmetrization,
//!   specularity removal.
//! - [`audio`]: STFT spectrograms aligned to video frames.
//! - [`model`]: the encoder/decoder network, losses, training, inference.
//! - [`synth`]: textured-mesh export and compositing back into frames.
//! - [`metrics`]: SSIM / mouth landmark-distance evaluation.
//! - [`synthkit`]: procedural synthetic faces with exact ground truth,
//!   used as oracles throughout the test suite.
//! - [`cli`]: the `audioface` command-line pipeline driver.
//!
//! Runnable walkthroughs for each stage live in `examples/`.

pub mod audio;
pub mod cli;
pub mod config;
pub mod error;
pub mod geom;
pub mod image;
pub mod landmarks;
pub mod light;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod ssim;
pub mod synth;
pub mod synthkit;
pub mod topology;

pub use error::PipelineError;

/// Convenience result alias used across the crate.
pub type Result<T> = std::result::Result<T, PipelineError>;
