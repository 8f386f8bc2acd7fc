//! Adaptive training-distribution scheduling over noise-specification spaces.
//!
//! A denoiser trained on a single sampling distribution over noise
//! conditions usually does well on hard conditions and poorly on easy ones.
//! This crate computes a sampling distribution that equalizes the PSNR gap
//! between one blind model and per-condition ideal models, using:
//!
//! - [`noise`]: the joint Poisson-Gaussian-speckle forward model and metrics,
//! - [`landscape`]: discretized specification spaces, sparse designs and
//!   quadratic response-surface fits of PSNR landscapes,
//! - [`scheduler`]: dual-ascent updates of the sampling distribution,
//! - [`learners`]: the learner contract plus analytic learners with
//!   closed-form landscapes, Monte Carlo evaluation and a file protocol for
//!   learners living in another process,
//! - [`data`]: grayscale image ingestion and patch extraction.
//!
//! Data-parallel loops go through [`par::Exec`]; with the `parallel` feature
//! disabled every mode runs sequentially and produces identical results.

pub mod data;
pub mod error;
pub mod landscape;
pub mod learners;
pub mod noise;
pub mod par;
pub mod rng;
pub mod scheduler;

pub use error::{Error, Result};
pub use noise::{ImagePatch, NoiseParam, Specification, SpeckleConfig};
pub use par::Exec;
