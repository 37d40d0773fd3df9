//! Unbiased risk estimators for self-supervised image denoising.
//!
//! The crate implements SURE, Monte-Carlo SURE, eSURE, PURE and ePURE as
//! per-pixel risk functionals ([`risk`]), reference denoisers with closed-form
//! divergences that act as test oracles ([`denoiser`]), Monte-Carlo
//! unbiasedness studies ([`study`]), and a small residual convolutional
//! network with its own reverse-mode gradients ([`net`]) so each estimator can
//! be used directly as a training loss. Synthetic phantoms and graymap I/O
//! ([`data`]), PSNR/SSIM ([`metrics`]) and a batch command-line workbench
//! ([`cli`]) complete the pipeline.
//!
//! All randomness flows through [`rng::SeededStream`].

pub mod cli;
pub mod data;
pub mod denoiser;
pub mod error;
pub mod image;
pub mod metrics;
pub mod net;
pub mod noise;
pub mod report;
pub mod risk;
pub mod rng;
pub mod stats;
pub mod study;

pub use denoiser::Denoiser;
pub use error::{Error, Result};
pub use image::Image;
pub use noise::NoiseSpec;
pub use risk::{DivergenceEstimate, RiskValue};
pub use rng::SeededStream;
