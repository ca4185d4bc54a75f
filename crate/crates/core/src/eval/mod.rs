//! Image-quality metrics, synthetic phantoms and experiment configuration.

pub mod config;
pub mod metrics;
pub mod phantom;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use metrics::{mse, psnr, ssim, Metrics, PSNR_CAP};
pub use phantom::{augment, synth_phantoms};
