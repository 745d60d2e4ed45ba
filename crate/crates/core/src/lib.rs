//! Clean-label generation with Wasserstein GANs for binary classification
//! under class-conditional label noise.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: dense networks, backprop, RMSProp, clipping.
//! * [`data`]: datasets, IDX loading, synthetic Gaussians, splits.
//! * [`noise`]: CCN noise injection and the appended label block.
//! * [`wgan`]: WGAN training and clean-data generation.
//! * [`analysis`]: KL divergence between clean and noisy posteriors.
//! * [`eval`]: classifier M, metrics, trials, Friedman and Nemenyi tests.

mod error;
pub mod rng;

pub mod analysis;
pub mod data;
pub mod eval;
pub mod nn;
pub mod noise;
pub mod wgan;

pub use error::{Error, Result};

pub use data::{Label, LabeledDataset};
pub use nn::{Activation, LayerSpec, MlpNetwork};
pub use noise::{AppendConfig, NoiseRates};
