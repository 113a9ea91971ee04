//! Spiking neural network toolkit built around hybrid temporal-bit spike
//! coding.
//!
//! Images are turned into spike trains by [`encoders`] (rate, TTFS, bit-plane
//! and the two hybrids), run through hard-reset integrate-and-fire networks
//! ([`neuron`], [`autodiff`]) trained with surrogate-gradient BPTT, and
//! compared across encoders by the [`harness`].

pub mod autodiff;
pub mod data;
pub mod encoders;
pub mod harness;
pub mod neuron;
pub mod rng;
pub mod tensor;

pub use encoders::{BitOrder, EncoderConfig, Encoding, ImageBatch, Rounding, SpikeTrain};
pub use rng::SeededRng;
pub use tensor::Tensor;
