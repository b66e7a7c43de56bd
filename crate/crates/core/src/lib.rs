//! Compress trained neural-network parameter sets through a fully-connected
//! variational autoencoder.
//!
//! The pipeline is: train a reference classifier on MNIST ([`models`]),
//! flatten and chunk its parameters ([`codec`]), generate noisy variants as
//! training data ([`augment`]), fit a VAE over the chunks ([`vae`]), and keep
//! only the per-chunk latent means as the compressed artifact
//! ([`compress`]). Decoding those latents gives back a runnable model.

pub mod augment;
pub mod codec;
pub mod compress;
pub mod mnist;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod vae;
pub mod weights;

pub use nn::{ModelKind, ParamSet, Tensor};
