//! Conditioned variational autoencoder for constrained top-N recommendation.
//!
//! Given a user's binary interaction history and an optional item category,
//! the model ranks the whole item catalogue so that items of the requested
//! category fill the top of the list. An unconditioned model (zero
//! categories) is exactly the multinomial VAE for collaborative filtering.
//!
//! This crate is `no_std` and only needs `alloc`. It holds everything that is
//! pure computation:
//!
//! * [`matrix`], [`ops`], [`adam`], [`gradcheck`], [`rng`]: the dense numeric
//!   kernel the hand-derived backpropagation runs on.
//! * [`data`]: interaction filtering, held-out splits and condition expansion.
//! * [`model`]: encoder, reparameterized sampling, decoder, conditioned loss
//!   and gradients.
//! * [`train`]: two-phase KL annealing with early stopping.
//! * [`eval`]: ranking construction and recall/nDCG under the total, normal
//!   and conditioned protocols.
//! * [`analyze`]: ranking-position histograms, top-k purity, latent export
//!   and PCA.
//!
//! File formats, checkpoints and the command line live in the `cvae` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod analyze;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod gradcheck;
pub mod matrix;
pub mod model;
pub mod ops;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::RngStream;
