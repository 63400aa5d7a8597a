//! Manifold-matching GAN training at desk scale.
//!
//! The discriminator's last hidden layer gives a vector representation for
//! every sample. Real and generated representations are each summarized by a
//! sphere (centroid plus radius), optionally measured in a kernel-induced
//! feature space, and the generator is trained to make the two spheres
//! coincide. A correlation-matrix penalty keeps generated representations
//! diverse, and the spheres are tracked across mini-batches with exponential
//! moving averages.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod kernel;
pub mod loss;
pub mod manifold;
pub mod metrics;
pub mod neural;
pub mod regularizer;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
