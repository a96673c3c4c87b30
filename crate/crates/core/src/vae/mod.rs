//! Amortized inference and training: view encoder, potential pooling, ELBO
//! estimation and the optimization loop.

pub mod adam;
pub mod elbo;
pub mod encoder;
pub mod pool;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use encoder::{EncoderConfig, EncoderLayout};
pub use pool::{pool_potentials, GaussianPotential};
