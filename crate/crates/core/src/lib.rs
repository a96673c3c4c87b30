//! Probabilistic neural radiance fields on a lattice foam.
//!
//! A generative model over small radiance fields (normalizing-flow prior,
//! hypernetwork decoder, weight perturbation), trained as a VAE with a
//! convolutional view encoder, and sampled at test time with annealed
//! Hamiltonian Monte Carlo through an exact foam renderer.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod field;
pub mod image;
pub mod inference;
pub mod io;
pub mod model;
pub mod nn;
pub mod render;
pub mod tensor;
pub mod vae;
pub mod vec3;

pub use error::{Error, Result};
