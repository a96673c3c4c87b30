//! The noncentered posterior as an HMC target.
//!
//! ```text
//! log p(x | y) = log N(x; 0, I) - 0.5 |render(w_tilde(x)) - y|^2 / s^2 - 3N log(s sqrt(2 pi))
//! ```
//!
//! with `x = (z_tilde, delta)`, or `x = z_tilde` and `delta = 0` for the
//! latent-only variant. An evaluation keeps the prior and the squared error
//! apart so the same render serves every noise scale.

use serde::{Deserialize, Serialize};

use super::hmc::Target;
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::{gaussian_log_norm, log_standard_normal, record_half_sse, Model, Observation};
use crate::render::{Ray, SampleBatch};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RenderMode {
    Foam,
    /// Stratified quadrature with fresh jitter on every evaluation.
    ReseededQuadrature { n_samples: usize },
}

enum Samples {
    Fixed(SampleBatch),
    Reseeded { rays: Vec<Ray>, n_samples: usize },
}

pub struct PosteriorTarget<'a> {
    pub model: &'a Model,
    params: Matrix,
    samples: Samples,
    pixels: Matrix,
    n_obs: usize,
    with_delta: bool,
}

#[derive(Clone, Debug)]
pub struct PosteriorEval {
    pub log_prior: f64,
    pub prior_grad: Vec<f64>,
    pub half_sse: f64,
    pub half_sse_grad: Vec<f64>,
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(model: &'a Model, obs: &Observation, mode: RenderMode, with_delta: bool) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::InvalidArgument("conditioning on an empty observation".into()));
        }
        let samples = match mode {
            RenderMode::Foam => Samples::Fixed(SampleBatch::foam(&model.config.field, &obs.rays, &model.config.scene)),
            RenderMode::ReseededQuadrature { n_samples } => Samples::Reseeded {
                rays: obs.rays.clone(),
                n_samples,
            },
        };
        Ok(Self {
            model,
            params: Matrix::row(model.params.clone()),
            samples,
            pixels: obs.pixel_matrix(),
            n_obs: obs.len(),
            with_delta,
        })
    }

    /// `(z_tilde, delta)` target.
    pub fn full(model: &'a Model, obs: &Observation) -> Result<Self> {
        Self::new(model, obs, RenderMode::Foam, true)
    }

    /// `z_tilde`-only target with `delta` fixed at zero.
    pub fn latent_only(model: &'a Model, obs: &Observation) -> Result<Self> {
        Self::new(model, obs, RenderMode::Foam, false)
    }

    pub fn with_delta(&self) -> bool {
        self.with_delta
    }

    /// Expands a target-space state to the full `(z_tilde, delta)` vector.
    pub fn full_state(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        if !self.with_delta {
            v.resize(self.model.config.state_dim(), 0.0);
        }
        v
    }

    /// Log joint at noise scale `s`.
    pub fn log_joint(&self, x: &[f64], s: f64) -> Result<f64> {
        let e = self.evaluate(x, 0)?;
        Ok(self.log_density(&e, s))
    }
}

impl Target for PosteriorTarget<'_> {
    type Eval = PosteriorEval;

    fn dim(&self) -> usize {
        if self.with_delta {
            self.model.config.state_dim()
        } else {
            self.model.config.latent_dim
        }
    }

    fn evaluate(&self, x: &[f64], key: u64) -> Result<PosteriorEval> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("state has length {}, target expects {}", x.len(), self.dim())));
        }
        let fresh;
        let batch = match &self.samples {
            Samples::Fixed(b) => b,
            Samples::Reseeded { rays, n_samples } => {
                fresh = SampleBatch::quadrature(&self.model.config.field, rays, &self.model.config.scene, *n_samples, key);
                &fresh
            }
        };
        let mut tape = Tape::new();
        let p = tape.constant(self.params.clone());
        let xv = tape.input(Matrix::row(x.to_vec()));
        let w = self.model.record_weights(&mut tape, p, xv, self.with_delta);
        let half = record_half_sse(&mut tape, &self.model.config.field, w, batch, &self.pixels);
        tape.check_finite()?;
        let grad = tape.backward(half).wrt(xv).into_vec();
        Ok(PosteriorEval {
            log_prior: log_standard_normal(x),
            prior_grad: x.iter().map(|v| -v).collect(),
            half_sse: tape.value(half).item(),
            half_sse_grad: grad,
        })
    }

    fn log_density(&self, e: &PosteriorEval, s: f64) -> f64 {
        e.log_prior - e.half_sse / (s * s) + gaussian_log_norm(3 * self.n_obs, s)
    }

    fn gradient(&self, e: &PosteriorEval, s: f64) -> Vec<f64> {
        let inv = 1.0 / (s * s);
        e.prior_grad
            .iter()
            .zip(&e.half_sse_grad)
            .map(|(p, g)| p - inv * g)
            .collect()
    }
}
