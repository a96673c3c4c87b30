//! The generative model over radiance fields.
//!
//! ```text
//! z_tilde ~ N(0, I)        z = m(z_tilde; zeta)      (affine-coupling flow)
//! w = h(z; theta)                                     (hypernetwork)
//! delta ~ N(0, I)          w_tilde = w + sqrt(alpha_w) delta
//! y_n ~ N(render(w_tilde, r_n), s^2)                  (per channel)
//! ```
//!
//! Inference works on the noncentered state `(z_tilde, delta)`, whose prior
//! is a standard normal. All learned parameters (flow, hypernetwork, view
//! encoder, and the learned prior potential) live in one flat vector so the
//! optimizer and the checkpoint treat them uniformly.

pub mod checkpoint;
pub mod flow;
pub mod hypernet;

use std::f64::consts::PI;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldWeights};
use crate::render::{FoamScene, Ray, SampleBatch};
use crate::tensor::Matrix;
use crate::vae::encoder::{EncoderConfig, EncoderLayout};
use crate::vae::pool::GaussianPotential;

pub use flow::{Flow, FlowLayout};
pub use hypernet::HypernetLayout;

/// Weight-perturbation variance `0.025^2`.
pub const DEFAULT_ALPHA_W: f64 = 0.025 * 0.025;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub field: FieldConfig,
    pub latent_dim: usize,
    pub flow_hidden: usize,
    pub hypernet_hidden: usize,
    pub hypernet_layers: usize,
    pub encoder: EncoderConfig,
    pub alpha_w: f64,
    /// Bounding box and background; its grid size must match `field`.
    pub scene: FoamScene,
    pub perm_seed: u64,
}

impl ModelConfig {
    /// Full-size architecture: 20,868 field weights, 128-dim codes, 512-unit
    /// flow and hypernetwork layers.
    pub fn full_scale() -> Self {
        Self {
            field: FieldConfig::FULL_SCALE,
            latent_dim: 128,
            flow_hidden: 512,
            hypernet_hidden: 512,
            hypernet_layers: 2,
            encoder: EncoderConfig::new(128, 128),
            alpha_w: DEFAULT_ALPHA_W,
            scene: FoamScene::new(FieldConfig::FULL_SCALE.grid_size),
            perm_seed: 0,
        }
    }

    /// Desk-scale defaults: 32x32 images, a 16^3 lattice, 16-dim codes.
    pub fn desk() -> Self {
        let field = FieldConfig {
            encoding_order: 4,
            hidden_width: 32,
            hidden_layers: 2,
            grid_size: 16,
        };
        Self {
            field,
            latent_dim: 16,
            flow_hidden: 64,
            hypernet_hidden: 128,
            hypernet_layers: 2,
            encoder: EncoderConfig::new(32, 32),
            alpha_w: DEFAULT_ALPHA_W,
            scene: FoamScene::new(field.grid_size),
            perm_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.scene.validate()?;
        if self.scene.grid_size != self.field.grid_size {
            return Err(Error::InvalidArgument(format!(
                "scene grid {} differs from field grid {}",
                self.scene.grid_size, self.field.grid_size
            )));
        }
        if !(self.alpha_w >= 0.0) {
            return Err(Error::InvalidArgument("alpha_w must be nonnegative".into()));
        }
        FlowLayout::new(self.latent_dim, self.flow_hidden)?;
        if self.hypernet_hidden == 0 {
            return Err(Error::InvalidArgument("hypernetwork needs hidden units".into()));
        }
        EncoderLayout::new(self.encoder.clone(), self.latent_dim)?;
        Ok(())
    }

    pub fn flow_layout(&self) -> FlowLayout {
        FlowLayout {
            dim: self.latent_dim,
            hidden: self.flow_hidden,
        }
    }

    pub fn hypernet_layout(&self) -> HypernetLayout {
        HypernetLayout {
            latent_dim: self.latent_dim,
            hidden: self.hypernet_hidden,
            hidden_layers: self.hypernet_layers,
            output_dim: self.field.weight_count(),
        }
    }

    pub fn encoder_layout(&self) -> EncoderLayout {
        EncoderLayout::new(self.encoder.clone(), self.latent_dim).expect("validated encoder config")
    }

    pub fn layout(&self) -> ParamLayout {
        let flow = self.flow_layout().param_count();
        let hyper = self.hypernet_layout().param_count();
        let enc = self.encoder_layout().param_count();
        ParamLayout {
            flow: 0,
            hypernet: flow,
            encoder: flow + hyper,
            prior: flow + hyper + enc,
            total: flow + hyper + enc + 2 * self.latent_dim,
        }
    }

    /// Dimension of the noncentered state `(z_tilde, delta)`.
    pub fn state_dim(&self) -> usize {
        self.latent_dim + self.field.weight_count()
    }
}

/// Offsets of each parameter block in the flat model vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub flow: usize,
    pub hypernet: usize,
    pub encoder: usize,
    /// `mu_0` followed by `log_scale_0`.
    pub prior: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub perms: Vec<Vec<usize>>,
    pub params: Vec<f64>,
}

/// Rays and their observed colors.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub rays: Vec<Ray>,
    pub pixels: Vec<[f64; 3]>,
}

impl Observation {
    pub fn new(rays: Vec<Ray>, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if rays.len() != pixels.len() {
            return Err(Error::Shape(format!(
                "{} rays but {} pixels",
                rays.len(),
                pixels.len()
            )));
        }
        Ok(Self { rays, pixels })
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn pixel_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.pixels)
    }
}

/// The noncentered inference state.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub z_tilde: Vec<f64>,
    pub delta: Vec<f64>,
}

impl LatentState {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            z_tilde: vec![0.0; k],
            delta: vec![0.0; d],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.z_tilde.clone();
        v.extend_from_slice(&self.delta);
        v
    }

    pub fn from_flat(flat: &[f64], k: usize) -> Self {
        Self {
            z_tilde: flat[..k].to_vec(),
            delta: flat[k..].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub alpha_w: f64,
    pub s: f64,
}

impl Model {
    /// Fresh parameters: identity flow, hypernetwork centered on a random
    /// field, small encoder head, standard-normal prior potential.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = config.layout();
        let mut params = vec![0.0; layout.total];
        config
            .flow_layout()
            .init(&mut rng, &mut params[layout.flow..layout.hypernet]);
        config
            .hypernet_layout()
            .init(config.field, &mut rng, &mut params[layout.hypernet..layout.encoder]);
        config
            .encoder_layout()
            .init(&mut rng, &mut params[layout.encoder..layout.prior]);
        let perms = flow::random_permutations(config.latent_dim, config.perm_seed);
        Ok(Self {
            config,
            perms,
            params,
        })
    }

    pub fn from_parts(config: ModelConfig, perms: Vec<Vec<usize>>, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        flow::validate_permutations(&perms, config.latent_dim)?;
        if params.len() != config.layout().total {
            return Err(Error::Shape(format!(
                "model has {} parameters, config needs {}",
                params.len(),
                config.layout().total
            )));
        }
        Ok(Self {
            config,
            perms,
            params,
        })
    }

    pub fn layout(&self) -> ParamLayout {
        self.config.layout()
    }

    pub fn flow(&self) -> Flow {
        let l = self.layout();
        Flow {
            layout: self.config.flow_layout(),
            params: self.params[l.flow..l.hypernet].to_vec(),
            perms: self.perms.clone(),
        }
    }

    pub fn rc_perms(&self) -> Vec<Rc<[usize]>> {
        self.perms.iter().map(|p| Rc::from(p.as_slice())).collect()
    }

    pub fn hypernet_params(&self) -> &[f64] {
        let l = self.layout();
        &self.params[l.hypernet..l.encoder]
    }

    pub fn encoder_params(&self) -> &[f64] {
        let l = self.layout();
        &self.params[l.encoder..l.prior]
    }

    /// Learned prior potential `(mu_0, tau_0)`.
    pub fn prior_potential(&self) -> GaussianPotential {
        let l = self.layout();
        let k = self.config.latent_dim;
        GaussianPotential::from_log_scale(
            self.params[l.prior..l.prior + k].to_vec(),
            &self.params[l.prior + k..l.total],
        )
    }

    /// `w = h(z; theta)`.
    pub fn decode(&self, z: &[f64]) -> Result<FieldWeights> {
        self.config
            .hypernet_layout()
            .weights(self.config.field, self.hypernet_params(), z)
    }

    /// Pushes a state through the flow, hypernetwork and perturbation.
    pub fn field_weights(&self, state: &LatentState) -> Result<FieldWeights> {
        let (z, _) = self.flow().forward(&state.z_tilde)?;
        let w = self.decode(&z)?;
        perturb_weights(&w, &state.delta, self.config.alpha_w)
    }

    pub fn noise(&self, s: f64) -> NoiseModel {
        NoiseModel {
            alpha_w: self.config.alpha_w,
            s,
        }
    }

    /// Records `w_tilde` (`1 x D`) for a state node holding `z_tilde`
    /// followed, when `with_delta`, by `delta`. `params` is the flat model
    /// vector as a `1 x P` node.
    pub fn record_weights(&self, tape: &mut Tape, params: Var, state: Var, with_delta: bool) -> Var {
        let k = self.config.latent_dim;
        let l = self.layout();
        let zt = tape.slice_cols(state, 0, k);
        let (z, _) = self
            .config
            .flow_layout()
            .forward(tape, params, l.flow, &self.rc_perms(), zt);
        let w = self.config.hypernet_layout().forward(tape, params, l.hypernet, z);
        if !with_delta {
            return w;
        }
        let d = self.config.field.weight_count();
        let delta = tape.slice_cols(state, k, k + d);
        let scaled = tape.scale(delta, self.config.alpha_w.sqrt());
        tape.add(w, scaled)
    }

    /// `sample_prior`: ancestral draw of `(z_tilde, delta)` and the field
    /// it decodes to.
    pub fn sample_prior(&self, seed: u64) -> Result<(LatentState, FieldWeights)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.config.latent_dim;
        let d = self.config.field.weight_count();
        let z_tilde = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let delta = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let state = LatentState { z_tilde, delta };
        let w = self.field_weights(&state)?;
        Ok((state, w))
    }
}

/// `w + sqrt(alpha_w) delta`.
pub fn perturb_weights(w: &FieldWeights, delta: &[f64], alpha_w: f64) -> Result<FieldWeights> {
    if delta.len() != w.as_slice().len() {
        return Err(Error::Shape(format!(
            "perturbation has length {}, weights {}",
            delta.len(),
            w.as_slice().len()
        )));
    }
    let a = alpha_w.sqrt();
    let flat = w.as_slice().iter().zip(delta).map(|(w, d)| w + a * d).collect();
    FieldWeights::new(*w.config(), flat)
}

/// Standard-normal log-density of a flat vector, constants included.
pub fn log_standard_normal(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    -0.5 * sq - 0.5 * x.len() as f64 * (2.0 * PI).ln()
}

pub fn log_prior(state: &LatentState) -> f64 {
    log_standard_normal(&state.z_tilde) + log_standard_normal(&state.delta)
}

/// Normalizing constant of `3N` independent `N(., s^2)` terms.
pub fn gaussian_log_norm(n_scalars: usize, s: f64) -> f64 {
    -(n_scalars as f64) * (s * (2.0 * PI).sqrt()).ln()
}

/// Records `0.5 * sum (render - y)^2` over all rays and channels.
pub fn record_half_sse(tape: &mut Tape, field: &FieldConfig, weights: Var, batch: &SampleBatch, pixels: &Matrix) -> Var {
    let colors = batch.record(tape, field, weights);
    let y = tape.constant(pixels.clone());
    let r = tape.sub(colors, y);
    let sq = tape.square(r);
    let s = tape.sum(sq);
    tape.scale(s, 0.5)
}

/// Per-channel Gaussian log-likelihood of the observation under the foam
/// renderer.
pub fn log_likelihood(w: &FieldWeights, obs: &Observation, scene: &FoamScene, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("observation scale must be positive, got {s}")));
    }
    let batch = SampleBatch::foam(w.config(), &obs.rays, scene);
    let mut tape = Tape::new();
    let wv = tape.constant(Matrix::row(w.as_slice().to_vec()));
    let half = record_half_sse(&mut tape, w.config(), wv, &batch, &obs.pixel_matrix());
    tape.check_finite()?;
    Ok(-tape.value(half).item() / (s * s) + gaussian_log_norm(3 * obs.len(), s))
}

/// `log p(z_tilde, delta) + log p(y | w_tilde(z_tilde, delta), r)`.
pub fn log_joint_noncentered(model: &Model, state: &LatentState, obs: &Observation, s: f64) -> Result<f64> {
    let w = model.field_weights(state)?;
    Ok(log_prior(state) + log_likelihood(&w, obs, &model.config.scene, s)?)
}
