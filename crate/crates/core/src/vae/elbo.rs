//! Single-sample ELBO estimates for the training objective.
//!
//! For one object with views `j = 1..J`:
//!
//! ```text
//! q(z | views) = pooled Gaussian of the prior potential and J view potentials
//! z = mu_hat + tau_hat^{-1/2} eps,   eps ~ N(0, I)
//! ELBO = c * log p(y_sub | h(z), r_sub) + log N(m^{-1}(z)) + log|d m^{-1}/dz| - log q(z)
//! ```
//!
//! where `c = total rays / subsampled rays` keeps the likelihood term
//! unbiased. No weight perturbation is applied during training.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::encoder::EncoderLayout;
use super::pool::pool_on_tape;
use crate::autodiff::{Tape, Var};
use crate::data::View;
use crate::error::{Error, Result};
use crate::model::{record_half_sse, Model, ModelConfig};
use crate::render::SampleBatch;
use crate::tensor::Matrix;

/// Encoder inputs and the likelihood rays of one object.
#[derive(Clone, Debug)]
pub struct ObjectBatch {
    /// `(image, camera)` matrices of each conditioning view.
    pub views: Vec<(Matrix, Matrix)>,
    pub samples: SampleBatch,
    pub pixels: Matrix,
    /// Number of rays the subsample stands for.
    pub total_rays: usize,
}

impl ObjectBatch {
    /// `rays` lists `(view, pixel)` pairs for the likelihood; `None` uses
    /// every pixel of every view.
    pub fn new(config: &ModelConfig, views: &[&View], rays: Option<&[(usize, usize)]>) -> Result<Self> {
        let enc = config.encoder_layout();
        let inputs = views
            .iter()
            .map(|v| Ok((enc.image_matrix(&v.image)?, EncoderLayout::camera_matrix(&v.camera))))
            .collect::<Result<Vec<_>>>()?;
        let total_rays: usize = views.iter().map(|v| v.image.n_pixels()).sum();
        let all: Vec<(usize, usize)>;
        let rays = match rays {
            Some(r) => r,
            None => {
                all = views
                    .iter()
                    .enumerate()
                    .flat_map(|(j, v)| (0..v.image.n_pixels()).map(move |p| (j, p)))
                    .collect();
                &all
            }
        };
        let ray_list: Vec<_> = rays
            .iter()
            .map(|&(j, p)| views[j].camera.ray(p / views[j].image.width, p % views[j].image.width))
            .collect();
        let pixels: Vec<[f64; 3]> = rays.iter().map(|&(j, p)| views[j].image.pixel_at(p)).collect();
        Ok(Self {
            views: inputs,
            samples: SampleBatch::foam(&config.field, &ray_list, &config.scene),
            pixels: Matrix::from_rows(&pixels),
            total_rays,
        })
    }

    pub fn n_rays(&self) -> usize {
        self.pixels.rows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboOptions {
    pub s: f64,
    /// Multiplies the likelihood term; 1 is the ELBO proper.
    pub likelihood_weight: f64,
}

impl ElboOptions {
    pub fn new(s: f64) -> Self {
        Self {
            s,
            likelihood_weight: 1.0,
        }
    }
}

/// Object-averaged ELBO and its parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ElboTerms<T> {
    pub total: T,
    pub log_likelihood: T,
    pub log_prior: T,
    pub log_q: T,
}

/// Standard-normal noise for each object, drawn in order from `seed`.
pub fn draw_noise(k: usize, n_objects: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_objects)
        .map(|_| (0..k).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Records the ELBO terms of one object. `params` is the flat model vector.
pub fn record_object(
    tape: &mut Tape,
    model: &Model,
    params: Var,
    object: &ObjectBatch,
    eps: &[f64],
    opts: ElboOptions,
) -> ElboTerms<Var> {
    let cfg = &model.config;
    let k = cfg.latent_dim;
    let l = cfg.layout();
    let enc = cfg.encoder_layout();

    let mut parts = vec![(tape.view(params, l.prior, 1, k), tape.view(params, l.prior + k, 1, k))];
    for (img, cam) in &object.views {
        let i = tape.constant(img.clone());
        let c = tape.constant(cam.clone());
        parts.push(enc.forward(tape, params, l.encoder, i, c));
    }
    let (mu, tau) = pool_on_tape(tape, &parts);
    let log_tau = tape.log(tau);
    let neg_half = tape.scale(log_tau, -0.5);
    let sigma = tape.exp(neg_half);
    let e = tape.constant(Matrix::row(eps.to_vec()));
    let se = tape.mul(sigma, e);
    let z = tape.add(mu, se);

    // log q(z) = sum(0.5 log tau) - 0.5 |eps|^2 - K/2 log 2 pi
    let sum_log_tau = tape.sum(log_tau);
    let eps_sq: f64 = eps.iter().map(|v| v * v).sum();
    let norm = -0.5 * eps_sq - 0.5 * k as f64 * (2.0 * PI).ln();
    let half_log_tau = tape.scale(sum_log_tau, 0.5);
    let log_q = tape.shift(half_log_tau, norm);

    let (x, logdet) = cfg
        .flow_layout()
        .inverse(tape, params, l.flow, &model.rc_perms(), z);
    let x2 = tape.square(x);
    let sx2 = tape.sum(x2);
    let base = tape.scale(sx2, -0.5);
    let base = tape.shift(base, -0.5 * k as f64 * (2.0 * PI).ln());
    let logdet = tape.sum(logdet);
    let log_prior = tape.add(base, logdet);

    let w = cfg.hypernet_layout().forward(tape, params, l.hypernet, z);
    let half = record_half_sse(tape, &cfg.field, w, &object.samples, &object.pixels);
    let c = object.total_rays as f64 / object.n_rays() as f64;
    let s = opts.s;
    let ll = tape.scale(half, -c / (s * s));
    let log_norm = -3.0 * object.total_rays as f64 * (s * (2.0 * PI).sqrt()).ln();
    let log_likelihood = tape.shift(ll, log_norm);

    let weighted = tape.scale(log_likelihood, opts.likelihood_weight);
    let kl_free = tape.sub(log_prior, log_q);
    let total = tape.add(weighted, kl_free);
    ElboTerms {
        total,
        log_likelihood,
        log_prior,
        log_q,
    }
}

fn read_terms(tape: &Tape, t: &ElboTerms<Var>) -> ElboTerms<f64> {
    ElboTerms {
        total: tape.value(t.total).item(),
        log_likelihood: tape.value(t.log_likelihood).item(),
        log_prior: tape.value(t.log_prior).item(),
        log_q: tape.value(t.log_q).item(),
    }
}

fn first_non_finite(t: &ElboTerms<f64>) -> Option<&'static str> {
    [
        ("log_likelihood", t.log_likelihood),
        ("log_prior", t.log_prior),
        ("log_q", t.log_q),
        ("elbo", t.total),
    ]
    .into_iter()
    .find(|(_, v)| !v.is_finite())
    .map(|(n, _)| n)
}

fn object_pass(
    model: &Model,
    params: &[f64],
    object: &ObjectBatch,
    eps: &[f64],
    opts: ElboOptions,
    with_grad: bool,
) -> (ElboTerms<f64>, Option<Vec<f64>>) {
    let mut tape = Tape::new();
    let p = if with_grad {
        tape.input(Matrix::row(params.to_vec()))
    } else {
        tape.constant(Matrix::row(params.to_vec()))
    };
    let terms = record_object(&mut tape, model, p, object, eps, opts);
    let values = read_terms(&tape, &terms);
    let grad = (with_grad && values.total.is_finite()).then(|| tape.backward(terms.total).wrt(p).into_vec());
    (values, grad)
}

fn average(parts: &[ElboTerms<f64>]) -> ElboTerms<f64> {
    let n = parts.len() as f64;
    let mut out = ElboTerms::default();
    for t in parts {
        out.total += t.total / n;
        out.log_likelihood += t.log_likelihood / n;
        out.log_prior += t.log_prior / n;
        out.log_q += t.log_q / n;
    }
    out
}

/// Object-averaged ELBO; deterministic per seed.
pub fn elbo_estimate(model: &Model, batch: &[ObjectBatch], opts: ElboOptions, seed: u64) -> Result<ElboTerms<f64>> {
    let eps = draw_noise(model.config.latent_dim, batch.len(), seed);
    let parts: Vec<_> = batch
        .iter()
        .zip(&eps)
        .map(|(o, e)| object_pass(model, &model.params, o, e, opts, false).0)
        .collect();
    Ok(average(&parts))
}

/// ELBO and its gradient with respect to the flat model parameters.
///
/// Objects are processed in parallel; their gradients are summed in object
/// order so the result does not depend on the schedule.
pub fn elbo_and_gradient(
    model: &Model,
    batch: &[ObjectBatch],
    opts: ElboOptions,
    seed: u64,
    iteration: usize,
) -> Result<(ElboTerms<f64>, Vec<f64>)> {
    let eps = draw_noise(model.config.latent_dim, batch.len(), seed);
    let parts: Vec<_> = batch
        .par_iter()
        .zip(eps.par_iter())
        .map(|(o, e)| object_pass(model, &model.params, o, e, opts, true))
        .collect();
    let terms: Vec<_> = parts.iter().map(|p| p.0).collect();
    let avg = average(&terms);
    if let Some(term) = terms.iter().find_map(first_non_finite) {
        return Err(Error::TrainingDiverged {
            iteration,
            term: term.to_string(),
        });
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    for (_, g) in parts {
        let g = g.expect("finite terms have gradients");
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b / n;
        }
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged {
            iteration,
            term: format!("gradient coordinate {i}"),
        });
    }
    Ok((avg, grad))
}
