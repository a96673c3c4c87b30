//! Mean-field Gaussian variational inference over the latent state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::hmc::{mix, Target};
use crate::error::{Error, Result};
use crate::vae::{Adam, AdamConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientEstimator {
    /// Sticking the landing: the score of `q` is left out of the gradient
    /// path, so the estimate vanishes when `q` matches the target.
    Stl,
    /// Reparameterized likelihood term plus the analytic entropy gradient.
    Plain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViParams {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl ViParams {
    pub fn new(mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != log_sigma.len() {
            return Err(Error::Shape(format!(
                "mu has length {}, log_sigma {}",
                mu.len(),
                log_sigma.len()
            )));
        }
        if mu.iter().chain(&log_sigma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("variational parameters must be finite".into()));
        }
        Ok(Self { mu, log_sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.mu.clone();
        v.extend_from_slice(&self.log_sigma);
        v
    }

    fn from_flat(v: &[f64]) -> Self {
        let n = v.len() / 2;
        Self {
            mu: v[..n].to_vec(),
            log_sigma: v[n..].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViConfig {
    pub n_steps: usize,
    pub adam: AdamConfig,
    pub init_log_sigma: f64,
    /// Noise scale of the targeted posterior.
    pub s: f64,
    pub seed: u64,
    pub estimator: GradientEstimator,
}

impl ViConfig {
    /// 1500 steps targeting the `s = 0.1` posterior.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            n_steps: 1500,
            adam: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
            init_log_sigma: -2.0,
            s: 0.1,
            seed,
            estimator: GradientEstimator::Stl,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ViOutcome {
    pub params: ViParams,
    /// Single-sample ELBO estimate at each step.
    pub elbo: Vec<f64>,
}

/// One-sample gradient of the ELBO with respect to `(mu, log_sigma)` given
/// the target gradient `g` at `x = mu + sigma * eps`.
pub fn elbo_gradient(params: &ViParams, eps: &[f64], g: &[f64], estimator: GradientEstimator) -> Vec<f64> {
    let n = params.dim();
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        let sigma = params.log_sigma[i].exp();
        let (dmu, dls) = match estimator {
            GradientEstimator::Stl => {
                // d/dx of -log q(x) with q's parameters held fixed is eps / sigma.
                let path = g[i] + eps[i] / sigma;
                (path, path * sigma * eps[i])
            }
            GradientEstimator::Plain => (g[i], g[i] * sigma * eps[i] + 1.0),
        };
        out[i] = dmu;
        out[n + i] = dls;
    }
    out
}

fn log_q(params: &ViParams, eps: &[f64]) -> f64 {
    let n = params.dim() as f64;
    -params.log_sigma.iter().sum::<f64>()
        - 0.5 * eps.iter().map(|e| e * e).sum::<f64>()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Maximizes the ELBO of `q = N(mu, diag(sigma^2))` against `target` at
/// noise scale `cfg.s`, starting from `mu = init_mu` (zero by default).
pub fn fit_vi<T: Target>(target: &T, cfg: &ViConfig, init_mu: Option<&[f64]>) -> Result<ViOutcome> {
    let n = target.dim();
    let mu = match init_mu {
        Some(m) if m.len() != n => {
            return Err(Error::Shape(format!("initial mean has length {}, target expects {n}", m.len())))
        }
        Some(m) => m.to_vec(),
        None => vec![0.0; n],
    };
    let mut params = ViParams::new(mu, vec![cfg.init_log_sigma; n])?;
    let mut flat = params.flat();
    let mut adam = Adam::new(cfg.adam, 2 * n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut elbo = Vec::with_capacity(cfg.n_steps);
    for step in 0..cfg.n_steps {
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x: Vec<f64> = (0..n)
            .map(|i| params.mu[i] + params.log_sigma[i].exp() * eps[i])
            .collect();
        let diverged = || Error::VariationalDiverged { step };
        let e = target.evaluate(&x, mix(cfg.seed, step as u64)).map_err(|_| diverged())?;
        let g = target.gradient(&e, cfg.s);
        let value = target.log_density(&e, cfg.s) - log_q(&params, &eps);
        let grad = elbo_gradient(&params, &eps, &g, cfg.estimator);
        if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(diverged());
        }
        elbo.push(value);
        adam.ascend(&mut flat, &grad);
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(diverged());
        }
        params = ViParams::from_flat(&flat);
    }
    Ok(ViOutcome { params, elbo })
}

/// `n` independent draws from `q`.
pub fn sample_vi(params: &ViParams, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            params
                .mu
                .iter()
                .zip(&params.log_sigma)
                .map(|(m, ls)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    m + ls.exp() * e
                })
                .collect()
        })
        .collect()
}
