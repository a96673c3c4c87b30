//! Diagonal Gaussian potentials and their precision-weighted product.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPotential {
    pub mu: Vec<f64>,
    /// Precisions, elementwise positive.
    pub tau: Vec<f64>,
}

impl GaussianPotential {
    /// `tau = exp(-2 log_scale)`.
    pub fn from_log_scale(mu: Vec<f64>, log_scale: &[f64]) -> Self {
        let tau = log_scale.iter().map(|l| (-2.0 * l).exp()).collect();
        Self { mu, tau }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Combines the prior potential with per-view potentials:
/// `tau_hat = sum_j tau_j`, `mu_hat = sum_j tau_j mu_j / tau_hat`.
pub fn pool_potentials(prior: &GaussianPotential, views: &[GaussianPotential]) -> GaussianPotential {
    let k = prior.dim();
    let mut tau = prior.tau.clone();
    let mut weighted: Vec<f64> = (0..k).map(|i| prior.tau[i] * prior.mu[i]).collect();
    for v in views {
        assert_eq!(v.dim(), k, "potential dimensions differ");
        for i in 0..k {
            tau[i] += v.tau[i];
            weighted[i] += v.tau[i] * v.mu[i];
        }
    }
    let mu = weighted.iter().zip(&tau).map(|(w, t)| w / t).collect();
    GaussianPotential { mu, tau }
}

/// Tape version of [`pool_potentials`] over `(mu, log_scale)` pairs of
/// `1 x K` nodes, the prior first. Returns `(mu_hat, tau_hat)`.
pub fn pool_on_tape(tape: &mut Tape, parts: &[(Var, Var)]) -> (Var, Var) {
    let mut tau_sum = None;
    let mut weighted_sum = None;
    for &(mu, ls) in parts {
        let m2 = tape.scale(ls, -2.0);
        let tau = tape.exp(m2);
        let tm = tape.mul(tau, mu);
        tau_sum = Some(match tau_sum {
            None => tau,
            Some(s) => tape.add(s, tau),
        });
        weighted_sum = Some(match weighted_sum {
            None => tm,
            Some(s) => tape.add(s, tm),
        });
    }
    let tau = tau_sum.expect("at least the prior potential");
    let mu = tape.div(weighted_sum.unwrap(), tau);
    (mu, tau)
}
