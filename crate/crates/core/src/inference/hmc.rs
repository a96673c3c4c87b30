//! Leapfrog integration and the Metropolis-corrected HMC transition.
//!
//! A [`Target`] separates evaluating the state (the expensive part: a render
//! and a reverse pass) from turning that evaluation into a log-density at a
//! given noise scale. Chains cache the evaluation at their current position,
//! so moving to the next temperature of a schedule needs no re-render.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;

pub trait Target: Sync {
    type Eval: Clone + Send;

    fn dim(&self) -> usize;

    /// Evaluates the state. `key` distinguishes evaluations for targets
    /// that draw fresh randomness per call; deterministic targets ignore it.
    fn evaluate(&self, x: &[f64], key: u64) -> Result<Self::Eval>;

    /// Log-density at noise scale `s`.
    fn log_density(&self, e: &Self::Eval, s: f64) -> f64;

    /// Gradient of [`Target::log_density`] with respect to the state.
    fn gradient(&self, e: &Self::Eval, s: f64) -> Vec<f64>;
}

/// A chain's position, cached evaluation, and bookkeeping.
#[derive(Clone, Debug)]
pub struct ChainState<E> {
    pub position: Vec<f64>,
    pub eval: E,
    /// Annealing index of the last completed transition.
    pub t: usize,
    pub step_size: f64,
    pub n_accepted: usize,
    pub n_proposed: usize,
    pub n_diverged: usize,
    /// Gradient evaluations spent inside the integrator.
    pub grad_evals: usize,
    /// Evaluations made to initialize or reinitialize the cache.
    pub setup_evals: usize,
    pub rng: ChaCha8Rng,
    pub seed: u64,
    calls: u64,
}

impl<E: Clone> ChainState<E> {
    pub fn new<T: Target<Eval = E>>(target: &T, position: Vec<f64>, rng: ChaCha8Rng, seed: u64) -> Result<Self> {
        Ok(Self {
            eval: target.evaluate(&position, mix(seed, 0))?,
            position,
            t: 0,
            step_size: 0.0,
            n_accepted: 0,
            n_proposed: 0,
            n_diverged: 0,
            grad_evals: 0,
            setup_evals: 1,
            rng,
            seed,
            calls: 1,
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.n_proposed == 0 {
            0.0
        } else {
            self.n_accepted as f64 / self.n_proposed as f64
        }
    }
}

/// SplitMix64 finalizer over `seed + counter`.
pub fn mix(seed: u64, counter: u64) -> u64 {
    let mut z = seed.wrapping_add(counter.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Leapfrog trajectory of `n_steps` steps from `(q, p)` with the gradient
/// at `q` already known. `grad` returns `None` on a non-finite evaluation,
/// which aborts the trajectory.
pub fn leapfrog<G>(q: &[f64], p: &[f64], step: f64, n_steps: usize, grad_q: &[f64], mut grad: G) -> Option<(Vec<f64>, Vec<f64>)>
where
    G: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let mut q = q.to_vec();
    let mut p = p.to_vec();
    for (pi, g) in p.iter_mut().zip(grad_q) {
        *pi += 0.5 * step * g;
    }
    for i in 0..n_steps {
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += step * pi;
        }
        let g = grad(&q)?;
        let kick = if i + 1 == n_steps { 0.5 * step } else { step };
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += kick * gi;
        }
    }
    Some((q, p))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub accepted: bool,
    /// `min(1, exp(-dH))`, zero for a divergent trajectory.
    pub accept_prob: f64,
    pub delta_h: f64,
    pub diverged: bool,
}

fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

/// One HMC transition targeting `target` at noise scale `s`.
pub fn hmc_step<T: Target>(target: &T, chain: &mut ChainState<T::Eval>, s: f64, step: f64, n_leapfrog: usize) -> StepInfo {
    let n = chain.position.len();
    let p0: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut chain.rng)).collect();
    let h0 = -target.log_density(&chain.eval, s) + kinetic(&p0);
    let grad0 = target.gradient(&chain.eval, s);
    chain.step_size = step;
    chain.n_proposed += 1;

    let mut last: Option<T::Eval> = None;
    let mut evals = 0;
    let (seed, mut calls) = (chain.seed, chain.calls);
    let traj = leapfrog(&chain.position, &p0, step, n_leapfrog, &grad0, |q| {
        evals += 1;
        calls += 1;
        let e = target.evaluate(q, mix(seed, calls)).ok()?;
        let g = target.gradient(&e, s);
        if g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        last = Some(e);
        Some(g)
    });
    chain.calls = calls;
    chain.grad_evals += evals;
    let u: f64 = chain.rng.random();

    let (Some((q, p)), Some(e)) = (traj, last) else {
        chain.n_diverged += 1;
        return StepInfo {
            accepted: false,
            accept_prob: 0.0,
            delta_h: f64::INFINITY,
            diverged: true,
        };
    };
    let h1 = -target.log_density(&e, s) + kinetic(&p);
    let delta_h = h1 - h0;
    if !delta_h.is_finite() {
        chain.n_diverged += 1;
        return StepInfo {
            accepted: false,
            accept_prob: 0.0,
            delta_h,
            diverged: true,
        };
    }
    let accept_prob = (-delta_h).exp().min(1.0);
    let accepted = u < accept_prob;
    if accepted {
        chain.position = q;
        chain.eval = e;
        chain.n_accepted += 1;
    }
    StepInfo {
        accepted,
        accept_prob,
        delta_h,
        diverged: false,
    }
}

/// Standard normal in `dim` dimensions, for tests and calibration.
pub struct StandardNormalTarget {
    pub dim: usize,
}

impl Target for StandardNormalTarget {
    type Eval = Vec<f64>;

    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64], _key: u64) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }

    fn log_density(&self, x: &Vec<f64>, _s: f64) -> f64 {
        crate::model::log_standard_normal(x)
    }

    fn gradient(&self, x: &Vec<f64>, _s: f64) -> Vec<f64> {
        x.iter().map(|v| -v).collect()
    }
}
