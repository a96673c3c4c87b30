//! Independent annealed HMC chains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hmc::{hmc_step, ChainState, Target};
use super::schedule::AnnealingSchedule;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_leapfrog: usize,
    /// Final consecutive iterates retained per chain.
    pub keep_last: usize,
    pub seed: u64,
}

impl ChainConfig {
    /// 8 chains, 100 leapfrog steps, last 16 iterates.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            n_chains: 8,
            n_leapfrog: 100,
            keep_last: 16,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChainInit {
    /// Standard-normal draw from each chain's generator.
    Prior,
    /// Every chain starts here.
    At(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: usize,
    pub s: f64,
    pub step_size: f64,
    pub accept_prob: f64,
    /// Running fraction of accepted proposals.
    pub accept_rate: f64,
    pub log_joint: f64,
}

#[derive(Clone, Debug)]
pub struct ChainRun {
    pub seeds: Vec<u64>,
    /// `samples[c]` holds chain `c`'s retained iterates, oldest first.
    pub samples: Vec<Vec<Vec<f64>>>,
    pub diagnostics: Vec<Vec<DiagnosticRow>>,
    /// Integrator gradient evaluations per chain.
    pub grad_evals: Vec<usize>,
    /// Evaluations spent initializing each chain.
    pub setup_evals: Vec<usize>,
    pub final_positions: Vec<Vec<f64>>,
}

impl ChainRun {
    pub fn n_samples(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    /// Samples in chain order with their chain index.
    pub fn flat_samples(&self) -> Vec<(usize, &[f64])> {
        self.samples
            .iter()
            .enumerate()
            .flat_map(|(c, s)| s.iter().map(move |x| (c, x.as_slice())))
            .collect()
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.diagnostics
            .iter()
            .map(|d| d.last().map_or(0.0, |r| r.accept_rate))
            .collect()
    }

    /// Mean Metropolis acceptance probability across chains at the last
    /// iteration.
    pub fn final_acceptance(&self) -> f64 {
        let p: Vec<f64> = self
            .diagnostics
            .iter()
            .filter_map(|d| d.last().map(|r| r.accept_prob))
            .collect();
        p.iter().sum::<f64>() / p.len().max(1) as f64
    }
}

pub fn chain_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

struct Finished {
    samples: Vec<Vec<f64>>,
    diagnostics: Vec<DiagnosticRow>,
    grad_evals: usize,
    setup_evals: usize,
    position: Vec<f64>,
    failure: Option<String>,
}

fn run_one<T: Target>(
    target: &T,
    schedule: &AnnealingSchedule,
    cfg: &ChainConfig,
    init: &ChainInit,
    seed: u64,
) -> Result<Finished> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = match init {
        ChainInit::Prior => (0..target.dim()).map(|_| StandardNormal.sample(&mut rng)).collect(),
        ChainInit::At(x) => {
            if x.len() != target.dim() {
                return Err(Error::Shape(format!(
                    "initial state has length {}, target expects {}",
                    x.len(),
                    target.dim()
                )));
            }
            x.clone()
        }
    };
    let mut chain = match ChainState::new(target, start.clone(), rng, seed) {
        Ok(c) => c,
        Err(e) => {
            return Ok(Finished {
                samples: Vec::new(),
                diagnostics: Vec::new(),
                grad_evals: 0,
                setup_evals: 1,
                position: start,
                failure: Some(format!("initial evaluation failed: {e}")),
            })
        }
    };
    let total = schedule.n_steps;
    let keep_from = total.saturating_sub(cfg.keep_last) + 1;
    let mut samples = Vec::with_capacity(cfg.keep_last.min(total));
    let mut diagnostics = Vec::with_capacity(total);
    for t in 1..=total {
        let s = schedule.noise(t)?;
        let step = schedule.step_size(t)?;
        let info = hmc_step(target, &mut chain, s, step, cfg.n_leapfrog);
        chain.t = t;
        diagnostics.push(DiagnosticRow {
            t,
            s,
            step_size: step,
            accept_prob: info.accept_prob,
            accept_rate: chain.acceptance_rate(),
            log_joint: target.log_density(&chain.eval, s),
        });
        if t >= keep_from {
            samples.push(chain.position.clone());
        }
    }
    let failure = (chain.n_diverged == total).then(|| format!("all {total} proposals diverged"));
    Ok(Finished {
        samples,
        diagnostics,
        grad_evals: chain.grad_evals,
        setup_evals: chain.setup_evals,
        position: chain.position,
        failure,
    })
}

/// Runs `cfg.n_chains` chains through iterations `t = 1..=T` of `schedule`:
/// iteration `t` targets noise scale `s_t` with step size `step_t`, so the
/// final iterations target `s_T`. Results do not depend on the parallel
/// schedule.
pub fn run_annealed_chains<T: Target>(
    target: &T,
    schedule: &AnnealingSchedule,
    cfg: &ChainConfig,
    init: &ChainInit,
) -> Result<ChainRun> {
    schedule.validate()?;
    if cfg.n_chains == 0 || cfg.n_leapfrog == 0 {
        return Err(Error::InvalidArgument("need at least one chain and one leapfrog step".into()));
    }
    let seeds = chain_seeds(cfg.seed, cfg.n_chains);
    let finished = seeds
        .par_iter()
        .map(|&seed| run_one(target, schedule, cfg, init, seed))
        .collect::<Result<Vec<_>>>()?;
    if finished.iter().all(|f| f.failure.is_some()) {
        let report = finished
            .iter()
            .enumerate()
            .map(|(c, f)| format!("chain {c}: {}", f.failure.as_deref().unwrap_or("")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::AllChainsDiverged(report));
    }
    let mut run = ChainRun {
        seeds,
        samples: Vec::new(),
        diagnostics: Vec::new(),
        grad_evals: Vec::new(),
        setup_evals: Vec::new(),
        final_positions: Vec::new(),
    };
    for f in finished {
        run.samples.push(f.samples);
        run.diagnostics.push(f.diagnostics);
        run.grad_evals.push(f.grad_evals);
        run.setup_evals.push(f.setup_evals);
        run.final_positions.push(f.position);
    }
    Ok(run)
}
