//! Renderer and annealing ablations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::CameraRig;
use crate::error::Result;
use crate::inference::{run_annealed_chains, AnnealingSchedule, ChainConfig, ChainInit, PosteriorTarget, RenderMode};
use crate::model::{LatentState, Model, Observation};
use crate::render::{render_image, Renderer, SampleBatch};

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Nine step sizes from 1e-5 to 1e-1.
pub fn default_step_sweep() -> Vec<f64> {
    log_spaced(1e-5, 1e-1, 9)
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RendererAblationConfig {
    pub steps: Vec<f64>,
    pub n_chains: usize,
    pub n_leapfrog: usize,
    pub n_iterations: usize,
    /// Noise scale of the targeted posterior.
    pub s: f64,
    /// Stratified samples per ray for the quadrature renderer.
    pub quadrature_samples: usize,
    /// Azimuth of the rendered view, radians.
    pub azimuth: f64,
    pub seed: u64,
}

impl RendererAblationConfig {
    /// 8 chains of 10 leapfrog steps for 20 iterations at `s = 0.1`.
    pub fn new(seed: u64) -> Self {
        Self {
            steps: default_step_sweep(),
            n_chains: 8,
            n_leapfrog: 10,
            n_iterations: 20,
            s: 0.1,
            quadrature_samples: 32,
            azimuth: 0.0,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub renderer: String,
    pub step_size: f64,
    /// Mean Metropolis acceptance probability across chains on the last
    /// iteration.
    pub acceptance: f64,
}

pub fn acceptance_csv(rows: &[AcceptanceRow]) -> String {
    let mut out = String::from("renderer,step_size,acceptance\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.renderer, r.step_size, r.acceptance);
    }
    out
}

/// Draws a state from the prior, renders one view of it with each
/// renderer, and runs short HMC chains started at the drawn state for
/// every step size. The quadrature target redraws its jitter on every
/// evaluation.
pub fn ablate_renderer(model: &Model, cfg: &RendererAblationConfig) -> Result<Vec<AcceptanceRow>> {
    let (state, weights) = model.sample_prior(cfg.seed)?;
    let x0 = state.flat();
    let enc = &model.config.encoder;
    let camera = CameraRig::new(enc.image_width, enc.image_height).at_azimuth(cfg.azimuth)?;
    let scene = &model.config.scene;
    let modes = [
        ("foam", Renderer::Foam, RenderMode::Foam),
        (
            "quadrature",
            Renderer::Quadrature {
                n_samples: cfg.quadrature_samples,
                seed: cfg.seed,
            },
            RenderMode::ReseededQuadrature {
                n_samples: cfg.quadrature_samples,
            },
        ),
    ];
    let mut rows = Vec::new();
    for (name, renderer, mode) in modes {
        let image = render_image(&weights, &camera, scene, renderer)?;
        let obs = crate::data::crop_view(&image, &camera, &crate::data::Region::Full)?;
        let target = PosteriorTarget::new(model, &obs, mode, true)?;
        for &step in &cfg.steps {
            let chains = ChainConfig {
                n_chains: cfg.n_chains,
                n_leapfrog: cfg.n_leapfrog,
                keep_last: 1,
                seed: cfg.seed,
            };
            let schedule = AnnealingSchedule::fixed(cfg.s, cfg.n_iterations, step);
            let run = run_annealed_chains(&target, &schedule, &chains, &ChainInit::At(x0.clone()))?;
            rows.push(AcceptanceRow {
                renderer: name.into(),
                step_size: step,
                acceptance: run.final_acceptance(),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealingAblationConfig {
    pub schedule: AnnealingSchedule,
    /// Step size of the fixed-temperature run at `schedule.s_final`.
    pub fixed_step: f64,
    pub n_chains: usize,
    pub n_leapfrog: usize,
    pub seed: u64,
}

/// Fixed-temperature step for a lattice of `grid_size` cells: 0.0005 at
/// 128 cells, proportional to the cell count otherwise.
pub fn fixed_step_for_grid(grid_size: usize) -> f64 {
    0.0005 * grid_size as f64 / 128.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealingReport {
    /// Conditioned-view MSE of each chain's final state.
    pub annealed_mse: Vec<f64>,
    pub fixed_mse: Vec<f64>,
    pub annealed_std: f64,
    pub fixed_std: f64,
    pub annealed_acceptance: Vec<f64>,
    pub fixed_acceptance: Vec<f64>,
}

/// Per-channel MSE of a full state's render against the observation.
pub fn observation_mse(model: &Model, x: &[f64], obs: &Observation) -> Result<f64> {
    let w = model.field_weights(&LatentState::from_flat(x, model.config.latent_dim))?;
    let batch = SampleBatch::foam(&model.config.field, &obs.rays, &model.config.scene);
    let colors = batch.render(&w)?;
    let sse: f64 = colors
        .iter()
        .zip(&obs.pixels)
        .map(|(c, p)| (0..3).map(|i| (c[i] - p[i]) * (c[i] - p[i])).sum::<f64>())
        .sum();
    Ok(sse / (3 * obs.len()) as f64)
}

/// Annealed versus fixed-temperature HMC from matched prior draws.
pub fn ablate_annealing(model: &Model, obs: &Observation, cfg: &AnnealingAblationConfig) -> Result<AnnealingReport> {
    let target = PosteriorTarget::full(model, obs)?;
    let chains = ChainConfig {
        n_chains: cfg.n_chains,
        n_leapfrog: cfg.n_leapfrog,
        keep_last: 1,
        seed: cfg.seed,
    };
    let fixed = AnnealingSchedule::fixed(cfg.schedule.s_final, cfg.schedule.n_steps, cfg.fixed_step);
    let mut results = Vec::with_capacity(2);
    for schedule in [cfg.schedule, fixed] {
        let run = run_annealed_chains(&target, &schedule, &chains, &ChainInit::Prior)?;
        let mse = run
            .final_positions
            .iter()
            .map(|x| observation_mse(model, x, obs))
            .collect::<Result<Vec<_>>>()?;
        results.push((mse, run.acceptance_rates()));
    }
    let (fixed_mse, fixed_acceptance) = results.pop().unwrap();
    let (annealed_mse, annealed_acceptance) = results.pop().unwrap();
    Ok(AnnealingReport {
        annealed_std: sample_std(&annealed_mse),
        fixed_std: sample_std(&fixed_mse),
        annealed_mse,
        fixed_mse,
        annealed_acceptance,
        fixed_acceptance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_log_spaced_with_exact_ends() {
        let s = default_step_sweep();
        assert_eq!(s.len(), 9);
        assert_eq!(s[0], 1e-5);
        assert_eq!(s[8], 1e-1);
        for w in s.windows(2) {
            assert!((w[1] / w[0] - 10f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn std_of_constant_is_zero() {
        assert_eq!(sample_std(&[0.3; 4]), 0.0);
        assert!((sample_std(&[0.0, 2.0]) - 2f64.sqrt()).abs() < 1e-15);
    }
}
