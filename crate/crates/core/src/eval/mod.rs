//! Metrics, sample evaluation, and the ablation harnesses.

pub mod ablation;
pub mod metrics;
pub mod report;

pub use ablation::{
    ablate_annealing, ablate_renderer, acceptance_csv, observation_mse, default_step_sweep, fixed_step_for_grid, AcceptanceRow,
    AnnealingAblationConfig, AnnealingReport, RendererAblationConfig,
};
pub use metrics::{masked_mse, mse, per_pixel_variance, psnr, Psnr};
pub use report::{evaluate_states, render_states, EvalReport, ReferenceView, ViewReport};
