//! Posterior sampling over the noncentered state: leapfrog HMC with a
//! Metropolis correction, tempering schedules, multi-chain orchestration,
//! and a mean-field variational baseline.

pub mod archive;
pub mod chains;
pub mod hmc;
pub mod schedule;
pub mod target;
pub mod vi;

pub use archive::SampleArchive;
pub use chains::{run_annealed_chains, ChainConfig, ChainInit, ChainRun, DiagnosticRow};
pub use hmc::{hmc_step, leapfrog, ChainState, StepInfo, Target};
pub use schedule::{AnnealingSchedule, DEFAULT_BASE_STEP};
pub use target::{PosteriorTarget, RenderMode};
pub use vi::{fit_vi, sample_vi, GradientEstimator, ViConfig, ViOutcome, ViParams};
