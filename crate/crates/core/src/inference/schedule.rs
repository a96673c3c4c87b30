//! Log-linear tempering of the observation noise scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base step size at `s0` for desk-scale models, calibrated so that the
/// terminal acceptance rate lands between 0.6 and 0.9.
pub const DEFAULT_BASE_STEP: f64 = 1.0;

/// `s_t = s0^((T - t) / T) * sT^(t / T)` with the step size proportional to
/// `s_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub s0: f64,
    pub s_final: f64,
    pub n_steps: usize,
    /// Step size at `t = 0`.
    pub base_step: f64,
}

impl AnnealingSchedule {
    /// From 5 to 0.1 over 100 iterations.
    pub fn full_scale(base_step: f64) -> Self {
        Self {
            s0: 5.0,
            s_final: 0.1,
            n_steps: 100,
            base_step,
        }
    }

    /// The 5 to 0.1 schedule over `n_steps` iterations.
    pub fn annealed(n_steps: usize, base_step: f64) -> Self {
        Self {
            n_steps,
            ..Self::full_scale(base_step)
        }
    }

    /// Constant temperature `s` with a constant step.
    pub fn fixed(s: f64, n_steps: usize, step: f64) -> Self {
        Self {
            s0: s,
            s_final: s,
            n_steps,
            base_step: step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_final > 0.0 && self.s0 >= self.s_final) {
            return Err(Error::InvalidArgument(format!(
                "schedule needs s0 >= sT > 0, got s0 = {}, sT = {}",
                self.s0, self.s_final
            )));
        }
        if self.n_steps == 0 || !(self.base_step > 0.0) {
            return Err(Error::InvalidArgument("schedule needs T >= 1 and a positive step".into()));
        }
        Ok(())
    }

    pub fn noise(&self, t: usize) -> Result<f64> {
        if t > self.n_steps {
            return Err(Error::InvalidArgument(format!(
                "annealing index {t} beyond T = {}",
                self.n_steps
            )));
        }
        if t == 0 {
            return Ok(self.s0);
        }
        if t == self.n_steps || self.s0 == self.s_final {
            return Ok(self.s_final);
        }
        let f = t as f64 / self.n_steps as f64;
        Ok(self.s0.powf(1.0 - f) * self.s_final.powf(f))
    }

    pub fn step_size(&self, t: usize) -> Result<f64> {
        Ok(self.base_step * self.noise(t)? / self.s0)
    }
}
