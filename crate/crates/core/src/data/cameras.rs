//! Camera rigs on a horizontal circle around the object.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::render::Camera;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CameraMode {
    UniformRandom,
    EquallySpaced,
}

/// Intrinsics and orbit shared by every camera of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub radius: f64,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraRig {
    /// 60 degree field of view on a circle of radius 3.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            radius: 3.0,
            fov_y: PI / 3.0,
            width,
            height,
        }
    }

    /// Camera at `azimuth` radians, measured from `+z` toward `+x`, looking
    /// at the origin with `+y` up.
    pub fn at_azimuth(&self, azimuth: f64) -> Result<Camera> {
        let eye = [self.radius * azimuth.sin(), 0.0, self.radius * azimuth.cos()];
        Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], self.fov_y, self.width, self.height)
    }
}

/// Azimuths for `n` cameras.
pub fn azimuths(n: usize, seed: u64, mode: CameraMode) -> Vec<f64> {
    match mode {
        CameraMode::EquallySpaced => (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect(),
        CameraMode::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
        }
    }
}

pub fn sample_cameras(n: usize, rig: &CameraRig, seed: u64, mode: CameraMode) -> Result<Vec<Camera>> {
    azimuths(n, seed, mode)
        .into_iter()
        .map(|a| rig.at_azimuth(a))
        .collect()
}
