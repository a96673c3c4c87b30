//! Pinhole cameras and per-pixel rays.
//!
//! Camera frames follow the usual graphics convention: the rotation block
//! of the camera-to-world matrix has columns (right, up, back), so the
//! camera looks along its local `-z` axis. Pixel `(row, col)` is addressed
//! row-major from the top-left corner and its ray passes through the pixel
//! center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: vec3::normalize(direction),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        vec3::at(self.origin, self.direction, t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Row-major 4x4 camera-to-world transform.
    pub camera_to_world: [[f64; 4]; 4],
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

const ORTHONORMAL_TOL: f64 = 1e-6;

impl Camera {
    pub fn new(camera_to_world: [[f64; 4]; 4], fov_y: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            camera_to_world,
            fov_y,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with `up` fixing the roll.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y: f64, width: usize, height: usize) -> Result<Self> {
        let forward = vec3::sub(target, eye);
        if vec3::norm(forward) == 0.0 {
            return Err(Error::InvalidCamera("eye coincides with target".into()));
        }
        let back = vec3::normalize(vec3::scale(forward, -1.0));
        let right = vec3::cross(up, back);
        if vec3::norm(right) < 1e-12 {
            return Err(Error::InvalidCamera("up vector is parallel to the view axis".into()));
        }
        let right = vec3::normalize(right);
        let true_up = vec3::cross(back, right);
        let m = [
            [right[0], true_up[0], back[0], eye[0]],
            [right[1], true_up[1], back[1], eye[1]],
            [right[2], true_up[2], back[2], eye[2]],
            [0.0, 0.0, 0.0, 1.0],
        ];
        Self::new(m, fov_y, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::InvalidCamera(format!(
                "field of view {} outside (0, pi)",
                self.fov_y
            )));
        }
        let m = &self.camera_to_world;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite matrix entry".into()));
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidCamera("last row must be [0, 0, 0, 1]".into()));
        }
        // || R^T R - I ||_inf
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() >= ORTHONORMAL_TOL {
                    return Err(Error::InvalidCamera("rotation block is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    pub fn position(&self) -> Vec3 {
        let m = &self.camera_to_world;
        [m[0][3], m[1][3], m[2][3]]
    }

    /// World-space optical axis (unit length).
    pub fn optical_axis(&self) -> Vec3 {
        let m = &self.camera_to_world;
        [-m[0][2], -m[1][2], -m[2][2]]
    }

    fn tan_half(&self) -> f64 {
        (0.5 * self.fov_y).tan()
    }

    fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    fn to_world(&self, d: Vec3) -> Vec3 {
        let m = &self.camera_to_world;
        [
            m[0][0] * d[0] + m[0][1] * d[1] + m[0][2] * d[2],
            m[1][0] * d[0] + m[1][1] * d[1] + m[1][2] * d[2],
            m[2][0] * d[0] + m[2][1] * d[1] + m[2][2] * d[2],
        ]
    }

    fn to_camera(&self, p: Vec3) -> Vec3 {
        let m = &self.camera_to_world;
        let d = vec3::sub(p, self.position());
        [
            m[0][0] * d[0] + m[1][0] * d[1] + m[2][0] * d[2],
            m[0][1] * d[0] + m[1][1] * d[1] + m[2][1] * d[2],
            m[0][2] * d[0] + m[1][2] * d[1] + m[2][2] * d[2],
        ]
    }

    /// Ray through the center of pixel `(row, col)`.
    pub fn ray(&self, row: usize, col: usize) -> Ray {
        let t = self.tan_half();
        let x = (2.0 * (col as f64 + 0.5) / self.width as f64 - 1.0) * t * self.aspect();
        let y = (1.0 - 2.0 * (row as f64 + 0.5) / self.height as f64) * t;
        Ray::new(self.position(), self.to_world([x, y, -1.0]))
    }

    /// One ray per pixel, row-major from the top-left.
    pub fn generate_rays(&self) -> Result<Vec<Ray>> {
        self.validate()?;
        let mut rays = Vec::with_capacity(self.width * self.height);
        for row in 0..self.height {
            for col in 0..self.width {
                rays.push(self.ray(row, col));
            }
        }
        Ok(rays)
    }

    /// Continuous pixel coordinates `(col, row)` of a world point in front
    /// of the camera, using the same convention as [`Camera::ray`] (pixel
    /// centers at half-integers).
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let c = self.to_camera(p);
        if c[2] >= 0.0 {
            return None;
        }
        let x = c[0] / -c[2];
        let y = c[1] / -c[2];
        let t = self.tan_half();
        let col = (x / (t * self.aspect()) + 1.0) * 0.5 * self.width as f64;
        let row = (1.0 - y / t) * 0.5 * self.height as f64;
        Some((col, row))
    }

    /// Row-major flattening of the camera-to-world matrix.
    pub fn flat_matrix(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for (i, row) in self.camera_to_world.iter().enumerate() {
            out[4 * i..4 * i + 4].copy_from_slice(row);
        }
        out
    }
}
