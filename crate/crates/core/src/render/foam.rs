//! Lattice "foam" geometry: every bit of density sits on the faces of a
//! `G x G x G` grid of cubes, so a ray only needs the field at its crossings
//! with the `3 (G + 1)` axis-aligned lattice planes.

use serde::{Deserialize, Serialize};

use super::camera::Ray;
use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Hits closer than this along the ray are one hit (edges and corners).
pub const MERGE_TOL: f64 = 1e-9;
/// Slack on the bounding-box containment test.
pub const BOX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoamScene {
    pub grid_size: usize,
    pub lo: Vec3,
    pub hi: Vec3,
    pub background: [f64; 3],
}

impl FoamScene {
    /// `[-1, 1]^3` with a white background.
    pub fn new(grid_size: usize) -> Self {
        Self {
            grid_size,
            lo: [-1.0; 3],
            hi: [1.0; 3],
            background: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 {
            return Err(Error::InvalidArgument("grid size must be at least 1".into()));
        }
        if (0..3).any(|a| !(self.lo[a] < self.hi[a])) {
            return Err(Error::InvalidArgument("bounding box needs lo < hi per axis".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument("background must lie in [0, 1]^3".into()));
        }
        Ok(())
    }

    /// Upper bound on hits (and field evaluations) per ray.
    pub fn max_hits(&self) -> usize {
        3 * (self.grid_size + 1)
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.grid_size as f64
    }

    /// Coordinate of lattice plane `i` along `axis`.
    pub fn plane(&self, axis: usize, i: usize) -> f64 {
        if i == self.grid_size {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.spacing(axis)
        }
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] - tol && p[a] <= self.hi[a] + tol)
    }

    /// Parameter interval `[t0, t1]` (with `t0 >= 0`) where the ray is
    /// inside the box, or `None` on a miss.
    pub fn clip(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            let o = ray.origin[a];
            let d = ray.direction[a];
            if d == 0.0 {
                if o < self.lo[a] || o > self.hi[a] {
                    return None;
                }
                continue;
            }
            let (mut ta, mut tb) = ((self.lo[a] - o) / d, (self.hi[a] - o) / d);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
}

/// Every crossing of `ray` with a lattice plane inside the bounding box,
/// sorted by `t`, with crossings closer than [`MERGE_TOL`] merged.
pub fn foam_intersections(ray: &Ray, scene: &FoamScene) -> Vec<Hit> {
    let mut ts = Vec::with_capacity(scene.max_hits());
    let Some((t0, t1)) = scene.clip(ray) else {
        return Vec::new();
    };
    let g = scene.grid_size;
    for axis in 0..3 {
        let d = ray.direction[axis];
        if d == 0.0 {
            continue;
        }
        let o = ray.origin[axis];
        let h = scene.spacing(axis);
        // Candidate plane indices covering the clipped segment.
        let ca = (o + t0 * d - scene.lo[axis]) / h;
        let cb = (o + t1 * d - scene.lo[axis]) / h;
        let lo_i = (ca.min(cb).floor() - 1.0).max(0.0) as usize;
        let hi_i = ((ca.max(cb).ceil() + 1.0).max(0.0) as usize).min(g);
        for i in lo_i..=hi_i {
            let t = (scene.plane(axis, i) - o) / d;
            if t < 0.0 {
                continue;
            }
            let p = ray.at(t);
            if crosses_inside(scene, axis, p) {
                ts.push(t);
            }
        }
    }
    merge_sorted(ray, ts)
}

/// Containment test for a point on a plane normal to `axis`.
pub(crate) fn crosses_inside(scene: &FoamScene, axis: usize, p: Vec3) -> bool {
    (0..3)
        .filter(|&b| b != axis)
        .all(|b| p[b] >= scene.lo[b] - BOX_TOL && p[b] <= scene.hi[b] + BOX_TOL)
}

pub(crate) fn merge_sorted(ray: &Ray, mut ts: Vec<f64>) -> Vec<Hit> {
    ts.sort_by(|a, b| a.total_cmp(b));
    let mut hits: Vec<Hit> = Vec::with_capacity(ts.len());
    for t in ts {
        if let Some(last) = hits.last() {
            if t - last.t <= MERGE_TOL {
                continue;
            }
        }
        hits.push(Hit { t, point: ray.at(t) });
    }
    hits
}
