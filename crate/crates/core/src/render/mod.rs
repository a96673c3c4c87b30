//! Rendering a radiance field along rays.
//!
//! Both renderers reduce to the same computation: a list of sample points per
//! ray, an optical-depth factor per sample, and front-to-back compositing.
//! The foam renderer samples exactly at the lattice-plane crossings with
//! opacity `1 - exp(-sigma / G)`. The quadrature renderer draws stratified
//! samples with opacity `1 - exp(-sigma * delta)`. A [`SampleBatch`] holds
//! the pre-encoded samples for a fixed set of rays so repeated evaluations
//! (HMC, training) only pay for the networks.

pub mod camera;
pub mod composite;
pub mod foam;
pub mod quadrature;

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Segments, Tape, Var};
use crate::error::Result;
use crate::field::{encode_samples, field_forward, FieldConfig, FieldWeights};
use crate::image::Image;
use crate::tensor::Matrix;
use crate::vec3::Vec3;

pub use camera::{Camera, Ray};
pub use foam::{foam_intersections, FoamScene, Hit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Renderer {
    Foam,
    Quadrature { n_samples: usize, seed: u64 },
}

/// Encoded samples for a fixed list of rays.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    /// `P x 2F` rows of `[encode(x), encode(v)]`.
    pub encoded: Matrix,
    /// `P x 1` optical depth per unit density (`1/G` or `delta`).
    pub depth: Matrix,
    /// Sample rows of each ray.
    pub ranges: Vec<(usize, usize)>,
    pub background: [f64; 3],
}

impl SampleBatch {
    fn build(config: &FieldConfig, background: [f64; 3], per_ray: Vec<Vec<(Vec3, Vec3, f64)>>) -> Self {
        let mut points = Vec::new();
        let mut dirs = Vec::new();
        let mut depth = Vec::new();
        let mut ranges = Vec::with_capacity(per_ray.len());
        for samples in per_ray {
            let start = points.len();
            for (p, d, dt) in samples {
                points.push(p);
                dirs.push(d);
                depth.push(dt);
            }
            ranges.push((start, points.len()));
        }
        let n = depth.len();
        Self {
            encoded: encode_samples(config, &points, &dirs),
            depth: Matrix::from_vec(n, 1, depth),
            ranges,
            background,
        }
    }

    /// Samples at every lattice-plane crossing.
    pub fn foam(config: &FieldConfig, rays: &[Ray], scene: &FoamScene) -> Self {
        let inv_g = 1.0 / scene.grid_size as f64;
        let per_ray = rays
            .iter()
            .map(|r| {
                foam_intersections(r, scene)
                    .into_iter()
                    .map(|h| (h.point, r.direction, inv_g))
                    .collect()
            })
            .collect();
        Self::build(config, scene.background, per_ray)
    }

    /// Stratified samples; one generator seeded from `seed` walks the rays in
    /// order, so a batch is reproducible and its first ray matches a
    /// single-ray render with the same seed.
    pub fn quadrature(config: &FieldConfig, rays: &[Ray], scene: &FoamScene, n_samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_ray = rays
            .iter()
            .map(|r| {
                quadrature::stratified_samples(r, scene, n_samples, &mut rng)
                    .into_iter()
                    .map(|(t, dt)| (r.at(t), r.direction, dt))
                    .collect()
            })
            .collect();
        Self::build(config, scene.background, per_ray)
    }

    pub fn new(config: &FieldConfig, rays: &[Ray], scene: &FoamScene, renderer: Renderer) -> Self {
        match renderer {
            Renderer::Foam => Self::foam(config, rays, scene),
            Renderer::Quadrature { n_samples, seed } => Self::quadrature(config, rays, scene, n_samples, seed),
        }
    }

    pub fn n_rays(&self) -> usize {
        self.ranges.len()
    }

    pub fn n_samples(&self) -> usize {
        self.depth.rows()
    }

    /// Field evaluations spent on each ray.
    pub fn samples_per_ray(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranges.iter().map(|(s, e)| e - s)
    }

    /// Records the render of every ray. `weights` is a `1 x D` node; the
    /// result is an `R x 3` node of colors.
    pub fn record(&self, tape: &mut Tape, config: &FieldConfig, weights: Var) -> Var {
        let inputs = tape.constant(self.encoded.clone());
        let (sigma, color) = field_forward(tape, config, weights, inputs);
        let depth = tape.constant(self.depth.clone());
        let tau = tape.mul(sigma, depth);
        let alpha = tape.opacity(tau);
        let segments = Rc::new(Segments {
            ranges: self.ranges.clone(),
            background: self.background,
        });
        tape.composite(alpha, color, segments)
    }

    /// Colors of every ray under fixed weights.
    pub fn render(&self, weights: &FieldWeights) -> Result<Vec<[f64; 3]>> {
        let mut tape = Tape::new();
        let w = tape.constant(Matrix::row(weights.as_slice().to_vec()));
        let out = self.record(&mut tape, weights.config(), w);
        tape.check_finite()?;
        let m = tape.value(out);
        Ok((0..m.rows()).map(|r| [m.get(r, 0), m.get(r, 1), m.get(r, 2)]).collect())
    }
}

pub fn render_ray_foam(weights: &FieldWeights, ray: &Ray, scene: &FoamScene) -> Result<[f64; 3]> {
    Ok(SampleBatch::foam(weights.config(), std::slice::from_ref(ray), scene).render(weights)?[0])
}

pub fn render_ray_quadrature(
    weights: &FieldWeights,
    ray: &Ray,
    scene: &FoamScene,
    n_samples: usize,
    seed: u64,
) -> Result<[f64; 3]> {
    let batch = SampleBatch::quadrature(weights.config(), std::slice::from_ref(ray), scene, n_samples, seed);
    Ok(batch.render(weights)?[0])
}

/// Rays are rendered in chunks of this many to bound tape memory.
const RAYS_PER_CHUNK: usize = 256;

/// Renders every pixel of `camera`.
///
/// Quadrature jitter is drawn for all rays in row-major order before the
/// chunks are evaluated, so the result does not depend on the parallel
/// schedule.
pub fn render_rays(weights: &FieldWeights, rays: &[Ray], scene: &FoamScene, renderer: Renderer) -> Result<Vec<[f64; 3]>> {
    let batch = SampleBatch::new(weights.config(), rays, scene, renderer);
    let chunks: Vec<(usize, usize)> = (0..rays.len())
        .step_by(RAYS_PER_CHUNK)
        .map(|s| (s, (s + RAYS_PER_CHUNK).min(rays.len())))
        .collect();
    let parts: Vec<Result<Vec<[f64; 3]>>> = chunks
        .par_iter()
        .map(|&(s, e)| batch.slice(s, e).render(weights))
        .collect();
    let mut out = Vec::with_capacity(rays.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn render_image(weights: &FieldWeights, camera: &Camera, scene: &FoamScene, renderer: Renderer) -> Result<Image> {
    let rays = camera.generate_rays()?;
    let pixels = render_rays(weights, &rays, scene, renderer)?;
    Image::from_pixels(camera.width, camera.height, &pixels)
}

impl SampleBatch {
    /// The sub-batch holding rays `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> SampleBatch {
        self.select(&(start..end).collect::<Vec<_>>())
    }

    /// The sub-batch holding the listed rays, in the given order.
    pub fn select(&self, rays: &[usize]) -> SampleBatch {
        let width = self.encoded.cols();
        let mut enc = Vec::new();
        let mut depth = Vec::new();
        let mut ranges = Vec::with_capacity(rays.len());
        for &r in rays {
            let (s, e) = self.ranges[r];
            let start = depth.len();
            enc.extend_from_slice(&self.encoded.as_slice()[s * width..e * width]);
            depth.extend_from_slice(&self.depth.as_slice()[s..e]);
            ranges.push((start, depth.len()));
        }
        let n = depth.len();
        SampleBatch {
            encoded: Matrix::from_vec(n, width, enc),
            depth: Matrix::from_vec(n, 1, depth),
            ranges,
            background: self.background,
        }
    }
}
