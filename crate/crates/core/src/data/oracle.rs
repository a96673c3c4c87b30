//! Ground-truth rendering of voxel objects by grid traversal.
//!
//! Independent of the radiance-field renderers: each ray walks the voxel
//! lattice cell by cell (Amanatides and Woo) and takes the albedo of the
//! first occupied cell, or the background if it leaves the box.

use crate::error::Result;
use crate::image::Image;
use crate::render::{Camera, FoamScene, Ray};

use super::voxel::VoxelObject;

pub fn trace(obj: &VoxelObject, ray: &Ray, scene: &FoamScene) -> [f64; 3] {
    let Some((t0, t1)) = scene.clip(ray) else {
        return scene.background;
    };
    let g = obj.grid_size as isize;
    let mut cell = [0isize; 3];
    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let p = ray.at(t0);
    for a in 0..3 {
        let h = (scene.hi[a] - scene.lo[a]) / g as f64;
        let d = ray.direction[a];
        let mut i = ((p[a] - scene.lo[a]) / h).floor() as isize;
        // Entering through the far face of the last cell.
        if d < 0.0 && (p[a] - scene.lo[a]) / h == i as f64 {
            i -= 1;
        }
        cell[a] = i.clamp(0, g - 1);
        if d > 0.0 {
            step[a] = 1;
            t_max[a] = (scene.lo[a] + (cell[a] + 1) as f64 * h - ray.origin[a]) / d;
            t_delta[a] = h / d;
        } else if d < 0.0 {
            step[a] = -1;
            t_max[a] = (scene.lo[a] + cell[a] as f64 * h - ray.origin[a]) / d;
            t_delta[a] = -h / d;
        }
    }
    loop {
        let idx = obj.index(cell[0] as usize, cell[1] as usize, cell[2] as usize);
        if obj.occupancy[idx] {
            return obj.albedo[idx];
        }
        let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[a] > t1 {
            return scene.background;
        }
        cell[a] += step[a];
        if cell[a] < 0 || cell[a] >= g {
            return scene.background;
        }
        t_max[a] += t_delta[a];
    }
}

pub fn oracle_render(obj: &VoxelObject, camera: &Camera, scene: &FoamScene) -> Result<Image> {
    let rays = camera.generate_rays()?;
    let pixels: Vec<[f64; 3]> = rays.iter().map(|r| trace(obj, r, scene)).collect();
    Image::from_pixels(camera.width, camera.height, &pixels)
}
