//! Procedural voxel objects.
//!
//! Objects live on a `G^3` lattice over the scene box. Each family composes
//! a few axis-aligned boxes or ellipsoids with flat 8-bit colors, so images
//! rendered from them survive an 8-bit round trip unchanged.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::FoamScene;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    BoxStack,
    TwoLimb,
    RandomBlobs,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::BoxStack => "box-stack",
            Family::TwoLimb => "two-limb",
            Family::RandomBlobs => "random-blobs",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box-stack" => Ok(Family::BoxStack),
            "two-limb" => Ok(Family::TwoLimb),
            "random-blobs" => Ok(Family::RandomBlobs),
            other => Err(Error::InvalidArgument(format!("unknown shape family `{other}`"))),
        }
    }
}

/// Inclusive-exclusive voxel index ranges per axis.
pub type VoxelBox = [(usize, usize); 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Part {
    Box { cells: VoxelBox, color: [u8; 3] },
    /// Center and radii in voxel units.
    Ellipsoid { center: [f64; 3], radii: [f64; 3], color: [u8; 3] },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelObject {
    pub grid_size: usize,
    /// Indexed `x + G * (y + G * z)`.
    pub occupancy: Vec<bool>,
    pub albedo: Vec<[f64; 3]>,
    pub seed: u64,
    pub family: Family,
    /// The primitives the object was built from, later parts painted over
    /// earlier ones.
    pub parts: Vec<Part>,
}

pub fn rgb(c: [u8; 3]) -> [f64; 3] {
    [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0]
}

impl VoxelObject {
    pub fn empty(grid_size: usize, seed: u64, family: Family) -> Self {
        let n = grid_size * grid_size * grid_size;
        Self {
            grid_size,
            occupancy: vec![false; n],
            albedo: vec![[0.0; 3]; n],
            seed,
            family,
            parts: Vec::new(),
        }
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.grid_size * (y + self.grid_size * z)
    }

    pub fn occupied(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[self.index(x, y, z)]
    }

    pub fn n_occupied(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    fn set(&mut self, x: usize, y: usize, z: usize, color: [f64; 3]) {
        let i = self.index(x, y, z);
        self.occupancy[i] = true;
        self.albedo[i] = color;
    }

    pub fn add_part(&mut self, part: Part) {
        let g = self.grid_size;
        match &part {
            Part::Box { cells, color } => {
                let c = rgb(*color);
                for z in cells[2].0..cells[2].1.min(g) {
                    for y in cells[1].0..cells[1].1.min(g) {
                        for x in cells[0].0..cells[0].1.min(g) {
                            self.set(x, y, z, c);
                        }
                    }
                }
            }
            Part::Ellipsoid { center, radii, color } => {
                let c = rgb(*color);
                for z in 0..g {
                    for y in 0..g {
                        for x in 0..g {
                            let p = [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5];
                            let r: f64 = (0..3).map(|a| ((p[a] - center[a]) / radii[a]).powi(2)).sum();
                            if r <= 1.0 {
                                self.set(x, y, z, c);
                            }
                        }
                    }
                }
            }
        }
        self.parts.push(part);
    }

    /// World-space bounds of voxel `(x, y, z)` inside `scene`.
    pub fn voxel_bounds(&self, scene: &FoamScene, x: usize, y: usize, z: usize) -> ([f64; 3], [f64; 3]) {
        let idx = [x, y, z];
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..3 {
            let h = (scene.hi[a] - scene.lo[a]) / self.grid_size as f64;
            lo[a] = scene.lo[a] + idx[a] as f64 * h;
            hi[a] = scene.lo[a] + (idx[a] + 1) as f64 * h;
        }
        (lo, hi)
    }
}

fn random_color(rng: &mut impl Rng) -> [u8; 3] {
    // Keep away from the white background.
    let mut c = [0u8; 3];
    for v in &mut c {
        *v = rng.random_range(20..=220);
    }
    c
}

/// Random box within `[lo, hi)` on every axis with extent in `size`.
fn random_box(rng: &mut impl Rng, lo: usize, hi: usize, size: (usize, usize)) -> VoxelBox {
    let mut b = [(0, 0); 3];
    for axis in &mut b {
        let len = rng.random_range(size.0..=size.1).min(hi - lo);
        let start = rng.random_range(lo..=hi - len);
        *axis = (start, start + len);
    }
    b
}

/// Parameters of a two-limb object. Limbs sit behind the body, each swung
/// left or right by `angle_sign`, so the front view cannot tell the signs
/// apart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLimbParams {
    pub body_color: [u8; 3],
    pub limb_colors: [[u8; 3]; 2],
    pub angle_signs: [i8; 2],
}

impl TwoLimbParams {
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut sign = || if rng.random::<bool>() { 1 } else { -1 };
        let angle_signs = [sign(), sign()];
        Self {
            body_color: random_color(rng),
            limb_colors: [random_color(rng), random_color(rng)],
            angle_signs,
        }
    }
}

/// Builds a two-limb object on a lattice of at least 8 cells per axis.
pub fn two_limb(grid_size: usize, seed: u64, p: TwoLimbParams) -> VoxelObject {
    let g = grid_size;
    let mut obj = VoxelObject::empty(g, seed, Family::TwoLimb);
    let q = |f: f64| ((f * g as f64).round() as usize).min(g);
    // Body: a slab centered in x and y, occupying the front half in z.
    let (x0, x1) = (q(0.25), q(0.75));
    let (y0, y1) = (q(0.1875), q(0.8125));
    let (z0, z1) = (q(0.5), q(0.625));
    obj.add_part(Part::Box {
        cells: [(x0, x1), (y0, y1), (z0, z1)],
        color: p.body_color,
    });
    // Limbs: bars running back from the body, swung toward one side. Each
    // stays inside the body's x/y footprint so the body hides it from +z.
    let rows = [(y0, (y0 + y1) / 2), ((y0 + y1) / 2, y1)];
    for (limb, &(ly0, ly1)) in rows.iter().enumerate() {
        let depth = z0.saturating_sub(q(0.25));
        let shrink = ((ly1 - ly0) / 4).max(0);
        let half = (x1 - x0) / 2;
        let (lx0, lx1) = if p.angle_signs[limb] > 0 {
            (x0 + half, x1)
        } else {
            (x0, x0 + half)
        };
        obj.add_part(Part::Box {
            cells: [(lx0, lx1), (ly0 + shrink, ly1 - shrink), (depth, z0)],
            color: p.limb_colors[limb],
        });
    }
    obj
}

pub fn generate_object(seed: u64, family: Family, grid_size: usize) -> Result<VoxelObject> {
    if grid_size < 4 {
        return Err(Error::InvalidArgument("objects need a lattice of at least 4^3".into()));
    }
    let g = grid_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obj = match family {
        Family::BoxStack => {
            let mut obj = VoxelObject::empty(g, seed, family);
            let n = rng.random_range(2..=4);
            let (lo, hi) = (g / 8, g - g / 8);
            for _ in 0..n {
                let cells = random_box(&mut rng, lo, hi, (g / 4, g / 2));
                obj.add_part(Part::Box {
                    cells,
                    color: random_color(&mut rng),
                });
            }
            obj
        }
        Family::TwoLimb => {
            if g < 8 {
                return Err(Error::InvalidArgument("two-limb objects need a lattice of at least 8^3".into()));
            }
            two_limb(g, seed, TwoLimbParams::random(&mut rng))
        }
        Family::RandomBlobs => {
            let mut obj = VoxelObject::empty(g, seed, family);
            let n = rng.random_range(2..=6);
            let gf = g as f64;
            for _ in 0..n {
                let radii = [0.0; 3].map(|_: f64| rng.random_range(0.12..0.25) * gf);
                let center = [0.0; 3].map(|_: f64| rng.random_range(0.3..0.7) * gf);
                obj.add_part(Part::Ellipsoid {
                    center,
                    radii,
                    color: random_color(&mut rng),
                });
            }
            obj
        }
    };
    if obj.n_occupied() == 0 {
        return Err(Error::InvalidArgument(format!(
            "{family} object with seed {seed} came out empty"
        )));
    }
    Ok(obj)
}
