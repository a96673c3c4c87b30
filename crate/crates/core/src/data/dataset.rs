//! Multi-view datasets of voxel objects and their on-disk layout.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/object_0000/cameras.json
//! <dir>/object_0000/view_00.ppm
//! ...
//! ```

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cameras::{sample_cameras, CameraMode, CameraRig};
use super::oracle::oracle_render;
use super::voxel::{generate_object, Family, VoxelObject};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::{Camera, FoamScene};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_objects: usize,
    pub views_per_object: usize,
    pub rig: CameraRig,
    pub grid_size: usize,
    pub families: Vec<Family>,
    pub camera_mode: CameraMode,
    pub seed: u64,
}

impl DatasetSpec {
    /// 64 objects, 10 views, 32x32 images, 16^3 lattice.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_objects: 64,
            views_per_object: 10,
            rig: CameraRig::new(32, 32),
            grid_size: 16,
            families: vec![Family::BoxStack, Family::TwoLimb, Family::RandomBlobs],
            camera_mode: CameraMode::UniformRandom,
            seed,
        }
    }

    pub fn scene(&self) -> FoamScene {
        FoamScene::new(self.grid_size)
    }

    /// Per-object `(seed, family)` drawn from the dataset seed.
    pub fn object_seeds(&self) -> Vec<(u64, Family)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_objects)
            .map(|i| (rng.random(), self.families[i % self.families.len()]))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub image: Image,
    pub camera: Camera,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub id: usize,
    pub seed: u64,
    pub family: Family,
    pub views: Vec<View>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub entries: Vec<DatasetEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestView {
    file: String,
    camera: Camera,
}

#[derive(Serialize, Deserialize)]
struct ManifestObject {
    id: usize,
    seed: u64,
    family: Family,
    cameras_file: String,
    views: Vec<ManifestView>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    spec: DatasetSpec,
    objects: Vec<ManifestObject>,
}

/// Renders `n` views of one object.
pub fn render_entry(spec: &DatasetSpec, id: usize, seed: u64, family: Family) -> Result<(VoxelObject, DatasetEntry)> {
    let obj = generate_object(seed, family, spec.grid_size)?;
    let cams = sample_cameras(spec.views_per_object, &spec.rig, seed ^ 0x9e37_79b9_7f4a_7c15, spec.camera_mode)?;
    let scene = spec.scene();
    let views = cams
        .into_iter()
        .map(|camera| {
            Ok(View {
                image: oracle_render(&obj, &camera, &scene)?,
                camera,
            })
        })
        .collect::<Result<_>>()?;
    Ok((
        obj,
        DatasetEntry {
            id,
            seed,
            family,
            views,
        },
    ))
}

pub fn build_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.n_objects == 0 || spec.views_per_object == 0 || spec.families.is_empty() {
        return Err(Error::InvalidArgument(
            "dataset needs at least one object, one view and one family".into(),
        ));
    }
    let entries = spec
        .object_seeds()
        .into_par_iter()
        .enumerate()
        .map(|(id, (seed, family))| render_entry(spec, id, seed, family).map(|(_, e)| e))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        entries,
    })
}

fn object_dir(id: usize) -> String {
    format!("object_{id:04}")
}

impl Dataset {
    pub fn image_size(&self) -> (usize, usize) {
        (self.spec.rig.width, self.spec.rig.height)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut objects = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            let sub = object_dir(entry.id);
            let path = dir.join(&sub);
            fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
            let mut views = Vec::with_capacity(entry.views.len());
            for (v, view) in entry.views.iter().enumerate() {
                let file = format!("{sub}/view_{v:02}.ppm");
                view.image.write_ppm(&dir.join(&file))?;
                views.push(ManifestView {
                    file,
                    camera: view.camera.clone(),
                });
            }
            let cameras: Vec<&Camera> = entry.views.iter().map(|v| &v.camera).collect();
            let cameras_file = format!("{sub}/cameras.json");
            write_json(&dir.join(&cameras_file), &cameras)?;
            objects.push(ManifestObject {
                id: entry.id,
                seed: entry.seed,
                family: entry.family,
                cameras_file,
                views,
            });
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            spec: self.spec.clone(),
            objects,
        };
        write_json(&dir.join("manifest.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::format(
                "manifest",
                format!("unsupported version {}", manifest.version),
            ));
        }
        let mut entries = Vec::with_capacity(manifest.objects.len());
        for obj in manifest.objects {
            let views = obj
                .views
                .into_iter()
                .map(|v| {
                    v.camera.validate()?;
                    Ok(View {
                        image: Image::read_ppm(&dir.join(&v.file))?,
                        camera: v.camera,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            entries.push(DatasetEntry {
                id: obj.id,
                seed: obj.seed,
                family: obj.family,
                views,
            });
        }
        let ds = Dataset {
            spec: manifest.spec,
            entries,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Rebuilds every entry from the recorded seeds.
    pub fn regenerate(&self) -> Result<Dataset> {
        build_dataset(&self.spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size();
        for e in &self.entries {
            if e.views.is_empty() {
                return Err(Error::format("dataset", format!("object {} has no views", e.id)));
            }
            for v in &e.views {
                if v.image.width != w || v.image.height != h {
                    return Err(Error::format("dataset", format!("object {} has a mis-sized image", e.id)));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}
