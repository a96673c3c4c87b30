//! Synthetic voxel scenes, their ground-truth renderer, camera rigs, and
//! dataset persistence.

pub mod cameras;
pub mod dataset;
pub mod observation;
pub mod oracle;
pub mod voxel;

pub use cameras::{sample_cameras, CameraMode, CameraRig};
pub use dataset::{build_dataset, Dataset, DatasetEntry, DatasetSpec, View};
pub use observation::{crop_view, Region};
pub use oracle::oracle_render;
pub use voxel::{generate_object, Family, VoxelObject};
