//! Conditioning sets: arbitrary pixel subsets of a view with their rays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::Observation;
use crate::render::Camera;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Full,
    LeftHalf,
    RightHalf,
    /// Rows `row0..row1`, columns `col0..col1`.
    Rect {
        row0: usize,
        row1: usize,
        col0: usize,
        col1: usize,
    },
    /// Row-major pixel indices.
    Pixels(Vec<usize>),
}

impl Region {
    pub fn pixel_indices(&self, width: usize, height: usize) -> Result<Vec<usize>> {
        let rect = |r0: usize, r1: usize, c0: usize, c1: usize| -> Result<Vec<usize>> {
            if r1 > height || c1 > width || r0 > r1 || c0 > c1 {
                return Err(Error::InvalidArgument(format!(
                    "region rows {r0}..{r1}, cols {c0}..{c1} outside a {width}x{height} image"
                )));
            }
            Ok((r0..r1).flat_map(|r| (c0..c1).map(move |c| r * width + c)).collect())
        };
        let idx = match self {
            Region::Full => rect(0, height, 0, width)?,
            Region::LeftHalf => rect(0, height, 0, width / 2)?,
            Region::RightHalf => rect(0, height, width / 2, width)?,
            Region::Rect { row0, row1, col0, col1 } => rect(*row0, *row1, *col0, *col1)?,
            Region::Pixels(p) => {
                if let Some(&bad) = p.iter().find(|&&i| i >= width * height) {
                    return Err(Error::InvalidArgument(format!("pixel index {bad} out of range")));
                }
                p.clone()
            }
        };
        if idx.is_empty() {
            return Err(Error::InvalidArgument("region selects no pixels".into()));
        }
        Ok(idx)
    }
}

/// The in-region pixels of `image` and their rays.
pub fn crop_view(image: &Image, camera: &Camera, region: &Region) -> Result<Observation> {
    if image.width != camera.width || image.height != camera.height {
        return Err(Error::Shape("image and camera sizes differ".into()));
    }
    let idx = region.pixel_indices(image.width, image.height)?;
    let rays = idx
        .iter()
        .map(|&i| camera.ray(i / image.width, i % image.width))
        .collect();
    let pixels = idx.iter().map(|&i| image.pixel_at(i)).collect();
    Observation::new(rays, pixels)
}
