//! Rendering posterior samples and summarizing them against reference views.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{masked_mse, per_pixel_variance, Psnr};
use crate::data::Region;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{LatentState, Model};
use crate::render::{render_image, Camera, Renderer};

/// Foam renders of full `(z_tilde, delta)` states from one camera.
pub fn render_states(model: &Model, states: &[Vec<f64>], camera: &Camera) -> Result<Vec<Image>> {
    let k = model.config.latent_dim;
    states
        .par_iter()
        .map(|x| {
            if x.len() != model.config.state_dim() {
                return Err(Error::Shape(format!(
                    "state has length {}, model expects {}",
                    x.len(),
                    model.config.state_dim()
                )));
            }
            let w = model.field_weights(&LatentState::from_flat(x, k))?;
            render_image(&w, camera, &model.config.scene, Renderer::Foam)
        })
        .collect()
}

/// A reference view to compare sample renders against.
#[derive(Clone, Debug)]
pub struct ReferenceView {
    pub name: String,
    pub camera: Camera,
    pub image: Image,
    /// Pixels scored by the PSNR.
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub name: String,
    pub psnr_per_sample: Vec<Psnr>,
    /// Mean of the per-sample decibel values; infinite if any sample is.
    pub mean_psnr: Psnr,
    /// Mean unbiased per-pixel variance across samples.
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub n_samples: usize,
    pub conditioned: Vec<ViewReport>,
    pub held_out: Vec<ViewReport>,
    /// Mean of the held-out views' per-pixel variance.
    pub held_out_variance: f64,
    pub acceptance_rates: Vec<f64>,
    pub runtime_s: f64,
}

pub fn mean_psnr(values: &[Psnr]) -> Psnr {
    if values.iter().any(|p| p.is_infinite()) || values.is_empty() {
        return Psnr::Infinite;
    }
    Psnr::Finite(values.iter().map(|p| p.db()).sum::<f64>() / values.len() as f64)
}

pub fn view_report(view: &ReferenceView, renders: &[Image]) -> Result<ViewReport> {
    let pixels = view.region.pixel_indices(view.image.width, view.image.height)?;
    let psnr_per_sample = renders
        .iter()
        .map(|r| Ok(Psnr::from_mse(masked_mse(r, &view.image, &pixels)?)))
        .collect::<Result<Vec<_>>>()?;
    let variance = if renders.len() >= 2 {
        per_pixel_variance(renders)?.1
    } else {
        0.0
    };
    Ok(ViewReport {
        name: view.name.clone(),
        mean_psnr: mean_psnr(&psnr_per_sample),
        psnr_per_sample,
        variance,
    })
}

/// Scores full-state samples on conditioned and held-out views.
pub fn evaluate_states(
    model: &Model,
    method: &str,
    states: &[Vec<f64>],
    conditioned: &[ReferenceView],
    held_out: &[ReferenceView],
) -> Result<EvalReport> {
    let score = |views: &[ReferenceView]| -> Result<Vec<ViewReport>> {
        views
            .iter()
            .map(|v| view_report(v, &render_states(model, states, &v.camera)?))
            .collect()
    };
    let conditioned = score(conditioned)?;
    let held_out = score(held_out)?;
    let held_out_variance = if held_out.is_empty() {
        0.0
    } else {
        held_out.iter().map(|v| v.variance).sum::<f64>() / held_out.len() as f64
    };
    Ok(EvalReport {
        method: method.into(),
        n_samples: states.len(),
        conditioned,
        held_out,
        held_out_variance,
        acceptance_rates: Vec::new(),
        runtime_s: 0.0,
    })
}
