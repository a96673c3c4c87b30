//! The training loop: minibatches of objects, views and rays, Adam ascent
//! on the ELBO over every learned parameter.

use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::elbo::{elbo_and_gradient, ElboOptions, ObjectBatch};
use super::pool::{pool_potentials, GaussianPotential};
use crate::data::{Dataset, DatasetEntry, View};
use crate::error::{Error, Result};
use crate::field::FieldWeights;
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub adam: AdamConfig,
    /// Observation noise scale.
    pub s: f64,
    pub objects_per_batch: usize,
    pub views_per_object: usize,
    pub rays_per_object: usize,
    pub likelihood_weight: f64,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            adam: AdamConfig::default(),
            s: 0.1,
            objects_per_batch: 8,
            views_per_object: 10,
            rays_per_object: 1024,
            likelihood_weight: 1.0,
            log_every: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub elbo: f64,
    pub wall_time_s: f64,
}

/// Draws one minibatch.
pub fn sample_batch(model: &Model, dataset: &Dataset, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Vec<ObjectBatch>> {
    let n_obj = dataset.entries.len();
    let objects = index::sample(rng, n_obj, cfg.objects_per_batch.min(n_obj));
    objects
        .iter()
        .map(|o| {
            let entry = &dataset.entries[o];
            let nv = entry.views.len();
            let picked: Vec<&View> = index::sample(rng, nv, cfg.views_per_object.min(nv))
                .iter()
                .map(|v| &entry.views[v])
                .collect();
            let per_view = picked[0].image.n_pixels();
            let total = per_view * picked.len();
            let rays: Vec<(usize, usize)> = index::sample(rng, total, cfg.rays_per_object.min(total))
                .iter()
                .map(|i| (i / per_view, i % per_view))
                .collect();
            ObjectBatch::new(&model.config, &picked, Some(&rays))
        })
        .collect()
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<TrainLogRow>,
}

/// Runs `cfg.iterations` Adam steps. `on_log` sees every logged row as it
/// is produced.
pub fn train(mut model: Model, dataset: &Dataset, cfg: &TrainConfig, mut on_log: impl FnMut(&TrainLogRow)) -> Result<TrainOutcome> {
    if dataset.entries.is_empty() {
        return Err(Error::InvalidArgument("training needs a nonempty dataset".into()));
    }
    if !(cfg.s > 0.0) {
        return Err(Error::InvalidArgument("observation scale must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.adam, model.params.len());
    let opts = ElboOptions {
        s: cfg.s,
        likelihood_weight: cfg.likelihood_weight,
    };
    let start = Instant::now();
    let mut log = Vec::new();
    for it in 0..cfg.iterations {
        let batch = sample_batch(&model, dataset, cfg, &mut rng)?;
        let seed = rng.random::<u64>();
        let (terms, grad) = elbo_and_gradient(&model, &batch, opts, seed, it)?;
        opt.ascend(&mut model.params, &grad);
        if cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
            let row = TrainLogRow {
                iteration: it,
                elbo: terms.total,
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            on_log(&row);
            log.push(row);
        }
    }
    Ok(TrainOutcome { model, log })
}

/// Pooled posterior potential of an object's views.
pub fn posterior_potential(model: &Model, views: &[&View]) -> Result<GaussianPotential> {
    let enc = model.config.encoder_layout();
    let pots = views
        .iter()
        .map(|v| enc.encode_view(model.encoder_params(), &v.image, &v.camera))
        .collect::<Result<Vec<_>>>()?;
    Ok(pool_potentials(&model.prior_potential(), &pots))
}

/// Field decoded from the posterior mean code of `entry`'s views.
pub fn reconstruct(model: &Model, entry: &DatasetEntry) -> Result<FieldWeights> {
    let views: Vec<&View> = entry.views.iter().collect();
    let pot = posterior_potential(model, &views)?;
    model.decode(&pot.mu)
}
