//! Per-subcommand options. Every field can come from the JSON file passed
//! with `--config` or from a flag; flags win. Unset fields take the
//! documented defaults when the command resolves them.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

#[derive(Args, Debug)]
pub struct Cmd<T: Args> {
    /// JSON file with option values; flags override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Run directory for every output.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: T,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MakeDataOpts {
    /// Number of objects [default: 64]
    #[arg(long)]
    pub objects: Option<usize>,
    /// Views per object [default: 10]
    #[arg(long)]
    pub views: Option<usize>,
    /// Square image size in pixels [default: 32]
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Lattice cells per axis [default: 16]
    #[arg(long)]
    pub grid: Option<usize>,
    /// Comma-separated shape families [default: box-stack,two-limb,random-blobs]
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// uniform-random or equally-spaced [default: uniform-random]
    #[arg(long)]
    pub camera_mode: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOpts {
    /// Dataset directory written by `make-data`
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Adam steps [default: 3000]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Observation noise scale [default: 0.1]
    #[arg(long)]
    pub s: Option<f64>,
    /// Latent dimension K [default: 8]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Lattice cells per axis; must match the dataset [default: dataset's]
    #[arg(long)]
    pub grid: Option<usize>,
    /// Image size; must match the dataset [default: dataset's]
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Positional-encoding order [default: 3]
    #[arg(long)]
    pub encoding_order: Option<usize>,
    /// Radiance-field hidden width [default: 16]
    #[arg(long)]
    pub field_width: Option<usize>,
    /// [default: 32]
    #[arg(long)]
    pub flow_hidden: Option<usize>,
    /// [default: 64]
    #[arg(long)]
    pub hypernet_hidden: Option<usize>,
    /// [default: 2]
    #[arg(long)]
    pub hypernet_layers: Option<usize>,
    /// Weight-perturbation variance [default: 0.000625]
    #[arg(long)]
    pub alpha_w: Option<f64>,
    /// [default: 8]
    #[arg(long)]
    pub objects_per_batch: Option<usize>,
    /// [default: 5]
    #[arg(long)]
    pub views_per_object: Option<usize>,
    /// [default: 256]
    #[arg(long)]
    pub rays_per_object: Option<usize>,
    /// Iterations between log rows [default: 10]
    #[arg(long)]
    pub log_every: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplePriorOpts {
    /// Model checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of draws [default: 4]
    #[arg(long)]
    pub n: Option<usize>,
    /// Equally spaced views rendered per draw [default: 4]
    #[arg(long)]
    pub views: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Which view to condition on: a dataset view, or an image file seen from
/// an azimuth on the standard camera circle.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObsOpts {
    /// Dataset directory
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Object index within the dataset [default: 0]
    #[arg(long)]
    pub object: Option<usize>,
    /// View index within the object [default: 0]
    #[arg(long)]
    pub view: Option<usize>,
    /// PPM image to condition on instead of a dataset view
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Camera azimuth of `--image`, radians [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub azimuth: Option<f64>,
    /// full, left-half or right-half [default: full]
    #[arg(long)]
    pub region: Option<String>,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmcOpts {
    /// Model checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub obs: ObsOpts,
    /// [default: 8]
    #[arg(long)]
    pub chains: Option<usize>,
    /// Annealing iterations T [default: 100]
    #[arg(long)]
    pub anneal_steps: Option<usize>,
    /// Leapfrog steps per iteration [default: 100]
    #[arg(long)]
    pub leapfrog: Option<usize>,
    /// Final iterates kept per chain [default: 16]
    #[arg(long)]
    pub keep_last: Option<usize>,
    /// [default: 5]
    #[arg(long)]
    pub s0: Option<f64>,
    /// [default: 0.1]
    #[arg(long)]
    pub s_final: Option<f64>,
    /// Step size at s0 [default: 1.0]
    #[arg(long)]
    pub step: Option<f64>,
    /// foam or quadrature [default: foam]
    #[arg(long)]
    pub renderer: Option<String>,
    /// Samples per ray for the quadrature renderer [default: 32]
    #[arg(long)]
    pub quadrature_samples: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViOpts {
    /// Model checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub obs: ObsOpts,
    /// Gradient steps [default: 1500]
    #[arg(long)]
    pub steps: Option<usize>,
    /// [default: 0.01]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Initial log scale [default: -2]
    #[arg(long)]
    pub init_log_sigma: Option<f64>,
    /// Noise scale of the targeted posterior [default: 0.1]
    #[arg(long)]
    pub s: Option<f64>,
    /// Draws from the fitted distribution [default: 16]
    #[arg(long)]
    pub samples: Option<usize>,
    /// stl or plain [default: stl]
    #[arg(long)]
    pub estimator: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOpts {
    /// Model checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Sample archive
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Comma-separated camera azimuths, radians [default: 0]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub azimuths: Option<Vec<f64>>,
    /// Render at most this many archived states [default: all]
    #[arg(long)]
    pub max_samples: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOpts {
    /// Model checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Sample archives; repeat or comma-separate
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<PathBuf>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub obs: ObsOpts,
    /// Held-out dataset view indices [default: every other view]
    #[arg(long, value_delimiter = ',')]
    pub held_out: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateRendererOpts {
    /// Model checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated step sizes [default: 9 log-spaced from 1e-5 to 1e-1]
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<f64>>,
    /// [default: 8]
    #[arg(long)]
    pub chains: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    pub leapfrog: Option<usize>,
    /// [default: 20]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Noise scale of the target [default: 0.1]
    #[arg(long)]
    pub s: Option<f64>,
    /// [default: 32]
    #[arg(long)]
    pub quadrature_samples: Option<usize>,
    /// Azimuth of the rendered view, radians [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub azimuth: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateAnnealingOpts {
    /// Model checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub obs: ObsOpts,
    /// [default: 8]
    #[arg(long)]
    pub chains: Option<usize>,
    /// [default: 100]
    #[arg(long)]
    pub anneal_steps: Option<usize>,
    /// [default: 100]
    #[arg(long)]
    pub leapfrog: Option<usize>,
    /// Annealed step size at s0 [default: 1.0]
    #[arg(long)]
    pub step: Option<f64>,
    /// Fixed-temperature step size [default: the annealed terminal step]
    #[arg(long)]
    pub fixed_step: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}
