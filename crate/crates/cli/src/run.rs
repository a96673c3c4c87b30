//! Shared plumbing: errors, config merging, run directories, observations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use nerfhmc::data::{crop_view, CameraRig, Dataset, DatasetEntry, Region};
use nerfhmc::eval::ReferenceView;
use nerfhmc::image::Image;
use nerfhmc::model::{Model, Observation};

use crate::options::ObsOpts;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] nerfhmc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(nerfhmc::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Core(e.into())
}

/// Options from `config` overlaid with every flag that was given.
pub fn merge<T: Serialize + DeserializeOwned + Default>(config: Option<&Path>, flags: &T) -> CliResult<T> {
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(flags).map_err(json_err)?).map_err(json_err)?);
    };
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: Value = serde_json::from_str(&text).map_err(json_err)?;
    let Value::Object(mut map) = file else {
        return Err(usage(format!("{}: config must be a JSON object", path.display())));
    };
    let Value::Object(known) = serde_json::to_value(T::default()).map_err(json_err)? else {
        unreachable!("option structs serialize to objects");
    };
    if let Some(bad) = map.keys().find(|k| !known.contains_key(*k)) {
        return Err(usage(format!("{}: unknown config key `{bad}`", path.display())));
    }
    if let Value::Object(set) = serde_json::to_value(flags).map_err(json_err)? {
        for (k, v) in set {
            if !v.is_null() {
                map.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value.as_ref().ok_or_else(|| usage(format!("missing required option --{flag}")))
}

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(json_err)?;
        self.write_text(name, &(text + "\n"))
    }

    /// Records the fully resolved options, seed included.
    pub fn write_config<T: Serialize>(&self, opts: &T) -> CliResult<()> {
        self.write_json("config.json", opts)
    }
}

pub fn load_model(path: &Option<PathBuf>) -> CliResult<Model> {
    Ok(Model::load(required(path, "checkpoint")?)?)
}

pub fn parse_region(s: &str) -> CliResult<Region> {
    match s {
        "full" => Ok(Region::Full),
        "left-half" => Ok(Region::LeftHalf),
        "right-half" => Ok(Region::RightHalf),
        other => Err(usage(format!("unknown region `{other}` (expected full, left-half or right-half)"))),
    }
}

/// The conditioning observation, its reference view, and the dataset entry
/// it came from, if any. Fills in defaults on `o`.
pub fn load_observation(o: &mut ObsOpts, model: &Model) -> CliResult<(Observation, ReferenceView, Option<DatasetEntry>)> {
    let region = parse_region(o.region.get_or_insert_with(|| "full".into()))?;
    let (image, camera, entry) = match (&o.dataset, &o.image) {
        (Some(_), Some(_)) => return Err(usage("give either --dataset or --image, not both")),
        (None, None) => return Err(usage("missing conditioning view: give --dataset or --image")),
        (Some(dir), None) => {
            let ds = Dataset::load(dir)?;
            let obj = *o.object.get_or_insert(0);
            let view = *o.view.get_or_insert(0);
            let entry = ds
                .entries
                .get(obj)
                .cloned()
                .ok_or_else(|| usage(format!("dataset has no object {obj}")))?;
            let v = entry
                .views
                .get(view)
                .cloned()
                .ok_or_else(|| usage(format!("object {obj} has no view {view}")))?;
            (v.image, v.camera, Some(entry))
        }
        (None, Some(path)) => {
            let image = Image::read_ppm(path)?;
            let az = *o.azimuth.get_or_insert(0.0);
            let camera = CameraRig::new(image.width, image.height).at_azimuth(az)?;
            (image, camera, None)
        }
    };
    let enc = &model.config.encoder;
    if image.width != enc.image_width || image.height != enc.image_height {
        return Err(usage(format!(
            "view is {}x{}, model expects {}x{}",
            image.width, image.height, enc.image_width, enc.image_height
        )));
    }
    let obs = crop_view(&image, &camera, &region)?;
    let reference = ReferenceView {
        name: "conditioned".into(),
        camera,
        image,
        region,
    };
    Ok((obs, reference, entry))
}
