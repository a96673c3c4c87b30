//! Model checkpoints: configuration, flow permutations and every learned
//! parameter in a single file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::io;

pub const MAGIC: &[u8; 8] = b"NHMCKPT\0";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    perm_seed: u64,
    perms: Vec<Vec<usize>>,
    /// `(name, length)` of each parameter block, in payload order.
    sections: Vec<(String, usize)>,
}

fn sections(config: &ModelConfig) -> Vec<(String, usize)> {
    let l = config.layout();
    vec![
        ("flow".into(), l.hypernet - l.flow),
        ("hypernet".into(), l.encoder - l.hypernet),
        ("encoder".into(), l.prior - l.encoder),
        ("prior_potential".into(), l.total - l.prior),
    ]
}

impl Model {
    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            perm_seed: self.config.perm_seed,
            perms: self.perms.clone(),
            sections: sections(&self.config),
        };
        io::encode(MAGIC, &header, &self.params)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, params): (Header, Vec<f64>) = io::decode("checkpoint", MAGIC, bytes)?;
        if header.sections != sections(&header.config) {
            return Err(Error::format("checkpoint", "section table does not match the configuration"));
        }
        Model::from_parts(header.config, header.perms, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_checkpoint_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }

    /// The model as it reads back from disk.
    pub fn quantized(&self) -> Self {
        Self {
            config: self.config.clone(),
            perms: self.perms.clone(),
            params: io::quantize(&self.params),
        }
    }
}
