//! Sample archives and per-chain diagnostics files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chains::{ChainConfig, ChainRun};
use super::schedule::AnnealingSchedule;
use crate::error::{Error, Result};
use crate::io;

const MAGIC: &[u8; 8] = b"NHMCSAMP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    /// Producer of the samples, e.g. `hmc`, `latent-only`, `vi`.
    pub method: String,
    pub n_chains: usize,
    pub keep_last: usize,
    /// Latent dimension `K`.
    pub latent_dim: usize,
    /// Field weight dimension `D`.
    pub weight_dim: usize,
    /// Length of each stored state: `K + D`, or `K` when `delta` is not
    /// part of the state.
    pub state_dim: usize,
    pub seeds: Vec<u64>,
    pub schedule: Option<AnnealingSchedule>,
    /// `(chain, iteration)` of each stored state.
    pub provenance: Vec<(usize, usize)>,
    /// Per-chain acceptance rates, empty for independent draws.
    #[serde(default)]
    pub acceptance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleArchive {
    pub header: ArchiveHeader,
    pub states: Vec<Vec<f64>>,
}

impl SampleArchive {
    pub fn from_chains(
        method: &str,
        run: &ChainRun,
        cfg: &ChainConfig,
        schedule: &AnnealingSchedule,
        latent_dim: usize,
        weight_dim: usize,
    ) -> Self {
        let mut provenance = Vec::new();
        let mut states = Vec::new();
        for (c, samples) in run.samples.iter().enumerate() {
            let first = schedule.n_steps + 1 - samples.len();
            for (j, x) in samples.iter().enumerate() {
                provenance.push((c, first + j));
                states.push(x.clone());
            }
        }
        Self {
            header: ArchiveHeader {
                method: method.into(),
                n_chains: cfg.n_chains,
                keep_last: cfg.keep_last,
                latent_dim,
                weight_dim,
                state_dim: states.first().map_or(0, Vec::len),
                seeds: run.seeds.clone(),
                schedule: Some(*schedule),
                provenance,
                acceptance: run.acceptance_rates(),
            },
            states,
        }
    }

    /// Independent draws, recorded as a single chain.
    pub fn from_draws(method: &str, states: Vec<Vec<f64>>, seed: u64, latent_dim: usize, weight_dim: usize) -> Self {
        Self {
            header: ArchiveHeader {
                method: method.into(),
                n_chains: 1,
                keep_last: states.len(),
                latent_dim,
                weight_dim,
                state_dim: states.first().map_or(0, Vec::len),
                seeds: vec![seed],
                schedule: None,
                provenance: (0..states.len()).map(|i| (0, i)).collect(),
                acceptance: Vec::new(),
            },
            states,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Expands stored states to full `(z_tilde, delta)` vectors.
    pub fn full_states(&self) -> Vec<Vec<f64>> {
        let full = self.header.latent_dim + self.header.weight_dim;
        self.states
            .iter()
            .map(|x| {
                let mut v = x.clone();
                v.resize(full, 0.0);
                v
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let flat: Vec<f64> = self.states.iter().flatten().copied().collect();
        io::encode(MAGIC, &self.header, &flat)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, flat): (ArchiveHeader, Vec<f64>) = io::decode("sample archive", MAGIC, bytes)?;
        let d = header.state_dim;
        if header.provenance.len() * d != flat.len() {
            return Err(Error::format(
                "sample archive",
                format!(
                    "{} states of length {d} need {} values, found {}",
                    header.provenance.len(),
                    header.provenance.len() * d,
                    flat.len()
                ),
            ));
        }
        if d != header.latent_dim && d != header.latent_dim + header.weight_dim {
            return Err(Error::format("sample archive", "state length matches neither K nor K + D"));
        }
        let states = if d == 0 {
            Vec::new()
        } else {
            flat.chunks_exact(d).map(<[f64]>::to_vec).collect()
        };
        Ok(Self { header, states })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// `chain,t,s,step_size,accept_prob,accept_rate,log_joint` rows.
pub fn diagnostics_csv(run: &ChainRun) -> String {
    let mut out = String::from("chain,t,s,step_size,accept_prob,accept_rate,log_joint\n");
    for (c, rows) in run.diagnostics.iter().enumerate() {
        for r in rows {
            let _ = writeln!(
                out,
                "{c},{},{},{},{},{},{}",
                r.t, r.s, r.step_size, r.accept_prob, r.accept_rate, r.log_joint
            );
        }
    }
    out
}

pub fn write_diagnostics(path: &Path, run: &ChainRun) -> Result<()> {
    fs::write(path, diagnostics_csv(run)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_quantizes_to_f32() {
        let states = vec![vec![0.1, 0.2, 0.3], vec![-1.0, 2.5, 1e-3]];
        let a = SampleArchive::from_draws("vi", states.clone(), 7, 1, 2);
        let back = SampleArchive::from_bytes(&a.to_bytes().unwrap()).unwrap();
        assert_eq!(back.header, a.header);
        for (x, y) in back.states.iter().zip(&states) {
            assert_eq!(x, &io::quantize(y));
        }
        let mut bytes = a.to_bytes().unwrap();
        bytes.truncate(bytes.len() - 4);
        assert!(SampleArchive::from_bytes(&bytes).is_err());
    }

    #[test]
    fn latent_only_states_expand_with_zero_delta() {
        let a = SampleArchive::from_draws("latent-only", vec![vec![1.0, 2.0]], 0, 2, 3);
        assert_eq!(a.full_states(), vec![vec![1.0, 2.0, 0.0, 0.0, 0.0]]);
    }
}
