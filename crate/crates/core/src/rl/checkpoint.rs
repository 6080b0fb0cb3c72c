//! Binary checkpoint format for a trained actor-critic.
//!
//! ```text
//! b"ORANCKPT"            8-byte magic
//! header length          u32, little-endian
//! header                 UTF-8 JSON manifest
//! payload                f64 little-endian: actor params, then critic params
//! ```
//!
//! The manifest records the format version, the kind tag, layer widths,
//! head sizes, hyperparameters, the number of training episodes, the RNG seed
//! and the payload length in floats. Saving what was loaded reproduces the
//! file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;
use crate::error::{Error, Result};
use crate::rl::{A2CHyper, ActorCritic, Mlp};

pub const MAGIC: &[u8; 8] = b"ORANCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub kind: String,
    pub actor_dims: Vec<usize>,
    pub critic_dims: Vec<usize>,
    pub head_sizes: Vec<usize>,
    pub hyper: A2CHyper,
    pub episodes: u64,
    pub seed: u64,
    pub payload_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub net: ActorCritic,
    pub hyper: A2CHyper,
    pub episodes: u64,
    pub seed: u64,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

impl Checkpoint {
    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            actor_dims: self.net.actor.dims().to_vec(),
            critic_dims: self.net.critic.dims().to_vec(),
            head_sizes: self.net.head_sizes.clone(),
            hyper: self.hyper.clone(),
            episodes: self.episodes,
            seed: self.seed,
            payload_len: self.net.actor.num_params() + self.net.critic.num_params(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&self.header(), &self.net)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: String| Error::CorruptCheckpoint(msg);
        if bytes.len() < MAGIC.len() + 4 {
            return Err(corrupt(format!("file is only {} bytes", bytes.len())));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let mut len_bytes = [0u8; 4];
        len_bytes.copy_from_slice(&bytes[8..12]);
        let header_len = u32::from_le_bytes(len_bytes) as usize;
        let header_end = 12usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| corrupt(format!("header claims {header_len} bytes, file too short")))?;
        let header_bytes = &bytes[12..header_end];
        let probe: VersionProbe = serde_json::from_slice(header_bytes)
            .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
        if probe.version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: probe.version,
                expected: FORMAT_VERSION,
            });
        }
        let header: CheckpointHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| corrupt(format!("unreadable header: {e}")))?;
        let payload = &bytes[header_end..];
        let expected = header.payload_len.checked_mul(8).ok_or_else(|| corrupt("payload length overflows".into()))?;
        if payload.len() != expected {
            return Err(corrupt(format!(
                "payload is {} bytes, manifest declares {} floats ({expected} bytes)",
                payload.len(),
                header.payload_len
            )));
        }
        let floats: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let actor_len: usize = header.actor_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if actor_len > floats.len() {
            return Err(corrupt("payload shorter than actor".into()));
        }
        let (actor_params, critic_params) = floats.split_at(actor_len);
        let actor = Mlp::from_params(&header.actor_dims, actor_params.to_vec())
            .map_err(|e| corrupt(format!("actor: {e}")))?;
        let critic = Mlp::from_params(&header.critic_dims, critic_params.to_vec())
            .map_err(|e| corrupt(format!("critic: {e}")))?;
        let net = ActorCritic::from_parts(actor, critic, header.head_sizes)
            .map_err(|e| corrupt(format!("network: {e}")))?;
        Ok(Self {
            kind: header.kind,
            net,
            hyper: header.hyper,
            episodes: header.episodes,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn checksum(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

fn encode(header: &CheckpointHeader, net: &ActorCritic) -> Vec<u8> {
    let header_json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header_json.len() + header.payload_len * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for p in net.actor.params().iter().chain(net.critic.params()) {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Checkpoint {
            kind: "power".into(),
            net: ActorCritic::new(5, &[7, 3], &[4, 4], &mut rng).unwrap(),
            hyper: A2CHyper::default(),
            episodes: 1234,
            seed: 99,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_payload_is_a_length_error() {
        let bytes = sample().to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::CorruptCheckpoint(ref m) if m.contains("payload")), "{err}");
        assert!(matches!(Checkpoint::from_bytes(&bytes[..10]), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let ckpt = sample();
        let mut header = ckpt.header();
        header.version = FORMAT_VERSION + 1;
        let bytes = encode(&header, &ckpt.net);
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::CheckpointVersion { found, expected }) if found == FORMAT_VERSION + 1 && expected == FORMAT_VERSION
        ));
    }

    #[test]
    fn missing_file_is_reported() {
        let err = Checkpoint::load(Path::new("/nonexistent/power.ckpt")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }
}
