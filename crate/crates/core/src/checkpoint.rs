//! Policy checkpoints: a magic-tagged binary file with a JSON metadata
//! header and raw little-endian 64-bit parameters. Round trips are
//! bit-exact, so a reloaded policy decodes identically.

use crate::envs::RewardConfig;
use crate::instances::{GenConfig, InstanceKind};
use crate::nn::{NetShape, PolicyParams};
use crate::ppo::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"ASSIGNRL";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Everything needed to rebuild the training context: the instance
/// distribution (family, size, generator config, base seed), the
/// reward shaping, the training hyperparameters, and the net shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub family: InstanceKind,
    pub task_count: usize,
    pub worker_count: usize,
    /// Seed of the instance distribution the policy was trained on.
    pub base_seed: u64,
    /// Master seed of the training run (init, sampling, shuffles).
    pub train_seed: u64,
    pub gen: GenConfig,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub shape: NetShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta, params: &PolicyParams) -> Checkpoint {
        Checkpoint { meta, actor: params.actor.clone(), critic: params.critic.clone() }
    }

    pub fn params(&self) -> PolicyParams {
        PolicyParams {
            shape: self.meta.shape,
            actor: self.actor.clone(),
            critic: self.critic.clone(),
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>, CheckpointError> {
    let header = serde_json::to_vec(&ckpt.meta)
        .map_err(|e| CheckpointError::Format(format!("metadata serialization: {e}")))?;
    let mut out = Vec::with_capacity(
        MAGIC.len() + 12 + header.len() + 16 + 8 * (ckpt.actor.len() + ckpt.critic.len()),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for stack in [&ckpt.actor, &ckpt.critic] {
        out.extend_from_slice(&(stack.len() as u64).to_le_bytes());
        for v in stack.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut cur = Cursor { bytes, at: 0 };
    let magic = cur.take(MAGIC.len())?;
    if magic != MAGIC {
        return Err(CheckpointError::Format("bad magic; not a policy checkpoint".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let header_len = cur.take_u64()? as usize;
    let header = cur.take(header_len)?;
    let meta: CheckpointMeta = serde_json::from_slice(header)
        .map_err(|e| CheckpointError::Format(format!("metadata: {e}")))?;

    let mut stacks = Vec::with_capacity(2);
    for name in ["actor", "critic"] {
        let count = cur.take_u64()? as usize;
        let raw = cur.take(8 * count)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if vals.len() != count {
            return Err(CheckpointError::Format(format!("{name} parameter block truncated")));
        }
        stacks.push(vals);
    }
    if cur.at != bytes.len() {
        return Err(CheckpointError::Format(format!(
            "{} trailing bytes after the critic block",
            bytes.len() - cur.at
        )));
    }
    let critic = stacks.pop().expect("two stacks pushed");
    let actor = stacks.pop().expect("two stacks pushed");

    let expect_actor = meta.shape.layout(meta.shape.actions).total;
    let expect_critic = meta.shape.layout(1).total;
    if actor.len() != expect_actor || critic.len() != expect_critic {
        return Err(CheckpointError::Format(format!(
            "parameter counts ({}, {}) disagree with the declared shape ({expect_actor}, {expect_critic})",
            actor.len(),
            critic.len()
        )));
    }
    Ok(Checkpoint { meta, actor, critic })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(ckpt)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}

/// Hex SHA-256 of a byte blob; benchmark reports log this per
/// checkpoint so one can verify the same policy served every row.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn checkpoint_sha256(path: &Path) -> Result<String, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(sha256_hex(&bytes))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], CheckpointError> {
        if self.at + len > self.bytes.len() {
            return Err(CheckpointError::Format(format!(
                "truncated checkpoint: wanted {len} bytes at offset {}",
                self.at
            )));
        }
        let slice = &self.bytes[self.at..self.at + len];
        self.at += len;
        Ok(slice)
    }

    fn take_u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
