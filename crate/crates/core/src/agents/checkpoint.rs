//! Binary checkpoint container.
//!
//! Layout: 8 magic bytes, `u32` version, `u32` header length, JSON header,
//! then every tensor's `f32` values in little-endian order. The header carries
//! the encoder config, network spec, a shape table and the SHA-256 of the
//! parameter bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ActMode, AgentError, NetSpec, PolicyHandle};
use crate::nn::Mlp;
use crate::observations::EncoderConfig;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"HA2CKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    id: String,
    encoder: EncoderConfig,
    spec: NetSpec,
    mode: ActMode,
    tensors: Vec<TensorEntry>,
    param_sha256: String,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn tensor_table(policy: &PolicyHandle) -> Vec<TensorEntry> {
    let mut out = Vec::new();
    for (net_name, net) in [("actor", &policy.actor), ("critic", &policy.critic)] {
        for (i, l) in net.layers.iter().enumerate() {
            out.push(TensorEntry {
                name: format!("{net_name}.{i}.w"),
                shape: l.w.shape().to_vec(),
            });
            out.push(TensorEntry {
                name: format!("{net_name}.{i}.b"),
                shape: l.b.shape().to_vec(),
            });
        }
    }
    out
}

fn param_bytes(policy: &PolicyHandle) -> Vec<u8> {
    policy
        .actor
        .flatten()
        .into_iter()
        .chain(policy.critic.flatten())
        .flat_map(f32::to_le_bytes)
        .collect()
}

pub fn encode_checkpoint(policy: &PolicyHandle) -> Vec<u8> {
    let params = param_bytes(policy);
    let header = Header {
        id: policy.id.clone(),
        encoder: policy.encoder.clone(),
        spec: policy.spec.clone(),
        mode: policy.mode,
        tensors: tensor_table(policy),
        param_sha256: hex::encode(Sha256::digest(&params)),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + params.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&params);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PolicyHandle, AgentError> {
    let corrupt = |m: &str| AgentError::CorruptCheckpoint(m.to_string());
    if bytes.len() < 16 || bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(AgentError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_bytes = bytes.get(16..16 + header_len).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| AgentError::CorruptCheckpoint(format!("header: {e}")))?;
    let params = &bytes[16 + header_len..];
    if hex::encode(Sha256::digest(params)) != header.param_sha256 {
        return Err(corrupt("parameter hash mismatch"));
    }
    if !params.len().is_multiple_of(4) {
        return Err(corrupt("parameter block is not a whole number of f32"));
    }
    let values: Vec<f32> = params
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();

    let mut actor: Mlp<f32> = Mlp::zeros(&header.spec.actor_sizes(), header.spec.activation);
    let mut critic: Mlp<f32> = Mlp::zeros(&header.spec.critic_sizes(), header.spec.activation);
    let (na, nc) = (actor.num_params(), critic.num_params());
    if values.len() != na + nc {
        return Err(corrupt("parameter count does not match the network spec"));
    }
    actor.load_flat(&values[..na]);
    critic.load_flat(&values[na..]);
    let policy = PolicyHandle {
        id: header.id,
        encoder: header.encoder,
        spec: header.spec,
        mode: header.mode,
        actor,
        critic,
    };
    if tensor_table(&policy) != header.tensors {
        return Err(corrupt("tensor table does not match the network spec"));
    }
    Ok(policy)
}

pub fn save_checkpoint(policy: &PolicyHandle, path: &Path) -> Result<(), AgentError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| AgentError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, encode_checkpoint(policy)).map_err(|source| AgentError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyHandle, AgentError> {
    let bytes = std::fs::read(path).map_err(|source| AgentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
