//! Checkpoint files: magic `UANET1`, a little-endian `u32` header length, a
//! JSON header, then every tensor as little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{NetConfig, NetworkParams, TrainConfig};
use crate::error::{Error, Result};
use crate::tfr::StftConfig;

const MAGIC: &[u8; 6] = b"UANET1";

/// Context stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub seed: u64,
    /// Front end the network was trained on.
    pub stft: Option<StftConfig>,
    pub sample_rate: Option<u32>,
    pub floor_db: Option<f64>,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    net: NetConfig,
    #[serde(flatten)]
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    /// SHA-256 over the per-tensor SHA-256 digests, in declared order.
    pub fn digest(&self) -> String {
        tensor_digest(&self.params)
    }
}

pub(crate) fn tensor_digest(params: &NetworkParams) -> String {
    let mut outer = Sha256::new();
    for (_, _, data) in params.named_tensors() {
        let mut inner = Sha256::new();
        for v in data {
            inner.update(v.to_le_bytes());
        }
        outer.update(inner.finalize());
    }
    to_hex(&outer.finalize())
}

impl NetworkParams {
    pub fn digest(&self) -> String {
        tensor_digest(self)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &NetworkParams, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    let tensors = params.named_tensors();
    let header = Header {
        net: params.config,
        meta: meta.clone(),
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let payload: usize = tensors.iter().map(|(_, _, d)| d.len() * 8).sum();
    let mut buf = Vec::with_capacity(MAGIC.len() + 4 + json.len() + payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, _, data) in &tensors {
        for v in *data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    if data.len() < MAGIC.len() + 4 || &data[..MAGIC.len()] != MAGIC {
        return Err(Error::format(path, "missing UANET1 header"));
    }
    let hlen = u32::from_le_bytes(data[6..10].try_into().unwrap()) as usize;
    let body_start = 10 + hlen;
    if data.len() < body_start {
        return Err(Error::format(path, "truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&data[10..body_start]).map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    let mut params = NetworkParams::init(&header.net, 0).map_err(|e| Error::format(path, e.to_string()))?;
    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    if expected.len() != header.tensors.len() {
        return Err(Error::format(
            path,
            format!("{} tensors listed, architecture needs {}", header.tensors.len(), expected.len()),
        ));
    }
    for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
        if name != &entry.name || shape != &entry.shape {
            return Err(Error::format(
                path,
                format!("tensor {} {:?} does not match expected {name} {shape:?}", entry.name, entry.shape),
            ));
        }
    }
    let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let body = &data[body_start..];
    if body.len() != total * 8 {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes, found {}", total * 8, body.len()),
        ));
    }
    let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for t in params.named_tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().unwrap();
        }
    }
    if !params.is_finite() {
        return Err(Error::format(path, "non-finite weights"));
    }
    Ok(Checkpoint {
        params,
        meta: header.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embednet::Architecture;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_reproduces_embeddings_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.uanet");
        for arch in [Architecture::Rnn, Architecture::Lstm, Architecture::Bilstm] {
            let mut params = NetworkParams::init(&NetConfig::new(arch, 7, 4, 3), 5).unwrap();
            params.input_norm.mean.fill(1.5);
            params.input_norm.std.fill(3.0);
            let meta = CheckpointMeta {
                epoch: 3,
                seed: 9,
                stft: Some(StftConfig::default()),
                sample_rate: Some(8000),
                floor_db: Some(-40.0),
                train: Some(TrainConfig::desk()),
            };
            save_checkpoint(&p, &params, &meta).unwrap();
            let back = load_checkpoint(&p).unwrap();
            assert_eq!(back.params, params);
            assert_eq!(back.meta, meta);
            assert_eq!(back.digest(), params.digest());
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let frames = Array2::from_shape_simple_fn((9, 7), || rng.random_range(-30.0..10.0));
            let a = params.embed(frames.view()).unwrap();
            let b = back.params.embed(frames.view()).unwrap();
            assert!(a.rows.iter().zip(b.rows.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn digest_tracks_weights() {
        let a = NetworkParams::init(&NetConfig::new(Architecture::Lstm, 5, 3, 2), 1).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.dense_b[0] += 1e-9;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.uanet");
        fs::write(&p, b"NOPE").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format { .. })));

        let params = NetworkParams::init(&NetConfig::new(Architecture::Rnn, 5, 3, 2), 1).unwrap();
        save_checkpoint(&p, &params, &CheckpointMeta::default()).unwrap();
        let mut raw = fs::read(&p).unwrap();
        raw.truncate(raw.len() - 8);
        fs::write(&p, &raw).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format { .. })));
    }
}
