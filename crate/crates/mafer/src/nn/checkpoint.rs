//! Checkpoint file format.
//!
//! Layout: magic `MAFK` (4 bytes), format version u32 LE, header length
//! u32 LE, UTF-8 JSON header listing tensors as
//! `{name, shape, dtype: "f32", byte_offset}`, then raw little-endian f32
//! payloads in header order. Offsets are relative to the payload start.
//!
//! Optimizer moments ride along as `optim.adam.m.*` / `optim.adam.v.*`
//! tensors plus `optim.adam.t`; the model input side is recorded as the
//! one-element tensor `meta.input_side` so a checkpoint is self-describing.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{CnnModel, ModelConfig};
use super::optim::{AdamConfig, AdamState};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MAFK";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    byte_offset: usize,
}

fn collect_tensors(
    model: &CnnModel<f32>,
    optim: Option<&AdamState<f32>>,
) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut out: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    for (name, _, t) in model.named_parameters() {
        out.push((name, t.shape.clone(), t.data.clone()));
    }
    out.push((
        "meta.input_side".into(),
        vec![1],
        vec![model.config.input_side as f32],
    ));
    if let Some(state) = optim {
        for (idx, (name, _, t)) in model.named_parameters().into_iter().enumerate() {
            out.push((format!("optim.adam.m.{name}"), t.shape.clone(), state.m[idx].clone()));
            out.push((format!("optim.adam.v.{name}"), t.shape.clone(), state.v[idx].clone()));
        }
        out.push(("optim.adam.t".into(), vec![1], vec![state.t as f32]));
    }
    out
}

pub fn save_checkpoint(
    path: &Path,
    model: &CnnModel<f32>,
    optim: Option<&AdamState<f32>>,
) -> Result<()> {
    let tensors = collect_tensors(model, optim);
    let mut header = Vec::with_capacity(tensors.len());
    let mut offset = 0usize;
    for (name, shape, data) in &tensors {
        header.push(HeaderEntry {
            name: name.clone(),
            shape: shape.clone(),
            dtype: "f32".into(),
            byte_offset: offset,
        });
        offset += data.len() * 4;
    }
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    let mut buf = Vec::with_capacity(12 + header_json.len() + offset);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for (_, _, data) in &tensors {
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Raw tensor map read back from disk.
pub struct RawCheckpoint {
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl RawCheckpoint {
    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<RawCheckpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != MAGIC {
        return Err(Error::NotACheckpoint);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::CheckpointTruncated("header cut short".into()));
    }
    let header: Vec<HeaderEntry> = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| Error::CheckpointTruncated(format!("bad header JSON: {e}")))?;
    let payload = &bytes[12 + header_len..];

    let mut tensors = Vec::with_capacity(header.len());
    for entry in header {
        if entry.dtype != "f32" {
            return Err(Error::CheckpointTruncated(format!(
                "tensor `{}` has unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let end = entry.byte_offset + numel * 4;
        if end > payload.len() {
            return Err(Error::CheckpointTruncated(format!(
                "tensor `{}` extends past end of file",
                entry.name
            )));
        }
        let data: Vec<f32> = payload[entry.byte_offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((entry.name, entry.shape, data));
    }
    Ok(RawCheckpoint { tensors })
}

/// Reconstruct a model (and optimizer moments, when present) from a
/// checkpoint. The architecture is inferred from the stored tensor shapes.
pub fn load_checkpoint(path: &Path) -> Result<(CnnModel<f32>, Option<AdamState<f32>>)> {
    let raw = read_checkpoint(path)?;

    let mut channels = Vec::new();
    let mut in_channels = None;
    for i in 0.. {
        match raw.get(&format!("blocks.{i}.conv.weight")) {
            Some((shape, _)) => {
                if shape.len() != 4 {
                    return Err(Error::CheckpointTruncated(format!(
                        "blocks.{i}.conv.weight has rank {} (expected 4)",
                        shape.len()
                    )));
                }
                if i == 0 {
                    in_channels = Some(shape[1]);
                }
                channels.push(shape[0]);
            }
            None => break,
        }
    }
    let (embed_shape, _) = raw
        .get("embedding.weight")
        .ok_or_else(|| Error::CheckpointTruncated("missing embedding.weight".into()))?;
    let (cls_shape, _) = raw
        .get("classifier.weight")
        .ok_or_else(|| Error::CheckpointTruncated("missing classifier.weight".into()))?;
    let input_side = raw
        .get("meta.input_side")
        .map(|(_, d)| d[0] as usize)
        .ok_or_else(|| Error::CheckpointTruncated("missing meta.input_side".into()))?;

    let config = ModelConfig {
        in_channels: in_channels
            .ok_or_else(|| Error::CheckpointTruncated("no conv blocks found".into()))?,
        channels,
        embed_dim: embed_shape[0],
        num_classes: cls_shape[0],
        input_side,
    };
    let mut model = CnnModel::<f32>::zeros(config)?;
    load_params_into(&raw, &mut model)?;

    let optim = if raw.get("optim.adam.t").is_some() {
        let mut state = AdamState::new(&model, AdamConfig::default());
        state.t = raw.get("optim.adam.t").unwrap().1[0] as u64;
        for (idx, (name, _, t)) in model.named_parameters().into_iter().enumerate() {
            for (kind, slot) in [("m", &mut state.m[idx]), ("v", &mut state.v[idx])] {
                let key = format!("optim.adam.{kind}.{name}");
                let (shape, data) = raw.get(&key).ok_or_else(|| {
                    Error::CheckpointTruncated(format!("missing optimizer tensor `{key}`"))
                })?;
                if shape != t.shape.as_slice() {
                    return Err(Error::CheckpointShape {
                        name: key,
                        found: shape.to_vec(),
                        expected: t.shape.clone(),
                    });
                }
                *slot = data.to_vec();
            }
        }
        Some(state)
    } else {
        None
    };
    Ok((model, optim))
}

/// Load parameters into an existing model, validating every shape.
pub fn load_checkpoint_into(path: &Path, model: &mut CnnModel<f32>) -> Result<()> {
    let raw = read_checkpoint(path)?;
    load_params_into(&raw, model)
}

fn load_params_into(raw: &RawCheckpoint, model: &mut CnnModel<f32>) -> Result<()> {
    for (name, _, param) in model.parameters_mut() {
        let (shape, data) = raw.get(&name).ok_or_else(|| {
            Error::CheckpointTruncated(format!("missing tensor `{name}`"))
        })?;
        if shape != param.shape.as_slice() {
            return Err(Error::CheckpointShape {
                name,
                found: shape.to_vec(),
                expected: param.shape.clone(),
            });
        }
        *param = Tensor::new(shape.to_vec(), data.to_vec())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn small_model(embed_dim: usize) -> CnnModel<f32> {
        let cfg = ModelConfig {
            in_channels: 1,
            channels: vec![4, 8],
            embed_dim,
            num_classes: 3,
            input_side: 16,
        };
        let mut rng = Rng::from_seed(11);
        CnnModel::init(cfg, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.mafk");
        let p2 = dir.path().join("b.mafk");
        let model = small_model(16);
        let state = AdamState::new(&model, AdamConfig::default());
        save_checkpoint(&p1, &model, Some(&state)).unwrap();
        let (loaded, loaded_state) = load_checkpoint(&p1).unwrap();
        save_checkpoint(&p2, &loaded, loaded_state.as_ref()).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupt_magic_is_not_a_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mafk");
        let model = small_model(16);
        save_checkpoint(&p, &model, None).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::NotACheckpoint)));
    }

    #[test]
    fn truncated_file_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mafk");
        let model = small_model(16);
        save_checkpoint(&p, &model, None).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(
            read_checkpoint(&p),
            Err(Error::CheckpointTruncated(_))
        ));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mafk");
        let model = small_model(16);
        save_checkpoint(&p, &model, None).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[4] = 99;
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            read_checkpoint(&p),
            Err(Error::CheckpointVersion { found: 99, .. })
        ));
    }

    #[test]
    fn embed_dim_mismatch_names_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mafk");
        save_checkpoint(&p, &small_model(64), None).unwrap();
        let mut target = small_model(32);
        match load_checkpoint_into(&p, &mut target) {
            Err(Error::CheckpointShape { name, .. }) => {
                assert!(name.starts_with("embedding."), "got {name}");
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }
}
