//! Binary model checkpoints.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic "SEQC" | format version u16 | metadata length u32 | metadata (UTF-8 JSON)
//! per parameter: name length u16 | name | rank u8 | dims u32 each | f32 data
//! ```
//!
//! Metadata carries the architecture tag, the full config snapshot, the
//! parameter count and the checkpointed validation score. Loading verifies
//! the parameter names, shapes and count against a model freshly built from
//! the stored config, so a checkpoint cannot silently drift from its
//! architecture.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArchConfig, Model, ParamStore};
use crate::rng;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SEQC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Architecture tag, matching the config snapshot.
    pub architecture: String,
    pub config: ArchConfig,
    pub param_count: usize,
    /// Validation macro-F1 of the checkpointed epoch, when one exists.
    pub macro_f1: Option<f64>,
    pub epoch: Option<usize>,
}

pub fn save_checkpoint(
    model: &Model<f32>,
    path: &Path,
    macro_f1: Option<f64>,
    epoch: Option<usize>,
) -> Result<()> {
    let meta = CheckpointMeta {
        architecture: model.config.kind().to_string(),
        config: model.config.clone(),
        param_count: model.params.param_count(),
        macro_f1,
        epoch,
    };
    let meta_json =
        serde_json::to_vec(&meta).map_err(|e| Error::Format(format!("metadata encode: {e}")))?;
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta_json.len() as u32).to_le_bytes())?;
    w.write_all(&meta_json)?;
    for p in model.params.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.value.shape();
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, CheckpointMeta)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta_buf = vec![0u8; meta_len];
    read_exact(&mut r, &mut meta_buf)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_buf)
        .map_err(|e| Error::Format(format!("metadata decode: {e}")))?;

    // Skeleton built from the stored config pins the expected layout.
    let skeleton = Model::<f32>::build(meta.config.clone(), &mut rng::stream(0))?;
    let mut params = ParamStore::new();
    for expected in skeleton.params.iter() {
        let name = read_str(&mut r)?;
        if name != expected.name {
            return Err(Error::Format(format!(
                "checkpoint parameter '{name}' does not match expected '{}'",
                expected.name
            )));
        }
        let mut rank = [0u8; 1];
        read_exact(&mut r, &mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            shape.push(read_u32(&mut r)? as usize);
        }
        if shape != expected.value.shape() {
            return Err(Error::Format(format!(
                "checkpoint parameter '{name}' has shape {shape:?}, expected {:?}",
                expected.value.shape()
            )));
        }
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 4];
        read_exact(&mut r, &mut bytes)?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.push(&name, Tensor::from_vec(&shape, data)?, expected.decay)?;
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("checkpoint has trailing bytes".into()));
    }
    if params.param_count() != meta.param_count {
        return Err(Error::Format(format!(
            "checkpoint stores {} values, metadata claims {}",
            params.param_count(),
            meta.param_count
        )));
    }
    Ok((
        Model {
            config: meta.config.clone(),
            params,
        },
        meta,
    ))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("checkpoint truncated".into()))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u16(r)? as usize;
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::Format("invalid UTF-8 parameter name".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArchConfig, WaveNetConfig};
    use crate::tensor::Tensor;

    fn small_model() -> Model<f32> {
        let cfg = ArchConfig::Wavenet(WaveNetConfig {
            dilations: vec![1, 2],
            filters: 3,
            kernel_size: 3,
            num_classes: 4,
            input_length: 64,
            ..WaveNetConfig::default()
        });
        Model::build(cfg, &mut rng::stream(7)).unwrap()
    }

    #[test]
    fn roundtrip_preserves_forward_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = small_model();
        save_checkpoint(&model, &path, Some(0.83), Some(4)).unwrap();
        let (loaded, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(meta.architecture, "wavenet");
        assert_eq!(meta.macro_f1, Some(0.83));
        assert_eq!(meta.param_count, model.params.param_count());

        let x = Tensor::<f32>::from_fn(&[2, 64, 1], |i| ((i * 37 % 11) as f32) - 5.0);
        let a = model.forward(&x).unwrap();
        let b = loaded.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tcn_roundtrip_covers_weight_norm_and_layer_norm_params() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let cfg = ArchConfig::Tcn(crate::model::TcnConfig {
            dilations: vec![1, 2],
            filters: 3,
            ..crate::model::TcnConfig::default()
        });
        let model = Model::build(cfg, &mut rng::stream(15)).unwrap();
        save_checkpoint(&model, &path, None, None).unwrap();
        let (loaded, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(meta.architecture, "tcn");
        for (a, b) in model.params.iter().zip(loaded.params.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.decay, b.decay);
            assert_eq!(a.value, b.value);
        }
        let x = Tensor::<f32>::from_fn(&[1, 40, 1], |i| (i as f32 * 0.7).sin());
        assert_eq!(model.forward(&x).unwrap(), loaded.forward(&x).unwrap());
    }

    #[test]
    fn corrupted_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&small_model(), &path, None, None).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'Z';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&small_model(), &path, None, None).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }
}
