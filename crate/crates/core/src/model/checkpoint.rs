//! Versioned checkpoint container.
//!
//! Layout: the 8-byte magic `BLANCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header, then every tensor's
//! values as little-endian `f64` in row-major order. The header echoes the
//! configuration and vocabulary and lists each tensor's name, dtype, shape
//! and byte offset into the data section.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{EncoderConfig, TrainConfig};
use super::input::Vocab;
use super::params::ModelParams;
use super::QAModel;
use crate::error::{BlancError, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"BLANCKPT";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: QAModel,
    pub vocab: Vocab,
    pub train: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    encoder: EncoderConfig,
    train: Option<TrainConfig>,
    vocab: Vocab,
    tensors: Vec<TensorEntry>,
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut offset = 0u64;
    let mut data = Vec::new();
    let mut tensors = Vec::new();
    for p in &ckpt.model.params.params {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            dtype: "f64".into(),
            shape: p.value.shape().to_vec(),
            offset,
        });
        for v in p.value.data() {
            data.extend_from_slice(&v.to_le_bytes());
        }
        offset += 8 * p.value.len() as u64;
    }
    let header = serde_json::to_vec(&Header {
        format_version: CHECKPOINT_VERSION,
        encoder: ckpt.model.config.clone(),
        train: ckpt.train.clone(),
        vocab: ckpt.vocab.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(20 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    Ok(out)
}

/// Writes via a temporary file in the same directory, then renames.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = checkpoint_bytes(ckpt)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("checkpoint")
    ));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: String| BlancError::Checkpoint(m);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let data_start = 20usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[20..data_start]).map_err(|e| bad(format!("header: {e}")))?;
    if header.format_version != version {
        return Err(bad("header version disagrees with preamble".into()));
    }
    let data = &bytes[data_start..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in header.tensors {
        if t.dtype != "f64" {
            return Err(bad(format!("tensor {} has unsupported dtype {}", t.name, t.dtype)));
        }
        let n: usize = t.shape.iter().product();
        let start = t.offset as usize;
        let end = start + 8 * n;
        if end > data.len() {
            return Err(bad(format!("tensor {} extends past end of file", t.name)));
        }
        let values = data[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((t.name, Tensor::new(t.shape, values)?));
    }
    if header.vocab.len() != header.encoder.vocab_size {
        return Err(bad(format!(
            "vocabulary has {} entries but the encoder expects {}",
            header.vocab.len(),
            header.encoder.vocab_size
        )));
    }
    let params = ModelParams::from_tensors(&header.encoder, tensors)?;
    Ok(Checkpoint {
        model: QAModel { config: header.encoder, params },
        vocab: header.vocab,
        train: header.train,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt() -> Checkpoint {
        let vocab = Vocab::from(vec!["[UNK]".to_string(), "[SEP]".into(), "x".into()]);
        let config = EncoderConfig { vocab_size: 3, hidden: 4, layers: 1, heads: 2, ffn: 6, max_len: 8, dropout: 0.1, seed: 9, ..EncoderConfig::default() };
        Checkpoint { model: QAModel::new(config).unwrap(), vocab, train: Some(TrainConfig::default()) }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let c = ckpt();
        save_checkpoint(&path, &c).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(std::fs::read(&path).unwrap(), checkpoint_bytes(&back).unwrap());
        assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = checkpoint_bytes(&ckpt()).unwrap();
        assert!(parse_checkpoint(&bytes[..bytes.len() - 8]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(parse_checkpoint(&wrong).is_err());
        let mut version = bytes;
        version[8] = 7;
        assert!(matches!(parse_checkpoint(&version), Err(BlancError::Checkpoint(_))));
    }
}
