//! Binary checkpoints: `FHCK` magic, `u32` arch id, `u64` parameter count
//! (all little-endian), then the parameters as little-endian `f64` in
//! [`ParamVector`] order. A JSON metadata file sits next to it.

use std::path::{Path, PathBuf};

use fedhome_nn::ParamVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Architecture, Model};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FHCK";
const HEADER_LEN: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub arch: Architecture,
    pub arch_id: u32,
    pub param_count: usize,
    /// Hex SHA-256 of the binary file.
    pub sha256: String,
    pub label: String,
    pub round: Option<usize>,
    pub segments: Vec<(String, usize)>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode(arch: Architecture, params: &ParamVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&arch.id().to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    out.extend_from_slice(&params.to_le_bytes());
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes the checkpoint and its metadata; returns the metadata.
pub fn write_checkpoint(
    path: &Path,
    model: &Model,
    params: &ParamVector,
    label: &str,
    round: Option<usize>,
) -> Result<CheckpointMeta> {
    if params.len() != model.param_count() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!(
                "{} parameters for {} ({})",
                params.len(),
                model.arch(),
                model.param_count()
            ),
        });
    }
    let bytes = encode(model.arch(), params);
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let meta = CheckpointMeta {
        arch: model.arch(),
        arch_id: model.arch().id(),
        param_count: params.len(),
        sha256: sha256_hex(&bytes),
        label: label.to_string(),
        round,
        segments: params
            .segments()
            .iter()
            .map(|s| (s.name.clone(), s.len))
            .collect(),
    };
    let mpath = meta_path(path);
    std::fs::write(&mpath, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&mpath, e))?;
    Ok(meta)
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<(Model, ParamVector)> {
    let fail = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC {
        return Err(fail("not a checkpoint (bad magic)".into()));
    }
    let id = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let arch = Architecture::from_id(id).ok_or_else(|| fail(format!("unknown architecture id {id}")))?;
    let model = Model::new(arch);
    if count != model.param_count() {
        return Err(fail(format!(
            "header says {count} parameters but {arch} has {}",
            model.param_count()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * count {
        return Err(fail(format!(
            "expected {} parameter bytes, found {}",
            8 * count,
            body.len()
        )));
    }
    let params = ParamVector::from_le_bytes(model.layout(), body)?;
    Ok((model, params))
}

pub fn read_checkpoint(path: &Path) -> Result<(Model, ParamVector)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

/// SHA-256 of a checkpoint file as written.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("global.bin");
        let model = Model::new(Architecture::FlCnn);
        let params = model.init(9);
        let meta = write_checkpoint(&path, &model, &params, "global", Some(3)).unwrap();
        assert_eq!(meta.param_count, 33_698);
        let (m2, p2) = read_checkpoint(&path).unwrap();
        assert_eq!(m2.arch(), Architecture::FlCnn);
        assert_eq!(p2.to_le_bytes(), params.to_le_bytes());
        assert_eq!(file_hash(&path).unwrap(), meta.sha256);
        let text = std::fs::read_to_string(meta_path(&path)).unwrap();
        let back: CheckpointMeta = serde_json::from_str(&text).unwrap();
        assert_eq!(back, meta);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let model = Model::new(Architecture::Gcae);
        let bytes = encode(Architecture::Gcae, &model.zero_params());
        assert_eq!(bytes.len(), 16 + 8 * 52_149);
        let p = Path::new("x.bin");
        assert!(decode(p, &bytes[..bytes.len() - 8]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(p, &bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode(p, &bad).is_err());
        assert!(decode(p, &bytes).is_ok());
    }
}
