//! Parameter checkpoints: a JSON manifest plus a raw little-endian block.
//!
//! The manifest lives at the given path and the values next to it with the
//! extension replaced by `.bin`.

use super::params::{ParamSet, Precision};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
    #[error("checkpoint data block is truncated or corrupt: {0}")]
    Corrupt(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Caller-defined model description, checked by the caller on load.
    pub config: serde_json::Value,
    pub tensors: Vec<ManifestEntry>,
}

pub fn data_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes every parameter in [`ParamSet`] order using its storage precision.
pub fn save(path: &Path, params: &ParamSet, config: serde_json::Value) -> Result<(), CheckpointError> {
    let dtype = params.precision();
    let mut bytes = Vec::new();
    let mut tensors = Vec::with_capacity(params.len());
    for id in params.ids() {
        tensors.push(ManifestEntry {
            name: params.name(id).to_string(),
            shape: params.shape(id).to_vec(),
            dtype: dtype.dtype().to_string(),
            offset: bytes.len(),
        });
        for &v in params.values(id) {
            match dtype {
                Precision::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
                Precision::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    let manifest = Manifest { config, tensors };
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    std::fs::write(data_path(path), bytes)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CheckpointError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Loads values into `params`, whose names and shapes define the expected
/// layout. Returns the stored config.
pub fn load(path: &Path, params: &mut ParamSet) -> Result<serde_json::Value, CheckpointError> {
    let manifest = read_manifest(path)?;
    let bytes = std::fs::read(data_path(path))?;
    if manifest.tensors.len() != params.len() {
        return Err(CheckpointError::Mismatch(format!(
            "{} tensors stored, model has {}",
            manifest.tensors.len(),
            params.len()
        )));
    }
    for (id, e) in params.ids().collect::<Vec<_>>().into_iter().zip(&manifest.tensors) {
        if e.name != params.name(id) || e.shape != params.shape(id) {
            return Err(CheckpointError::Mismatch(format!(
                "stored {} {:?}, expected {} {:?}",
                e.name,
                e.shape,
                params.name(id),
                params.shape(id)
            )));
        }
        let count = params.values(id).len();
        let width = match e.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(CheckpointError::Corrupt(format!("dtype {other}"))),
        };
        let raw = bytes
            .get(e.offset..e.offset + count * width)
            .ok_or_else(|| CheckpointError::Corrupt(format!("{} out of range", e.name)))?;
        let vals: Vec<f64> = raw
            .chunks_exact(width)
            .map(|c| match width {
                4 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
                _ => f64::from_le_bytes(c.try_into().unwrap()),
            })
            .collect();
        params
            .set_values(id, &vals)
            .map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
    }
    Ok(manifest.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(p: Precision) -> ParamSet {
        let mut ps = ParamSet::new(p);
        ps.add("w", &[2, 2], vec![0.1, -0.2, 0.3, 1e-7]).unwrap();
        ps.add("b", &[2], vec![5.0, -6.5]).unwrap();
        ps
    }

    #[test]
    fn round_trip_is_exact_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        for p in [Precision::F32, Precision::F64] {
            let a = dir.path().join("a.json");
            let b = dir.path().join("b.json");
            let src = sample(p);
            save(&a, &src, serde_json::json!({"d": 2})).unwrap();
            let mut dst = sample(p);
            dst.set_values(dst.find("w").unwrap(), &[0.0; 4]).unwrap();
            let cfg = load(&a, &mut dst).unwrap();
            assert_eq!(cfg["d"], 2);
            assert_eq!(dst, src);
            save(&b, &dst, serde_json::json!({"d": 2})).unwrap();
            assert_eq!(std::fs::read(data_path(&a)).unwrap(), std::fs::read(data_path(&b)).unwrap());
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        save(&a, &sample(Precision::F32), serde_json::Value::Null).unwrap();
        let mut other = ParamSet::new(Precision::F32);
        other.add("w", &[3, 2], vec![0.0; 6]).unwrap();
        other.add("b", &[2], vec![0.0; 2]).unwrap();
        assert!(matches!(load(&a, &mut other), Err(CheckpointError::Mismatch(_))));
    }
}
