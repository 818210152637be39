//! Checkpoints: a JSON manifest plus a blob of little-endian `f64`s.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::{init_params, HyperParams, ModelParams};
use crate::numerics::{ParamSet, Real};
use crate::{Error, Result};

const FORMAT: &str = "deepmr-checkpoint";
const DTYPE: &str = "f64-le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub dtype: String,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub blob_bytes: usize,
    pub hyper: HyperParams,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `manifest_path` and the blob next to it, named `blob_name`.
pub fn save_checkpoint<T: Real>(
    params: &ModelParams<T>,
    hp: &HyperParams,
    manifest_path: impl AsRef<Path>,
    blob_name: &str,
) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for t in params.tensors() {
        tensors.push(TensorEntry {
            name: t.name,
            shape: [t.shape.0, t.shape.1],
            offset: blob.len(),
        });
        for &x in t.data {
            blob.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        dtype: DTYPE.into(),
        blob: blob_name.into(),
        blob_bytes: blob.len(),
        hyper: hp.clone(),
        tensors,
    };
    let blob_path = blob_path(manifest_path, blob_name);
    fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, json + "\n").map_err(|e| Error::io(manifest_path, e))
}

fn blob_path(manifest_path: &Path, blob_name: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(blob_name)
}

pub fn read_manifest(manifest_path: impl AsRef<Path>) -> Result<Manifest> {
    let path = manifest_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT || manifest.dtype != DTYPE {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format {:?}/{:?}",
            manifest.format, manifest.dtype
        )));
    }
    Ok(manifest)
}

/// Loads parameters and the hyperparameters they were trained with.
pub fn load_checkpoint<T: Real>(manifest_path: impl AsRef<Path>) -> Result<(ModelParams<T>, HyperParams)> {
    let manifest_path = manifest_path.as_ref();
    let manifest = read_manifest(manifest_path)?;
    let blob_path = blob_path(manifest_path, &manifest.blob);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if blob.len() != manifest.blob_bytes {
        return Err(Error::Checkpoint(format!(
            "blob {} has {} bytes, manifest says {}",
            blob_path.display(),
            blob.len(),
            manifest.blob_bytes
        )));
    }

    let mut params = init_params::<T>(&manifest.hyper, 0)?;
    let layout: Vec<(String, (usize, usize))> =
        params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    if layout.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, hyperparameters imply {}",
            manifest.tensors.len(),
            layout.len()
        )));
    }
    let mut expected_offset = 0;
    for ((name, shape), entry) in layout.iter().zip(&manifest.tensors) {
        if *name != entry.name || [shape.0, shape.1] != entry.shape || entry.offset != expected_offset {
            return Err(Error::Checkpoint(format!(
                "tensor entry {:?} {:?}@{} does not match expected {name:?} {shape:?}@{expected_offset}",
                entry.name, entry.shape, entry.offset
            )));
        }
        expected_offset += shape.0 * shape.1 * 8;
    }
    if expected_offset != blob.len() {
        return Err(Error::Checkpoint(format!(
            "tensors need {expected_offset} bytes, blob has {}",
            blob.len()
        )));
    }

    let mut words = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for tensor in params.tensors_mut() {
        for x in tensor.iter_mut() {
            *x = T::lit(words.next().expect("length checked"));
        }
    }
    Ok((params, manifest.hyper))
}
