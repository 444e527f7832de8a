//! Model checkpoints: a directory holding `manifest.json` and one CSIT file
//! per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::csit::{load_csi_tensor, save_csi_tensor};
use crate::error::{Error, Result};
use crate::models::{Autoencoder, Localizer, ModelSpec};
use crate::tensor::{DType, Element, Tensor};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Autoencoder,
    Localizer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub role: Role,
    pub dtype: String,
    pub epoch: usize,
    pub val_loss: f64,
    pub config_hash: String,
    pub tensors: Vec<TensorEntry>,
}

/// Hex SHA-256 of a value's JSON serialization.
pub fn config_hash<S: Serialize>(config: &S) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

fn dtype_name(d: DType) -> &'static str {
    match d {
        DType::F32 => "f32",
        DType::F64 => "f64",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T = f32> {
    pub spec: ModelSpec,
    pub role: Role,
    pub epoch: usize,
    pub val_loss: f64,
    pub config_hash: String,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Element> Checkpoint<T> {
    pub fn of_autoencoder(ae: &Autoencoder<T>, epoch: usize, val_loss: f64, config_hash: String) -> Self {
        Checkpoint {
            spec: ae.spec().clone(),
            role: Role::Autoencoder,
            epoch,
            val_loss,
            config_hash,
            tensors: ae.named_tensors(),
        }
    }

    pub fn of_localizer(loc: &Localizer<T>, epoch: usize, val_loss: f64, config_hash: String) -> Self {
        Checkpoint {
            spec: loc.spec().clone(),
            role: Role::Localizer,
            epoch,
            val_loss,
            config_hash,
            tensors: loc.named_tensors(),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            spec: self.spec.clone(),
            role: self.role,
            dtype: dtype_name(T::DTYPE).to_string(),
            epoch: self.epoch,
            val_loss: self.val_loss,
            config_hash: self.config_hash.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry { name: name.clone(), file: format!("{name}.csit"), shape: t.shape().to_vec() })
                .collect(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        for ((_, t), entry) in self.tensors.iter().zip(&manifest.tensors) {
            save_csi_tensor(dir.join(&entry.file), t)?;
        }
        let path = dir.join(MANIFEST);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Integrity(format!(
                "{}: unsupported checkpoint version {}",
                path.display(),
                manifest.format_version
            )));
        }
        if manifest.dtype != dtype_name(T::DTYPE) {
            return Err(Error::Integrity(format!(
                "{}: checkpoint holds {} tensors, expected {}",
                path.display(),
                manifest.dtype,
                dtype_name(T::DTYPE)
            )));
        }
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in &manifest.tensors {
            let file = dir.join(&entry.file);
            let t = load_csi_tensor(&file)
                .and_then(|a| a.into_typed::<T>())
                .map_err(|e| Error::Integrity(format!("{}: {e}", file.display())))?;
            if t.shape() != entry.shape.as_slice() {
                return Err(Error::Integrity(format!(
                    "{}: manifest shape {:?} but file holds {:?}",
                    file.display(),
                    entry.shape,
                    t.shape()
                )));
            }
            tensors.push((entry.name.clone(), t));
        }
        Ok(Checkpoint {
            spec: manifest.spec,
            role: manifest.role,
            epoch: manifest.epoch,
            val_loss: manifest.val_loss,
            config_hash: manifest.config_hash,
            tensors,
        })
    }

    pub fn to_autoencoder(&self) -> Result<Autoencoder<T>> {
        if self.role != Role::Autoencoder {
            return Err(Error::Integrity("checkpoint does not hold an autoencoder".into()));
        }
        let mut ae = Autoencoder::build(&self.spec, 0)?;
        ae.load_named(&self.tensors)?;
        Ok(ae)
    }

    pub fn to_localizer(&self) -> Result<Localizer<T>> {
        if self.role != Role::Localizer {
            return Err(Error::Integrity("checkpoint does not hold a localizer".into()));
        }
        let mut loc = Localizer::build(&self.spec, 0)?;
        loc.load_named(&self.tensors)?;
        Ok(loc)
    }
}
