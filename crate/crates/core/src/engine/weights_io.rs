//! Binary weight container.
//!
//! Layout (all integers little-endian):
//! `NPWEIGHT` | u32 version | u32 header length | header JSON (the model
//! configuration) | tensors in canonical order as little-endian floats of
//! the configured precision | SHA-256 of every preceding byte.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::params::Params;
use super::Model;
use crate::error::{Error, Result};
use crate::scalar::{Precision, Scalar};

pub const MAGIC: &[u8; 8] = b"NPWEIGHT";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl<T: Scalar> Model<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.config).expect("config serializes");
        let mut out = Vec::with_capacity(16 + header.len() + self.params.num_parameters() * T::PRECISION.byte_width() + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in self.params.named_tensors() {
            for &v in t.iter() {
                v.write_le(&mut out);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Hex SHA-256 identifying these exact weights (the file trailer).
    pub fn hash(&self) -> String {
        let bytes = self.to_bytes();
        hex::encode(&bytes[bytes.len() - DIGEST_LEN..])
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        Ok(hex::encode(&bytes[bytes.len() - DIGEST_LEN..]))
    }

    /// Parses a container, converting stored values to `T` when the file
    /// precision differs.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::WeightFormat(m.to_string());
        if bytes.len() < 16 + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(bad("missing NPWEIGHT magic"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let found = hex::encode(Sha256::digest(body));
        let expected = hex::encode(digest);
        if found != expected {
            return Err(Error::Integrity {
                path: None,
                expected,
                found,
            });
        }
        let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let hlen = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
        let header = body.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let config: ModelConfig = serde_json::from_slice(header)?;
        config.validate()?;
        let mut data = &body[16 + hlen..];
        let params = match config.precision {
            Precision::F32 => read_params::<f32>(&config, &mut data)?.cast::<T>(),
            Precision::F64 => read_params::<f64>(&config, &mut data)?.cast::<T>(),
        };
        if !data.is_empty() {
            return Err(bad("trailing bytes after tensors"));
        }
        Model::new(config.with_precision(T::PRECISION), params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Integrity { expected, found, .. } => Error::Integrity {
                path: Some(path.to_path_buf()),
                expected,
                found,
            },
            other => other,
        })
    }
}

fn read_params<U: Scalar>(config: &ModelConfig, data: &mut &[u8]) -> Result<Params<U>> {
    let w = config.precision.byte_width();
    let mut params = Params::<U>::zeros(config);
    for t in params.tensors_mut() {
        let need = t.len() * w;
        if data.len() < need {
            return Err(Error::WeightFormat("truncated tensor data".into()));
        }
        for (i, v) in t.iter_mut().enumerate() {
            *v = U::read_le(&data[i * w..(i + 1) * w]);
        }
        *data = &data[need..];
    }
    Ok(params)
}

/// Hash of the stored file without parsing it.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    if bytes.len() < DIGEST_LEN || &bytes[..8.min(bytes.len())] != MAGIC {
        return Err(Error::WeightFormat(format!("{} is not a weight file", path.display())));
    }
    Ok(hex::encode(&bytes[bytes.len() - DIGEST_LEN..]))
}
