//! JSON checkpoints: an architecture header plus one flat array per tensor.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{NetShape, PolicyParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    scalar: String,
    #[serde(flatten)]
    shape: NetShape,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorDoc<T> {
    shape: [usize; 2],
    data: Vec<T>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Checkpoint<T> {
    architecture: Header,
    tensors: BTreeMap<String, TensorDoc<T>>,
}

impl<T: Scalar> PolicyParams<T> {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let tensors = self
            .shape()
            .slots()
            .into_iter()
            .map(|s| {
                let doc = TensorDoc {
                    shape: [s.rows, s.cols],
                    data: self.as_slice()[s.range()].to_vec(),
                };
                (s.name.to_string(), doc)
            })
            .collect();
        let ck = Checkpoint {
            architecture: Header {
                scalar: T::NAME.to_string(),
                shape: *self.shape(),
            },
            tensors,
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ck: Checkpoint<T> = serde_json::from_str(text)?;
        if ck.architecture.scalar != T::NAME {
            return Err(Error::config(format!(
                "checkpoint stores {} parameters, expected {}",
                ck.architecture.scalar,
                T::NAME
            )));
        }
        let shape = ck.architecture.shape;
        let mut params = PolicyParams::zeros(shape);
        let slots = shape.slots();
        if ck.tensors.len() != slots.len() {
            return Err(Error::shape("checkpoint tensors", slots.len(), ck.tensors.len()));
        }
        for slot in slots {
            let doc = ck
                .tensors
                .get(slot.name)
                .ok_or_else(|| Error::config(format!("checkpoint lacks tensor {}", slot.name)))?;
            if doc.shape != [slot.rows, slot.cols] || doc.data.len() != slot.len() {
                return Err(Error::shape(slot.name, slot.len(), doc.data.len()));
            }
            params.as_mut_slice()[slot.range()].copy_from_slice(&doc.data);
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the bit patterns of the given index ranges.
    pub fn digest(&self, ranges: &[std::ops::Range<usize>]) -> String {
        let mut h = Sha256::new();
        for r in ranges {
            for x in &self.as_slice()[r.clone()] {
                h.update(x.as_f64().to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
