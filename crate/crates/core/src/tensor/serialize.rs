use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// On-disk container of named parameter matrices.
///
/// `fingerprint` describes the architecture (layer sizes); loading into a
/// differently shaped model is rejected before any value is copied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub format_version: u32,
    pub fingerprint: String,
    pub params: Vec<NamedMatrix>,
}

impl WeightFile {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        WeightFile {
            format_version: WEIGHT_FORMAT_VERSION,
            fingerprint: fingerprint.into(),
            params: Vec::new(),
        }
    }

    /// Appends every matrix of `store`, prefixing names with `namespace/`.
    pub fn push_store(&mut self, namespace: &str, store: &ParamStore) {
        for (name, m) in store.iter() {
            self.params.push(NamedMatrix {
                name: format!("{namespace}/{name}"),
                rows: m.rows(),
                cols: m.cols(),
                data: m.data().to_vec(),
            });
        }
    }

    /// Overwrites every matrix of `store` from the entries under `namespace/`.
    pub fn fill_store(&self, namespace: &str, store: &mut ParamStore) -> Result<()> {
        let prefix = format!("{namespace}/");
        let ids: Vec<_> = store.ids().collect();
        let mut seen = 0;
        for entry in self.params.iter().filter(|p| p.name.starts_with(&prefix)) {
            let local = &entry.name[prefix.len()..];
            let id = store
                .id(local)
                .ok_or_else(|| Error::Load(format!("unexpected parameter {}", entry.name)))?;
            let target = store.get_mut(id);
            if target.shape() != (entry.rows, entry.cols) {
                return Err(Error::Load(format!(
                    "{} has shape {}x{}, model expects {:?}",
                    entry.name,
                    entry.rows,
                    entry.cols,
                    target.shape()
                )));
            }
            *target = Matrix::from_vec(entry.rows, entry.cols, entry.data.clone())
                .map_err(|e| Error::Load(format!("{}: {e}", entry.name)))?;
            seen += 1;
        }
        if seen != ids.len() {
            return Err(Error::Load(format!(
                "namespace {namespace} holds {seen} matrices, model has {}",
                ids.len()
            )));
        }
        Ok(())
    }

    pub fn check_header(&self, fingerprint: &str) -> Result<()> {
        if self.format_version != WEIGHT_FORMAT_VERSION {
            return Err(Error::Load(format!(
                "format version {} unsupported (expected {WEIGHT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.fingerprint != fingerprint {
            return Err(Error::Load(format!(
                "architecture mismatch: file has `{}`, model is `{fingerprint}`",
                self.fingerprint
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
