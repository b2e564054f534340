use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::value::Tensor;
use crate::error::{Error, Result};

/// Named parameter (or gradient) table, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamTable {
    entries: BTreeMap<String, Tensor>,
}

impl ParamTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// Same names with zero-filled tensors of matching shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn check_aligned(&self, other: &ParamTable) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::invalid(format!(
                "parameter tables differ in size: {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((ka, va), (kb, vb)) in self.entries.iter().zip(&other.entries) {
            if ka != kb || va.shape() != vb.shape() {
                return Err(Error::invalid(format!(
                    "parameter tables misaligned at {ka} {:?} vs {kb} {:?}",
                    va.shape(),
                    vb.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Tensor::is_finite)
    }

    /// Largest absolute elementwise difference over aligned tables.
    pub fn max_abs_diff(&self, other: &ParamTable) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|((_, a), (_, b))| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Hash over names, shapes and exact bit patterns.
    pub fn bit_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (k, v) in &self.entries {
            k.hash(&mut h);
            v.shape().hash(&mut h);
            for x in v.data() {
                x.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Records every entry on `tape` as a gradient-receiving leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), tape.param(v.clone())))
                .collect(),
        }
    }
}

/// Parameters recorded on a tape, looked up by name.
pub struct Bound<'t> {
    vars: HashMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))
    }

    /// Gradient table with one entry per bound parameter.
    pub fn gradients(&self, grads: &Gradients) -> ParamTable {
        let mut table = ParamTable::new();
        for (k, v) in &self.vars {
            table.insert(k.clone(), grads.wrt(*v));
        }
        table
    }
}

pub const TABLE_FORMAT: &str = "hydrogat-params";
pub const TABLE_VERSION: u32 = 1;

/// One row of the shape table in a parameter manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in values (not bytes).
    pub offset: usize,
    pub count: usize,
}

/// JSON manifest describing a raw little-endian `f64` parameter blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableManifest {
    pub format: String,
    pub version: u32,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

impl ParamTable {
    /// Serializes into a manifest plus blob bytes.
    pub fn to_blob(&self, blob_name: &str) -> (TableManifest, Vec<u8>) {
        let mut bytes = Vec::with_capacity(self.num_values() * 8);
        let mut tensors = Vec::with_capacity(self.entries.len());
        let mut offset = 0;
        for (name, t) in &self.entries {
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
                count: t.numel(),
            });
            offset += t.numel();
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = TableManifest {
            format: TABLE_FORMAT.to_string(),
            version: TABLE_VERSION,
            blob: blob_name.to_string(),
            tensors,
        };
        (manifest, bytes)
    }

    pub fn from_blob(manifest: &TableManifest, bytes: &[u8]) -> Result<Self> {
        if manifest.format != TABLE_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", manifest.format)));
        }
        if manifest.version != TABLE_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {TABLE_VERSION})",
                manifest.version
            )));
        }
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::Checkpoint("blob length is not a multiple of 8".into()));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut table = ParamTable::new();
        let mut expected_offset = 0;
        for e in &manifest.tensors {
            if e.shape.iter().product::<usize>() != e.count {
                return Err(Error::Checkpoint(format!(
                    "{}: shape {:?} does not hold {} values",
                    e.name, e.shape, e.count
                )));
            }
            if e.offset != expected_offset || e.offset + e.count > values.len() {
                return Err(Error::Checkpoint(format!("{}: bad offset {}", e.name, e.offset)));
            }
            expected_offset += e.count;
            let t = Tensor::new(e.shape.clone(), values[e.offset..e.offset + e.count].to_vec())?;
            table.insert(e.name.clone(), t);
        }
        if expected_offset != values.len() {
            return Err(Error::Checkpoint(format!(
                "blob holds {} values, manifest describes {}",
                values.len(),
                expected_offset
            )));
        }
        Ok(table)
    }

    /// Writes `<dir>/<stem>.json` and `<dir>/<stem>.bin`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let blob_name = format!("{stem}.bin");
        let (manifest, bytes) = self.to_blob(&blob_name);
        let bin = dir.join(&blob_name);
        std::fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let json = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let manifest: TableManifest =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", json.display())))?;
        let bin = dir.join(&manifest.blob);
        let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        Self::from_blob(&manifest, &bytes)
    }
}
