//! TMKD-EMB v1 prompt embedding tables.
//!
//! Layout (little-endian): `b"TMKD"`, u32 version = 1, u32 count, u32 dim,
//! then `count` records of `u16 key_len, key (UTF-8), dim × f32`.

use std::path::Path;

use indexmap::IndexMap;

use super::{EmbeddingError, Result};
use crate::viewgen::ViewKind;

pub const MAGIC: &[u8; 4] = b"TMKD";
pub const VERSION: u32 = 1;

/// Prompt templates, one per view, each with a single `{class}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplateSet {
    pub rgb: String,
    pub edge: String,
    pub hf: String,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        Self {
            rgb: "a photo of a {class}".into(),
            edge: "an edge enhanced image of a {class}".into(),
            hf: "a high-frequency enhanced image of a {class}".into(),
        }
    }
}

impl PromptTemplateSet {
    pub fn new(rgb: &str, edge: &str, hf: &str) -> Result<Self> {
        for t in [rgb, edge, hf] {
            if t.matches("{class}").count() != 1 {
                return Err(EmbeddingError::Template(t.to_string()));
            }
        }
        Ok(Self {
            rgb: rgb.into(),
            edge: edge.into(),
            hf: hf.into(),
        })
    }

    pub fn template(&self, view: ViewKind) -> &str {
        match view {
            ViewKind::Rgb => &self.rgb,
            ViewKind::Edge => &self.edge,
            ViewKind::Hf => &self.hf,
        }
    }

    pub fn prompt(&self, view: ViewKind, class: &str) -> String {
        self.template(view).replacen("{class}", class, 1)
    }
}

pub fn embedding_key(class: &str, view: ViewKind) -> String {
    format!("{class}/{view}")
}

/// Named embeddings sharing one dimension, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: IndexMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(EmbeddingError::Parse {
                offset: 12,
                record: None,
                detail: "dimension must be positive".into(),
            });
        }
        Ok(Self {
            dim,
            entries: IndexMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let key = key.into();
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                key,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.entries.contains_key(&key) {
            return Err(EmbeddingError::DuplicateKey {
                record: self.entries.len(),
                key,
            });
        }
        if key.len() > u16::MAX as usize {
            return Err(EmbeddingError::Parse {
                offset: 0,
                record: Some(self.entries.len()),
                detail: format!("key of {} bytes exceeds the u16 length field", key.len()),
            });
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    /// The (rgb, edge, hf) embeddings of `class`, in that order.
    pub fn lookup_class(&self, class: &str) -> Result<[&[f32]; 3]> {
        let get = |view| {
            let key = embedding_key(class, view);
            self.get(&key).ok_or(EmbeddingError::MissingKey(key))
        };
        Ok([get(ViewKind::Rgb)?, get(ViewKind::Edge)?, get(ViewKind::Hf)?])
    }

    /// Every `class/view` key required by `classes` that the table lacks.
    pub fn missing_keys<'a>(&self, classes: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        classes
            .into_iter()
            .flat_map(|c| ViewKind::ALL.map(|v| embedding_key(c, v)))
            .filter(|k| !self.entries.contains_key(k))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (key, vector) in &self.entries {
            out.extend_from_slice(&(key.len() as u16).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            for v in vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses and fully validates a table. Trailing bytes are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let parse = |offset: usize, record: Option<usize>, detail: String| EmbeddingError::Parse {
            offset,
            record,
            detail,
        };
        if bytes.get(..4) != Some(MAGIC.as_slice()) {
            return Err(parse(0, None, "bad magic".into()));
        }
        let word = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| parse(bytes.len(), None, "truncated header".into()))
        };
        let version = word(4)?;
        if version != VERSION {
            return Err(parse(4, None, format!("unsupported version {version}")));
        }
        let count = word(8)? as usize;
        let dim = word(12)? as usize;
        let mut table = Self::new(dim)?;
        let mut pos = 16;
        for record in 0..count {
            let truncated = |pos: usize| parse(pos, Some(record), "truncated record".into());
            let key_len = bytes
                .get(pos..pos + 2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]) as usize)
                .ok_or_else(|| truncated(pos))?;
            pos += 2;
            let key_bytes = bytes.get(pos..pos + key_len).ok_or_else(|| truncated(pos))?;
            let key = std::str::from_utf8(key_bytes)
                .map_err(|e| parse(pos, Some(record), format!("key is not UTF-8: {e}")))?
                .to_string();
            pos += key_len;
            let payload_len = dim.checked_mul(4).ok_or_else(|| truncated(pos))?;
            let payload = bytes.get(pos..pos + payload_len).ok_or_else(|| truncated(pos))?;
            let vector = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += payload_len;
            match table.insert(key, vector) {
                Err(EmbeddingError::DuplicateKey { key, .. }) => {
                    return Err(EmbeddingError::DuplicateKey { record, key })
                }
                other => other?,
            }
        }
        if pos != bytes.len() {
            return Err(parse(pos, None, format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    EmbeddingTable::load(path)
}

pub fn write_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    table.save(path)
}
