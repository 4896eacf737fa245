//! Indexed binary container for per-token embeddings.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "COREFEMB"
//! version  u32      1
//! dim      u32
//! count    u32      number of document records
//! record*  { key_len u32, key utf-8, n_tokens u32, n_tokens * dim f32 }
//! ```
//!
//! A jsonlines fallback (`{"doc_key": ..., "vectors": [[...], ...]}` per
//! line) is accepted for debugging.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::provider::TokenEmbeddings;
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const MAGIC: &[u8; 8] = b"COREFEMB";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    doc_key: String,
    vectors: Vec<Vec<f64>>,
}

enum Backing {
    Binary { bytes: Vec<u8>, index: HashMap<String, (usize, usize)> },
    Json(HashMap<String, Matrix>),
}

/// Read-only embedding lookup keyed by document.
pub struct EmbeddingStore {
    dim: usize,
    backing: Backing,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("embedding container truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl EmbeddingStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(bytes)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.starts_with(MAGIC) {
            Self::parse_binary(bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|_| Error::Format("embedding file is neither a container nor UTF-8 jsonlines".into()))?;
            Self::parse_json(&text)
        }
    }

    fn parse_binary(bytes: Vec<u8>) -> Result<Self> {
        let mut r = Reader { bytes: &bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported embedding container version {version}")));
        }
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::Format("embedding container has dimension 0".into()));
        }
        let count = r.u32()? as usize;
        let mut index = HashMap::with_capacity(count);
        for _ in 0..count {
            let key_len = r.u32()? as usize;
            let key = std::str::from_utf8(r.take(key_len)?)
                .map_err(|_| Error::Format("doc_key is not UTF-8".into()))?
                .to_string();
            let n = r.u32()? as usize;
            let offset = r.pos;
            r.take(n * dim * 4)?;
            if index.insert(key.clone(), (offset, n)).is_some() {
                return Err(Error::Format(format!("duplicate embedding record for {key}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after embedding records", bytes.len() - r.pos)));
        }
        Ok(Self {
            dim,
            backing: Backing::Binary { bytes, index },
        })
    }

    fn parse_json(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut docs = HashMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: JsonRecord = serde_json::from_str(line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
            let n = rec.vectors.len();
            let d = rec.vectors.first().map_or(dim.unwrap_or(0), Vec::len);
            let expected = *dim.get_or_insert(d);
            for v in &rec.vectors {
                if v.len() != expected {
                    return Err(Error::dim(format!("embeddings for {}", rec.doc_key), expected, v.len()));
                }
            }
            let flat: Vec<f64> = rec.vectors.into_iter().flatten().collect();
            let m = Matrix::from_shape_vec((n, expected), flat).expect("rectangular");
            docs.insert(rec.doc_key, m);
        }
        let dim = dim.filter(|&d| d > 0).ok_or_else(|| Error::Format("embedding file has no vectors".into()))?;
        Ok(Self {
            dim,
            backing: Backing::Json(docs),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        match &self.backing {
            Backing::Binary { index, .. } => index.len(),
            Backing::Json(docs) => docs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, doc_key: &str) -> bool {
        match &self.backing {
            Backing::Binary { index, .. } => index.contains_key(doc_key),
            Backing::Json(docs) => docs.contains_key(doc_key),
        }
    }

    pub fn get(&self, doc_key: &str) -> Result<TokenEmbeddings> {
        let vectors = match &self.backing {
            Backing::Binary { bytes, index } => {
                let &(offset, n) = index.get(doc_key).ok_or_else(|| Error::MissingDocument(doc_key.to_string()))?;
                let raw = &bytes[offset..offset + n * self.dim * 4];
                let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
                Matrix::from_shape_vec((n, self.dim), values).expect("record size")
            }
            Backing::Json(docs) => docs.get(doc_key).cloned().ok_or_else(|| Error::MissingDocument(doc_key.to_string()))?,
        };
        TokenEmbeddings::new(doc_key, vectors)
    }
}

/// Opens `path` and returns the vectors for `doc_key`.
pub fn load_embeddings(path: impl AsRef<Path>, doc_key: &str) -> Result<TokenEmbeddings> {
    EmbeddingStore::open(path)?.get(doc_key)
}

/// Writes records in the binary layout. All records must share one dimension.
pub fn write_container<W: Write>(mut out: W, records: &[TokenEmbeddings]) -> Result<()> {
    let dim = records.first().map_or(0, TokenEmbeddings::dim);
    if dim == 0 {
        return Err(Error::Argument("cannot write an empty embedding container".into()));
    }
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(dim as u32).to_le_bytes())?;
    out.write_all(&(records.len() as u32).to_le_bytes())?;
    for rec in records {
        if rec.dim() != dim {
            return Err(Error::dim(format!("embeddings for {}", rec.doc_key), dim, rec.dim()));
        }
        out.write_all(&(rec.doc_key.len() as u32).to_le_bytes())?;
        out.write_all(rec.doc_key.as_bytes())?;
        out.write_all(&(rec.len() as u32).to_le_bytes())?;
        for &x in rec.vectors.iter() {
            out.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Writes the jsonlines debugging form.
pub fn write_json<W: Write>(mut out: W, records: &[TokenEmbeddings]) -> Result<()> {
    for rec in records {
        let json = JsonRecord {
            doc_key: rec.doc_key.clone(),
            vectors: rec.vectors.outer_iter().map(|r| r.to_vec()).collect(),
        };
        serde_json::to_writer(&mut out, &json)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
