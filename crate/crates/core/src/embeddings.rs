//! Utterance embedding sets and the EMB1 binary format.
//!
//! EMB1 layout (all integers little-endian):
//!
//! ```text
//! "EMB1"                      4 bytes
//! count N                     u32
//! dim D                       u32
//! N records:
//!     id length L             u16
//!     id                      L bytes, UTF-8
//!     vector                  D x f32 (IEEE-754 binary32)
//! ```
//!
//! Vectors are held as `f64` in memory; values read from a file widen exactly,
//! so rewriting a set that was read from disk reproduces the original bytes.

use std::collections::{BTreeSet, HashMap};
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic {0:?}, expected \"EMB1\"")]
    BadMagic([u8; 4]),
    #[error("file truncated while reading {0}")]
    TruncatedFile(&'static str),
    #[error("vector for {utt_id:?} has dimension {found}, expected {expected}")]
    DimMismatch { utt_id: String, expected: usize, found: usize },
    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),
    #[error("non-finite component in vector for {0:?}")]
    NonFinite(String),
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("frame matrix has no frames")]
    EmptyMatrix,
    #[error("id {0:?} longer than 65535 bytes")]
    IdTooLong(String),
    #[error("invalid UTF-8 in utterance id")]
    BadId,
    #[error("embedding sets have different utterance ids: {0:?}")]
    KeySetMismatch(Vec<String>),
    #[error("no embedding sets given")]
    NoSets,
    #[error(transparent)]
    Io(io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    model_tag: String,
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(model_tag: impl Into<String>, dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        Ok(Self { model_tag: model_tag.into(), dim, ids: Vec::new(), vectors: Vec::new(), index: HashMap::new() })
    }

    pub fn from_entries(
        model_tag: impl Into<String>,
        dim: usize,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, EmbeddingError> {
        let mut set = Self::new(model_tag, dim)?;
        for (id, v) in entries {
            set.push(id, v)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, utt_id: String, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimMismatch { utt_id, expected: self.dim, found: vector.len() });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite(utt_id));
        }
        if self.index.contains_key(&utt_id) {
            return Err(EmbeddingError::DuplicateId(utt_id));
        }
        self.index.insert(utt_id.clone(), self.ids.len());
        self.ids.push(utt_id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn set_model_tag(&mut self, tag: impl Into<String>) {
        self.model_tag = tag.into();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, utt_id: &str) -> Option<&[f64]> {
        self.index.get(utt_id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn contains(&self, utt_id: &str) -> bool {
        self.index.contains_key(utt_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids.iter().map(String::as_str).zip(self.vectors.iter().map(Vec::as_slice))
    }

    /// Subset in the order of `ids`; unknown ids are skipped.
    pub fn select<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> EmbeddingSet {
        let mut out = EmbeddingSet::new(self.model_tag.clone(), self.dim).expect("dim already validated");
        for id in ids {
            if let Some(v) = self.get(id) {
                // ids are unique in self, so a repeat here is the caller's duplicate
                let _ = out.push(id.to_string(), v.to_vec());
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), EmbeddingError> {
        let io = EmbeddingError::Io;
        w.write_all(EMB1_MAGIC).map_err(io)?;
        w.write_all(&(self.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        for (id, v) in self.iter() {
            let len: u16 = id.len().try_into().map_err(|_| EmbeddingError::IdTooLong(id.to_string()))?;
            w.write_all(&len.to_le_bytes()).map_err(io)?;
            w.write_all(id.as_bytes()).map_err(io)?;
            let mut buf = Vec::with_capacity(4 * self.dim);
            for &x in v {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
            w.write_all(&buf).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, model_tag: impl Into<String>) -> Result<Self, EmbeddingError> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != EMB1_MAGIC {
            return Err(EmbeddingError::BadMagic(magic));
        }
        let count = read_u32(&mut r, "count")? as usize;
        let dim = read_u32(&mut r, "dim")? as usize;
        let mut set = EmbeddingSet::new(model_tag, dim)?;
        let mut vec_buf = vec![0u8; 4 * dim];
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len, "id length")?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut id, "id")?;
            let id = String::from_utf8(id).map_err(|_| EmbeddingError::BadId)?;
            read_exact(&mut r, &mut vec_buf, "vector")?;
            let v = vec_buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            set.push(id, v)?;
        }
        Ok(set)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<(), EmbeddingError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => EmbeddingError::TruncatedFile(what),
        _ => EmbeddingError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &'static str) -> Result<u32, EmbeddingError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Read an `.emb1` file. The model tag is the file stem.
pub fn read_embfile(path: impl AsRef<Path>) -> Result<EmbeddingSet, EmbeddingError> {
    let path = path.as_ref();
    let tag = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let f = std::fs::File::open(path).map_err(EmbeddingError::Io)?;
    EmbeddingSet::read_from(io::BufReader::new(f), tag)
}

pub fn write_embfile(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<(), EmbeddingError> {
    let f = std::fs::File::create(path).map_err(EmbeddingError::Io)?;
    let mut w = io::BufWriter::new(f);
    set.write_to(&mut w)?;
    w.flush().map_err(EmbeddingError::Io)
}

/// Frame-level representation of one utterance, `T x D`, row-major.
#[derive(Debug, Clone)]
pub struct FrameMatrix {
    pub utt_id: String,
    pub frames: Vec<Vec<f64>>,
}

/// Column means of the frame matrix.
pub fn mean_pool(m: &FrameMatrix) -> Result<Vec<f64>, EmbeddingError> {
    let first = m.frames.first().ok_or(EmbeddingError::EmptyMatrix)?;
    let dim = first.len();
    let mut sum = vec![0.0; dim];
    for row in &m.frames {
        if row.len() != dim {
            return Err(EmbeddingError::DimMismatch { utt_id: m.utt_id.clone(), expected: dim, found: row.len() });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite(m.utt_id.clone()));
        }
        for (s, x) in sum.iter_mut().zip(row) {
            *s += x;
        }
    }
    let t = m.frames.len() as f64;
    Ok(sum.into_iter().map(|s| s / t).collect())
}

/// Concatenate sets that share one utterance key set. Output order follows
/// the first set; vectors are joined in the order of `sets`.
pub fn concat_sets(sets: &[EmbeddingSet]) -> Result<EmbeddingSet, EmbeddingError> {
    let first = sets.first().ok_or(EmbeddingError::NoSets)?;
    let keys: BTreeSet<&str> = first.ids().iter().map(String::as_str).collect();
    let mut mismatch = BTreeSet::new();
    for s in &sets[1..] {
        let other: BTreeSet<&str> = s.ids().iter().map(String::as_str).collect();
        mismatch.extend(keys.symmetric_difference(&other).map(|k| k.to_string()));
    }
    if !mismatch.is_empty() {
        return Err(EmbeddingError::KeySetMismatch(mismatch.into_iter().collect()));
    }
    let dim = sets.iter().map(EmbeddingSet::dim).sum();
    let tag = sets.iter().map(EmbeddingSet::model_tag).collect::<Vec<_>>().join("+");
    let mut out = EmbeddingSet::new(tag, dim)?;
    for id in first.ids() {
        let mut v = Vec::with_capacity(dim);
        for s in sets {
            v.extend_from_slice(s.get(id).expect("key sets checked"));
        }
        out.push(id.clone(), v)?;
    }
    Ok(out)
}
