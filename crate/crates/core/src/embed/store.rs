//! Embedding store file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MREM" | version: u32 | dim: u32 | count: u64
//! count * dim f32 values, vector-major
//! JSON-lines trailer, one ClipRecord per vector, in vector order
//! trailer offset: u64 (byte position where the trailer starts)
//! ```

use std::fs;
use std::path::Path;

use super::Embedding;
use crate::audio::ClipRecord;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MREM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;
const FOOTER_LEN: usize = 8;

/// Serialises records and embeddings into the store byte layout.
pub fn encode(items: &[(ClipRecord, Embedding)]) -> Result<Vec<u8>> {
    let dim = uniform_dim(items)?;
    let mut out = Vec::with_capacity(HEADER_LEN + items.len() * (dim * 4 + 96) + FOOTER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(items.len() as u64).to_le_bytes());
    for (_, e) in items {
        for v in e.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let trailer_offset = out.len() as u64;
    for (rec, _) in items {
        serde_json::to_writer(&mut out, rec).map_err(|e| Error::Invariant(e.to_string()))?;
        out.push(b'\n');
    }
    out.extend_from_slice(&trailer_offset.to_le_bytes());
    Ok(out)
}

fn uniform_dim(items: &[(ClipRecord, Embedding)]) -> Result<usize> {
    let dim = items
        .first()
        .map(|(_, e)| e.dim())
        .ok_or(Error::EmptyInput("embedding list"))?;
    for (_, e) in items {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.dim(),
            });
        }
    }
    Ok(dim)
}

pub(crate) fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub(crate) fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

/// Parses the store byte layout.
pub fn decode(bytes: &[u8]) -> Result<Vec<(ClipRecord, Embedding)>> {
    if bytes.len() < HEADER_LEN + FOOTER_LEN {
        return Err(Error::Truncated(format!(
            "{} bytes is shorter than header and footer",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Corrupt("bad magic, not an embedding store".into()));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let dim = read_u32(bytes, 8) as usize;
    let count = read_u64(bytes, 12);
    if dim == 0 {
        return Err(Error::Corrupt("zero dimension".into()));
    }

    let footer_at = bytes.len() - FOOTER_LEN;
    let trailer_offset = read_u64(bytes, footer_at);
    if trailer_offset < HEADER_LEN as u64 || trailer_offset > footer_at as u64 {
        return Err(Error::Truncated(format!(
            "trailer offset {trailer_offset} outside file of {} bytes",
            bytes.len()
        )));
    }
    let trailer_offset = trailer_offset as usize;
    let vector_bytes = trailer_offset - HEADER_LEN;
    let stride = dim * 4;
    if !vector_bytes.is_multiple_of(stride) {
        return Err(Error::Truncated(format!(
            "vector block of {vector_bytes} bytes is not a multiple of {stride}"
        )));
    }
    let present = (vector_bytes / stride) as u64;
    if present != count {
        return Err(Error::CountMismatch {
            declared: count,
            actual: present,
        });
    }

    let trailer = std::str::from_utf8(&bytes[trailer_offset..footer_at])
        .map_err(|_| Error::Corrupt("trailer is not UTF-8".into()))?;
    let records: Vec<ClipRecord> = trailer
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Corrupt(format!("clip record: {e}"))))
        .collect::<Result<_>>()?;
    if records.len() as u64 != count {
        return Err(Error::CountMismatch {
            declared: count,
            actual: records.len() as u64,
        });
    }

    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let start = HEADER_LEN + i * stride;
        let values = bytes[start..start + stride]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((rec, Embedding::from_unit(values)?));
    }
    Ok(out)
}

/// Writes a store file. All embeddings must share one dimension.
pub fn export_embeddings(items: &[(ClipRecord, Embedding)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(items)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn import_embeddings(path: impl AsRef<Path>) -> Result<Vec<(ClipRecord, Embedding)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Imports a store and checks that it matches the dimension in use.
pub fn import_embeddings_with_dim(
    path: impl AsRef<Path>,
    expected_dim: usize,
) -> Result<Vec<(ClipRecord, Embedding)>> {
    let items = import_embeddings(path)?;
    if let Some((_, e)) = items.first() {
        if e.dim() != expected_dim {
            return Err(Error::DimensionMismatch {
                expected: expected_dim,
                actual: e.dim(),
            });
        }
    }
    Ok(items)
}
