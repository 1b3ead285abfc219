//! Index file.
//!
//! ```text
//! "MRIX" | version: u32
//! M: u32 | ef_construction: u32 | ef_search: u32 | seed: u64
//! dim: u32 | count: u64
//! store length: u64 | embedding store bytes ("MREM" layout)
//! entry point: u32 (u32::MAX when empty)
//! per node: layer count u32, then per layer: degree u32, neighbour ids u32...
//! CRC-32 of every preceding byte: u32
//! ```
//!
//! Integers are little-endian.

use std::fs;
use std::path::Path;

use super::hnsw::Graph;
use super::{IndexConfig, VectorIndex};
use crate::embed::store;
use crate::embed::Embedding;
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"MRIX";
pub const INDEX_VERSION: u32 = 1;
const NO_ENTRY: u32 = u32::MAX;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt(format!("unexpected end of index at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl VectorIndex {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.cfg.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.cfg.ef_construction as u32).to_le_bytes());
        out.extend_from_slice(&(self.cfg.ef_search as u32).to_le_bytes());
        out.extend_from_slice(&self.cfg.seed.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());

        let items: Vec<_> = (0..self.len())
            .map(|i| {
                let e = Embedding::from_unit(self.vector(i).to_vec())?;
                Ok((self.records[i].clone(), e))
            })
            .collect::<Result<_>>()?;
        let block = if items.is_empty() {
            Vec::new()
        } else {
            store::encode(&items)?
        };
        out.extend_from_slice(&(block.len() as u64).to_le_bytes());
        out.extend_from_slice(&block);

        out.extend_from_slice(&self.graph.entry.unwrap_or(NO_ENTRY).to_le_bytes());
        for layers in &self.graph.links {
            out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
            for links in layers {
                out.extend_from_slice(&(links.len() as u32).to_le_bytes());
                for id in links {
                    out.extend_from_slice(&id.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 4 + 4 {
            return Err(Error::Corrupt("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Corrupt("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(4)? != INDEX_MAGIC {
            return Err(Error::Corrupt("bad magic, not an index file".into()));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::VersionMismatch {
                expected: INDEX_VERSION,
                found: version,
            });
        }
        let cfg = IndexConfig {
            m: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
            seed: r.u64()?,
        };
        cfg.validate()?;
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let block_len = r.u64()? as usize;
        let block = r.take(block_len)?;
        let items = if block.is_empty() {
            Vec::new()
        } else {
            store::decode(block)?
        };
        if items.len() != count {
            return Err(Error::CountMismatch {
                declared: count as u64,
                actual: items.len() as u64,
            });
        }

        let mut idx = VectorIndex::new(dim, cfg)?;
        idx.records.reserve(count);
        idx.vectors.reserve(count * dim);
        for (rec, e) in items {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.dim(),
                });
            }
            let key = (rec.song_id.clone(), rec.clip_index);
            if idx.keys.insert(key, idx.records.len()).is_some() {
                return Err(Error::Corrupt(format!(
                    "duplicate clip ({}, {})",
                    rec.song_id, rec.clip_index
                )));
            }
            idx.records.push(rec);
            idx.vectors.extend_from_slice(e.values());
        }

        let entry = r.u32()?;
        let mut graph = Graph::new(cfg.m, cfg.seed);
        graph.entry = (entry != NO_ENTRY).then_some(entry);
        graph.links.reserve(count);
        for _ in 0..count {
            let n_layers = r.u32()? as usize;
            if n_layers == 0 || n_layers > 64 {
                return Err(Error::Corrupt(format!("node with {n_layers} layers")));
            }
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let degree = r.u32()? as usize;
                let ids: Vec<u32> = (0..degree).map(|_| r.u32()).collect::<Result<_>>()?;
                if ids.iter().any(|&id| id as usize >= count) {
                    return Err(Error::Corrupt("neighbour id out of range".into()));
                }
                layers.push(ids);
            }
            graph.links.push(layers);
        }
        if r.pos != body.len() {
            return Err(Error::Corrupt("trailing bytes after graph".into()));
        }
        match graph.entry {
            Some(e) if e as usize >= count => {
                return Err(Error::Corrupt("entry point out of range".into()))
            }
            None if count > 0 => return Err(Error::Corrupt("missing entry point".into())),
            _ => {}
        }
        idx.graph = graph;
        Ok(idx)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads an index and checks that its dimension matches `expected_dim`.
    pub fn load_with_dim(path: impl AsRef<Path>, expected_dim: usize) -> Result<Self> {
        let idx = Self::load(path)?;
        if idx.dim() != expected_dim {
            return Err(Error::DimensionMismatch {
                expected: expected_dim,
                actual: idx.dim(),
            });
        }
        Ok(idx)
    }
}
