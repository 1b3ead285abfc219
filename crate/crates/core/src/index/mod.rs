//! Clip-level vector index with exact and HNSW top-k cosine search.

mod hnsw;
mod persist;

use std::cmp::Ordering;
use std::collections::HashMap;
#[cfg(test)]
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::audio::ClipRecord;
use crate::embed::{dot, Embedding, NORM_TOLERANCE};
use crate::error::{Error, Result};
use hnsw::{Graph, Vectors, Visited};

pub use persist::{INDEX_MAGIC, INDEX_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Graph degree; layer 0 allows twice this many links.
    #[serde(rename = "M")]
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 0,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidArgument("M must be at least 2".into()));
        }
        if self.ef_construction == 0 || self.ef_search == 0 {
            return Err(Error::InvalidArgument("ef values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exact,
    Ann,
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SearchMode::Exact),
            "ann" => Ok(SearchMode::Ann),
            other => Err(Error::InvalidArgument(format!("unknown search mode {other:?}"))),
        }
    }
}

/// A retrieved clip and its cosine similarity to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub clip: ClipRecord,
    pub score: f32,
}

/// Entry id and score, before the clip record is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub entry: usize,
    pub score: f32,
}

/// Append-only store of unit-norm clip embeddings.
///
/// Entry ids are dense (`0..len`) in insertion order and survive save/load.
/// Searches take `&self` and may run concurrently; inserts need `&mut self`.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    cfg: IndexConfig,
    records: Vec<ClipRecord>,
    vectors: Vec<f32>,
    graph: Graph,
    keys: HashMap<(String, u32), usize>,
}

impl VectorIndex {
    pub fn new(dim: usize, cfg: IndexConfig) -> Result<Self> {
        cfg.validate()?;
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            cfg,
            records: Vec::new(),
            vectors: Vec::new(),
            graph: Graph::new(cfg.m, cfg.seed),
            keys: HashMap::new(),
        })
    }

    /// Builds an index over `items`, inserting in the given order.
    pub fn build(items: Vec<(ClipRecord, Embedding)>, cfg: IndexConfig) -> Result<Self> {
        let dim = items
            .first()
            .map(|(_, e)| e.dim())
            .ok_or(Error::EmptyInput("index items"))?;
        let mut idx = Self::new(dim, cfg)?;
        idx.records.reserve(items.len());
        idx.vectors.reserve(items.len() * dim);
        let mut visited = Visited::new(items.len());
        for (rec, emb) in items {
            idx.insert_with(rec, emb, &mut visited)?;
        }
        Ok(idx)
    }

    pub fn insert(&mut self, clip: ClipRecord, embedding: Embedding) -> Result<usize> {
        let mut visited = Visited::new(self.len() + 1);
        self.insert_with(clip, embedding, &mut visited)
    }

    fn insert_with(&mut self, clip: ClipRecord, embedding: Embedding, visited: &mut Visited) -> Result<usize> {
        if embedding.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: embedding.dim(),
            });
        }
        let norm = embedding.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm });
        }
        if self.records.len() >= u32::MAX as usize {
            return Err(Error::InvalidArgument("index is full".into()));
        }
        let key = (clip.song_id.clone(), clip.clip_index);
        if self.keys.contains_key(&key) {
            return Err(Error::DuplicateClip {
                song_id: key.0,
                clip_index: key.1,
            });
        }
        let id = self.records.len();
        self.keys.insert(key, id);
        self.records.push(clip);
        self.vectors.extend_from_slice(embedding.values());
        let vecs = Vectors {
            data: &self.vectors,
            dim: self.dim,
        };
        self.graph
            .insert(id as u32, vecs, self.cfg.ef_construction, visited);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &IndexConfig {
        &self.cfg
    }

    /// Changes the query beam width used by ANN searches.
    pub fn set_ef_search(&mut self, ef: usize) {
        self.cfg.ef_search = ef.max(1);
    }

    pub fn record(&self, entry: usize) -> &ClipRecord {
        &self.records[entry]
    }

    pub fn records(&self) -> &[ClipRecord] {
        &self.records
    }

    pub fn vector(&self, entry: usize) -> &[f32] {
        &self.vectors[entry * self.dim..(entry + 1) * self.dim]
    }

    pub fn embedding(&self, entry: usize) -> Embedding {
        Embedding::normalize(self.vector(entry))
    }

    /// Entry id of a stored clip, if present.
    pub fn find(&self, song_id: &str, clip_index: u32) -> Option<usize> {
        self.keys.get(&(song_id.to_string(), clip_index)).copied()
    }

    fn vecs(&self) -> Vectors<'_> {
        Vectors {
            data: &self.vectors,
            dim: self.dim,
        }
    }

    /// Score descending, then clip identity ascending.
    fn rank(&self, a: &Neighbor, b: &Neighbor) -> Ordering {
        b.score
            .total_cmp(&a.score)
            .then_with(|| self.records[a.entry].key().cmp(&self.records[b.entry].key()))
    }

    fn check_query(&self, q: &[f32], k: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(())
    }

    /// Similarity of `q` to every stored entry, in entry order.
    pub fn all_scores(&self, q: &[f32]) -> Result<Vec<f32>> {
        self.check_query(q, 1)?;
        Ok(self
            .vectors
            .chunks_exact(self.dim)
            .map(|v| dot(q, v))
            .collect())
    }

    /// Top-`k` entries by brute force. If `k` exceeds the index size every
    /// entry is returned.
    pub fn exact_neighbors(&self, q: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        let mut all: Vec<Neighbor> = self
            .all_scores(q)?
            .into_iter()
            .enumerate()
            .map(|(entry, score)| Neighbor { entry, score })
            .collect();
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, |a, b| self.rank(a, b));
            all.truncate(k);
        }
        all.sort_unstable_by(|a, b| self.rank(a, b));
        Ok(all)
    }

    /// Top-`k` entries from the HNSW graph with beam width `max(ef, k)`.
    pub fn ann_neighbors(&self, q: &[f32], k: usize, ef: usize) -> Result<Vec<Neighbor>> {
        self.check_query(q, k)?;
        if k >= self.len() {
            return self.exact_neighbors(q, k);
        }
        let mut visited = Visited::new(self.len());
        let mut out: Vec<Neighbor> = self
            .graph
            .search(q, k, ef.max(k), self.vecs(), &mut visited)
            .into_iter()
            .map(|s| Neighbor {
                entry: s.id as usize,
                score: s.sim,
            })
            .collect();
        out.sort_unstable_by(|a, b| self.rank(a, b));
        Ok(out)
    }

    pub fn neighbors(&self, q: &[f32], k: usize, mode: SearchMode) -> Result<Vec<Neighbor>> {
        match mode {
            SearchMode::Exact => self.exact_neighbors(q, k),
            SearchMode::Ann => self.ann_neighbors(q, k, self.cfg.ef_search),
        }
    }

    /// Top-`k` clips most similar to `q`, best first; ties broken by
    /// (song_id, clip_index).
    pub fn search_topk(&self, q: &Embedding, k: usize, mode: SearchMode) -> Result<Vec<Hit>> {
        Ok(self
            .neighbors(q.values(), k, mode)?
            .into_iter()
            .map(|n| Hit {
                clip: self.records[n.entry].clone(),
                score: n.score,
            })
            .collect())
    }
}
