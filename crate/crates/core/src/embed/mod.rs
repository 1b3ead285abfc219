//! Clip embeddings and cosine similarity.

mod spectral;
pub mod store;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use spectral::{embed_clip, Embedder, EmbedderConfig, MIN_EMBED_SECONDS};
pub use store::{export_embeddings, import_embeddings, import_embeddings_with_dim};

/// Allowed deviation from unit norm for a vector to count as normalised.
pub const NORM_TOLERANCE: f64 = 1e-3;

/// Unit-norm feature vector for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Wraps values that are already unit-norm.
    pub fn from_unit(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("non-finite embedding value".into()));
        }
        let e = Embedding(values);
        let norm = e.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm });
        }
        Ok(e)
    }

    /// Scales arbitrary values to unit length. A zero vector becomes the
    /// uniform unit vector.
    pub fn normalize(values: &[f32]) -> Self {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        Self::normalize_f64(&v)
    }

    pub(crate) fn normalize_f64(values: &[f64]) -> Self {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            Embedding(values.iter().map(|x| (x / norm) as f32).collect())
        } else {
            let u = (1.0 / values.len() as f64).sqrt() as f32;
            Embedding(vec![u; values.len()])
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
    }
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Dot product of two equal-length slices with a fixed summation order.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}
