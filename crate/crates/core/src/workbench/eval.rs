//! Whole-model evaluation over a set of generated queries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, AttributionOptions, AttributionReport, MetaTable};
use crate::audio::corpus::{read_jsonl, resolve};
use crate::audio::{ingest_audio, AudioBuffer};
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::index::{SearchMode, VectorIndex};

pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.955, 0.935, 0.915, 0.895, 0.875];
/// Song ranks covered by the census columns.
pub const CENSUS_KS: [usize; 3] = [1, 5, 10];

/// One generated clip, optionally with the prompt that conditioned it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalQuery {
    pub query_id: String,
    pub audio: AudioBuffer,
    pub prompt: Option<AudioBuffer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryManifestEntry {
    pub query_id: String,
    pub path: String,
    #[serde(default)]
    pub prompt_path: Option<String>,
}

/// Loads a JSON-lines query manifest; relative paths resolve against the
/// manifest's directory.
pub fn read_query_manifest(path: impl AsRef<Path>, sample_rate: u32) -> Result<Vec<EvalQuery>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let entries: Vec<QueryManifestEntry> = read_jsonl(path)?;
    entries
        .into_iter()
        .map(|e| {
            let prompt = match &e.prompt_path {
                Some(p) => Some(ingest_audio(resolve(base, p), sample_rate)?),
                None => None,
            };
            Ok(EvalQuery {
                audio: ingest_audio(resolve(base, &e.path), sample_rate)?,
                query_id: e.query_id,
                prompt,
            })
        })
        .collect()
}

/// Mean, median, population standard deviation and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Option<Stats> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let mut s = xs.to_vec();
        s.sort_unstable_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        Some(Stats {
            n,
            mean,
            median,
            sd: var.sqrt(),
            max: s[n - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensusCell {
    /// Song matches ranked within k that scored at or above the threshold.
    pub count: usize,
    /// n_queries × k.
    pub total: usize,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub threshold: f64,
    /// One cell per k in [`CENSUS_KS`].
    pub cells: Vec<CensusCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvalSummary {
    pub n_queries: usize,
    pub k_clips: usize,
    pub ks: Vec<usize>,
    /// Query-to-prompt similarity, over queries that have a prompt.
    pub prompt_similarity: Option<Stats>,
    /// Similarity of each query's rank-1 song.
    pub top1_similarity: Stats,
    pub census: Vec<CensusRow>,
}

/// Table statistics over finished attribution reports.
pub fn summarize(reports: &[AttributionReport], thresholds: &[f64], k_clips: usize) -> Result<ModelEvalSummary> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("query set"));
    }
    if thresholds.is_empty() || thresholds.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("thresholds must be finite and non-empty".into()));
    }
    if !thresholds.windows(2).all(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("thresholds must be sorted in descending order".into()));
    }
    let n = reports.len();
    let prompts: Vec<f64> = reports.iter().filter_map(|r| r.prompt_similarity).collect();
    let top1: Vec<f64> = reports.iter().filter_map(|r| r.top_score().map(f64::from)).collect();
    let top1_similarity = Stats::of(&top1).ok_or(Error::EmptyInput("song matches"))?;
    let census = thresholds
        .iter()
        .map(|&t| CensusRow {
            threshold: t,
            cells: CENSUS_KS
                .iter()
                .map(|&k| {
                    let count = reports
                        .iter()
                        .map(|r| {
                            r.song_matches
                                .iter()
                                .take(k)
                                .filter(|m| m.score as f64 >= t)
                                .count()
                        })
                        .sum();
                    let total = n * k;
                    CensusCell {
                        count,
                        total,
                        pct: 100.0 * count as f64 / total as f64,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(ModelEvalSummary {
        n_queries: n,
        k_clips,
        ks: CENSUS_KS.to_vec(),
        prompt_similarity: Stats::of(&prompts),
        top1_similarity,
        census,
    })
}

/// Attributes every query and summarises the results.
#[allow(clippy::too_many_arguments)]
pub fn model_eval(
    queries: &[EvalQuery],
    idx: &VectorIndex,
    embedder: &Embedder,
    meta: &MetaTable,
    thresholds: &[f64],
    k_clips: usize,
    mode: SearchMode,
) -> Result<ModelEvalSummary> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("query set"));
    }
    let opts = AttributionOptions {
        k_clips,
        k_songs: *CENSUS_KS.last().unwrap(),
        threshold: *thresholds.last().ok_or(Error::EmptyInput("thresholds"))?,
        mode,
    };
    let reports: Vec<AttributionReport> = queries
        .iter()
        .map(|q| attribute(&q.query_id, &q.audio, idx, embedder, meta, &opts, q.prompt.as_ref()))
        .collect::<Result<_>>()?;
    summarize(&reports, thresholds, k_clips)
}
