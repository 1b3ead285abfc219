//! Song-level attribution of query audio against an indexed training corpus.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::audio::{segment_into_clips, AudioBuffer, ClipRecord, SongMeta};
use crate::embed::{cosine_similarity, Embedder, Embedding};
use crate::error::{Error, Result};
use crate::index::{Hit, SearchMode, VectorIndex};

/// Song metadata keyed by song id.
pub type MetaTable = BTreeMap<String, SongMeta>;

pub const DEFAULT_K_CLIPS: usize = 50;
pub const DEFAULT_K_SONGS: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.875;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongMatch {
    pub song_id: String,
    pub best_clip: ClipRecord,
    /// Highest clip similarity seen for this song.
    pub score: f32,
    pub meta: SongMeta,
}

/// Hits retrieved for one clip of the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryClipHits {
    pub clip: ClipRecord,
    pub hits: Vec<Hit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionReport {
    pub query_id: String,
    pub clip_hits: Vec<QueryClipHits>,
    pub song_matches: Vec<SongMatch>,
    pub threshold: f64,
    pub flagged: bool,
    pub prompt_similarity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionOptions {
    pub k_clips: usize,
    pub k_songs: usize,
    pub threshold: f64,
    pub mode: SearchMode,
}

impl Default for AttributionOptions {
    fn default() -> Self {
        Self {
            k_clips: DEFAULT_K_CLIPS,
            k_songs: DEFAULT_K_SONGS,
            threshold: DEFAULT_THRESHOLD,
            mode: SearchMode::Ann,
        }
    }
}

/// Collapses clip hits to one match per song, scored by the song's best clip.
///
/// Sorted by score descending, ties by song id. Within a song, equal-scoring
/// clips resolve to the lowest clip index.
pub fn aggregate_clip_hits_to_songs(hits: &[Hit], meta: &MetaTable) -> Result<Vec<SongMatch>> {
    let mut best: HashMap<&str, &Hit> = HashMap::new();
    for hit in hits {
        let id = hit.clip.song_id.as_str();
        if !meta.contains_key(id) {
            return Err(Error::UnknownSong(id.to_string()));
        }
        match best.get(id) {
            Some(cur)
                if cur.score > hit.score
                    || (cur.score == hit.score && cur.clip.clip_index <= hit.clip.clip_index) => {}
            _ => {
                best.insert(id, hit);
            }
        }
    }
    let mut out: Vec<SongMatch> = best
        .into_iter()
        .map(|(id, hit)| SongMatch {
            song_id: id.to_string(),
            best_clip: hit.clip.clone(),
            score: hit.score,
            meta: meta[id].clone(),
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.song_id.cmp(&b.song_id)));
    Ok(out)
}

/// Attribution for query clips that are already embedded.
pub fn attribute_embedded(
    query_id: &str,
    query_clips: &[(ClipRecord, Embedding)],
    idx: &VectorIndex,
    meta: &MetaTable,
    opts: &AttributionOptions,
    prompt_clips: Option<&[Embedding]>,
) -> Result<AttributionReport> {
    if query_clips.is_empty() {
        return Err(Error::EmptyInput("query clips"));
    }
    if opts.k_clips == 0 || opts.k_songs == 0 {
        return Err(Error::InvalidArgument("k_clips and k_songs must be at least 1".into()));
    }
    let mut clip_hits = Vec::with_capacity(query_clips.len());
    for (clip, emb) in query_clips {
        let hits = idx.search_topk(emb, opts.k_clips, opts.mode)?;
        clip_hits.push(QueryClipHits {
            clip: clip.clone(),
            hits,
        });
    }
    let all: Vec<Hit> = clip_hits.iter().flat_map(|c| c.hits.iter().cloned()).collect();
    let mut song_matches = aggregate_clip_hits_to_songs(&all, meta)?;
    song_matches.truncate(opts.k_songs);
    let flagged = song_matches
        .first()
        .is_some_and(|m| m.score as f64 >= opts.threshold);

    let prompt_similarity = match prompt_clips {
        None => None,
        Some(prompt) => {
            let mut best = f64::NEG_INFINITY;
            for (_, q) in query_clips {
                for p in prompt {
                    best = best.max(cosine_similarity(q, p)?);
                }
            }
            best.is_finite().then_some(best)
        }
    };

    Ok(AttributionReport {
        query_id: query_id.to_string(),
        clip_hits,
        song_matches,
        threshold: opts.threshold,
        flagged,
        prompt_similarity,
    })
}

/// Segments and embeds `audio` with the canonical clip rules.
pub fn embed_segments(audio: &AudioBuffer, id: &str, embedder: &Embedder) -> Result<Vec<(ClipRecord, Embedding)>> {
    segment_into_clips(audio, id)?
        .into_iter()
        .map(|(rec, buf)| Ok((rec, embedder.embed(&buf)?)))
        .collect()
}

/// Ranks the training songs most similar to `query`.
///
/// The query is cut into clips, each clip retrieves its `k_clips` nearest
/// stored clips, and the union is collapsed to the top `k_songs` songs. With
/// a prompt, `prompt_similarity` is the best clip-pair similarity between
/// query and prompt.
pub fn attribute(
    query_id: &str,
    query: &AudioBuffer,
    idx: &VectorIndex,
    embedder: &Embedder,
    meta: &MetaTable,
    opts: &AttributionOptions,
    prompt: Option<&AudioBuffer>,
) -> Result<AttributionReport> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let clips = embed_segments(query, query_id, embedder)?;
    let prompt_embs = match prompt {
        Some(p) => Some(
            embed_segments(p, "prompt", embedder)?
                .into_iter()
                .map(|(_, e)| e)
                .collect::<Vec<_>>(),
        ),
        None => None,
    };
    attribute_embedded(query_id, &clips, idx, meta, opts, prompt_embs.as_deref())
}

/// Songs that appear in the top `top_n` matches of more than
/// `threshold_fraction` of the reports, most frequent first.
pub fn influence_census(
    reports: &[AttributionReport],
    top_n: usize,
    threshold_fraction: f64,
) -> Result<Vec<(String, f64)>> {
    if top_n < 1 {
        return Err(Error::InvalidArgument("top_n must be at least 1".into()));
    }
    if reports.is_empty() {
        return Err(Error::EmptyInput("report list"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in reports {
        let songs: HashSet<&str> = r
            .song_matches
            .iter()
            .take(top_n)
            .map(|m| m.song_id.as_str())
            .collect();
        for s in songs {
            *counts.entry(s).or_default() += 1;
        }
    }
    let n = reports.len() as f64;
    let mut out: Vec<(String, f64)> = counts
        .into_iter()
        .map(|(s, c)| (s.to_string(), c as f64 / n))
        .filter(|(_, f)| *f > threshold_fraction)
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Serialize)]
struct BestClipJson {
    clip_index: u32,
    start_sec: f64,
}

#[derive(Serialize)]
struct SongMatchJson<'a> {
    song_id: &'a str,
    title: &'a str,
    artist: &'a str,
    best_clip: BestClipJson,
    score: f32,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    query_id: &'a str,
    song_matches: Vec<SongMatchJson<'a>>,
    threshold: f64,
    flagged: bool,
    prompt_similarity: Option<f64>,
}

impl AttributionReport {
    /// Rank-1 song score, if any song matched.
    pub fn top_score(&self) -> Option<f32> {
        self.song_matches.first().map(|m| m.score)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let view = ReportJson {
            query_id: &self.query_id,
            song_matches: self
                .song_matches
                .iter()
                .map(|m| SongMatchJson {
                    song_id: &m.song_id,
                    title: &m.meta.title,
                    artist: &m.meta.artist,
                    best_clip: BestClipJson {
                        clip_index: m.best_clip.clip_index,
                        start_sec: m.best_clip.start_sec,
                    },
                    score: m.score,
                })
                .collect(),
            threshold: self.threshold,
            flagged: self.flagged,
            prompt_similarity: self.prompt_similarity,
        };
        serde_json::to_value(view).expect("report view is always serialisable")
    }
}
