//! ABX listening-trial manifests and result tabulation.
//!
//! A trial plays prompt X followed by two clips from different similarity
//! bins. The manifest lists them in presentation order (`first`, `second`);
//! `order` records whether the higher-bin clip came first (`AB`) or second
//! (`BA`). Responses name the presented clip the listener picked.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CalibrationProfile;
use crate::audio::corpus::{read_jsonl, write_jsonl};
use crate::error::{Error, Result};
use crate::index::VectorIndex;

/// Re-draws allowed when a prompt lacks a candidate in some bin.
pub const MAX_RETRIES: usize = 20;
const BINS: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub song_id: String,
    pub clip_index: u32,
    pub start_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbxClip {
    pub song_id: String,
    pub clip_index: u32,
    pub start_sec: f64,
    /// Similarity to the prompt.
    pub score: f32,
    /// 1-based bin number.
    pub bin: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    AB,
    BA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbxTrial {
    pub trial_id: String,
    pub prompt: ClipRef,
    pub first: AbxClip,
    pub second: AbxClip,
    /// 1-based (higher bin, lower bin), first < second.
    pub bin_pair: [u8; 2],
    pub order: Order,
}

impl AbxTrial {
    /// The clip from the higher-similarity bin.
    pub fn clip_a(&self) -> &AbxClip {
        match self.order {
            Order::AB => &self.first,
            Order::BA => &self.second,
        }
    }

    /// The clip from the lower-similarity bin.
    pub fn clip_b(&self) -> &AbxClip {
        match self.order {
            Order::AB => &self.second,
            Order::BA => &self.first,
        }
    }

    fn check(&self) -> Result<()> {
        let [i, j] = self.bin_pair;
        if !(1 <= i && i < j && j <= BINS) || self.clip_a().bin != i || self.clip_b().bin != j {
            return Err(Error::Malformed(format!("trial {}: inconsistent bins", self.trial_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    First,
    Second,
}

impl std::str::FromStr for Choice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "first" | "a" => Ok(Choice::First),
            "second" | "b" => Ok(Choice::Second),
            other => Err(Error::Malformed(format!("choice {other:?} is not first or second"))),
        }
    }
}

impl Choice {
    pub fn as_str(self) -> &'static str {
        match self {
            Choice::First => "first",
            Choice::Second => "second",
        }
    }
}

/// Builds six trials (every bin pair) for each of `n_prompts` distinct
/// random prompts.
///
/// Candidates for a bin are stored clips from other songs whose similarity
/// to the prompt lies within the bin. A prompt missing a candidate in any bin
/// is replaced by a fresh draw, up to [`MAX_RETRIES`] times per prompt.
pub fn generate_abx_trials(
    idx: &VectorIndex,
    profile: &CalibrationProfile,
    n_prompts: usize,
    seed: u64,
) -> Result<Vec<AbxTrial>> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if n_prompts == 0 {
        return Err(Error::InvalidArgument("n_prompts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let mut trials = Vec::with_capacity(6 * n_prompts);

    for p in 0..n_prompts {
        let mut picked = None;
        for _ in 0..=MAX_RETRIES {
            let q = rng.random_range(0..idx.len());
            if !used.insert(q) {
                continue;
            }
            let prompt_song = &idx.record(q).song_id;
            let scores = idx.all_scores(idx.vector(q))?;
            let mut cands: [Vec<usize>; BINS as usize] = Default::default();
            for (e, &s) in scores.iter().enumerate() {
                if &idx.record(e).song_id == prompt_song {
                    continue;
                }
                if let Some(b) = profile.bin_of(s as f64) {
                    cands[b].push(e);
                }
            }
            if cands.iter().all(|c| !c.is_empty()) {
                let chosen: Vec<AbxClip> = cands
                    .iter()
                    .enumerate()
                    .map(|(b, c)| {
                        let e = c[rng.random_range(0..c.len())];
                        let rec = idx.record(e);
                        AbxClip {
                            song_id: rec.song_id.clone(),
                            clip_index: rec.clip_index,
                            start_sec: rec.start_sec,
                            score: scores[e],
                            bin: b as u8 + 1,
                        }
                    })
                    .collect();
                picked = Some((q, chosen));
                break;
            }
        }
        let Some((q, chosen)) = picked else {
            return Err(Error::InvalidArgument(format!(
                "prompt {p}: no clip with candidates in every bin after {MAX_RETRIES} re-draws"
            )));
        };
        let rec = idx.record(q);
        let prompt = ClipRef {
            song_id: rec.song_id.clone(),
            clip_index: rec.clip_index,
            start_sec: rec.start_sec,
        };
        for i in 0..BINS as usize {
            for j in i + 1..BINS as usize {
                let (a, b) = (chosen[i].clone(), chosen[j].clone());
                let order = if rng.random_bool(0.5) { Order::AB } else { Order::BA };
                let (first, second) = match order {
                    Order::AB => (a, b),
                    Order::BA => (b, a),
                };
                trials.push(AbxTrial {
                    trial_id: format!("p{p:03}-{}{}", i + 1, j + 1),
                    prompt: prompt.clone(),
                    first,
                    second,
                    bin_pair: [i as u8 + 1, j as u8 + 1],
                    order,
                });
            }
        }
    }
    Ok(trials)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbxCell {
    pub lower_bin: u8,
    pub n: usize,
    pub prefer_higher: usize,
    /// Percent of responses preferring the higher-bin clip; null when n = 0.
    pub pct_prefer_higher: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbxRow {
    pub higher_bin: u8,
    pub cells: Vec<AbxCell>,
    pub total: AbxCell,
}

/// Result matrix: one row per higher bin (1 to 3), one cell per lower bin,
/// plus the row total over all of that row's trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbxTable {
    pub rows: Vec<AbxRow>,
    pub n_responses: usize,
}

impl AbxTable {
    pub fn cell(&self, higher: u8, lower: u8) -> Option<&AbxCell> {
        self.rows
            .iter()
            .find(|r| r.higher_bin == higher)?
            .cells
            .iter()
            .find(|c| c.lower_bin == lower)
    }
}

fn pct(k: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| 100.0 * k as f64 / n as f64)
}

/// Tabulates responses given in presentation order into the result matrix.
pub fn aggregate_abx(trials: &[AbxTrial], responses: &[(String, Choice)]) -> Result<AbxTable> {
    let mut by_id = HashMap::with_capacity(trials.len());
    for t in trials {
        t.check()?;
        if by_id.insert(t.trial_id.as_str(), t).is_some() {
            return Err(Error::Malformed(format!("duplicate trial id {:?}", t.trial_id)));
        }
    }
    // (higher, lower) -> (n, prefer_higher)
    let mut counts: BTreeMap<(u8, u8), (usize, usize)> = BTreeMap::new();
    for i in 1..BINS {
        for j in i + 1..=BINS {
            counts.insert((i, j), (0, 0));
        }
    }
    for (id, choice) in responses {
        let t = by_id.get(id.as_str()).ok_or_else(|| Error::UnknownTrial(id.clone()))?;
        let higher = matches!((t.order, choice), (Order::AB, Choice::First) | (Order::BA, Choice::Second));
        let c = counts.get_mut(&(t.bin_pair[0], t.bin_pair[1])).expect("checked bin pair");
        c.0 += 1;
        c.1 += higher as usize;
    }
    let rows = (1..BINS)
        .map(|i| {
            let cells: Vec<AbxCell> = (i + 1..=BINS)
                .map(|j| {
                    let (n, k) = counts[&(i, j)];
                    AbxCell {
                        lower_bin: j,
                        n,
                        prefer_higher: k,
                        pct_prefer_higher: pct(k, n),
                    }
                })
                .collect();
            let n: usize = cells.iter().map(|c| c.n).sum();
            let k: usize = cells.iter().map(|c| c.prefer_higher).sum();
            AbxRow {
                higher_bin: i,
                cells,
                total: AbxCell {
                    lower_bin: 0,
                    n,
                    prefer_higher: k,
                    pct_prefer_higher: pct(k, n),
                },
            }
        })
        .collect();
    Ok(AbxTable {
        rows,
        n_responses: responses.len(),
    })
}

pub fn write_trials(path: impl AsRef<Path>, trials: &[AbxTrial]) -> Result<()> {
    write_jsonl(path.as_ref(), trials)
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<AbxTrial>> {
    let trials: Vec<AbxTrial> = read_jsonl(path.as_ref())?;
    for t in &trials {
        t.check()?;
    }
    Ok(trials)
}

#[derive(Serialize, Deserialize)]
struct ResponseRow {
    trial_id: String,
    choice: String,
}

/// Reads a `trial_id,choice` CSV.
pub fn read_responses(path: impl AsRef<Path>) -> Result<Vec<(String, Choice)>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?;
    if headers != vec!["trial_id", "choice"] {
        return Err(Error::Malformed(format!("{}: header must be trial_id,choice", path.display())));
    }
    let mut out = Vec::new();
    for (n, row) in rdr.deserialize::<ResponseRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let choice = row
            .choice
            .parse()
            .map_err(|e| Error::Malformed(format!("{} row {}: {e}", path.display(), n + 2)))?;
        out.push((row.trial_id, choice));
    }
    Ok(out)
}

pub fn write_responses(path: impl AsRef<Path>, responses: &[(String, Choice)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (id, c) in responses {
        w.serialize(ResponseRow {
            trial_id: id.clone(),
            choice: c.as_str().to_string(),
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Malformed(format!("{}: {e}", path.display()))
    }
}
