//! Similarity bins and thresholds derived from corpus statistics.
//!
//! Bin 1 is the median of the top-neighbour score distribution plus two
//! standard deviations, Bin 2 plus one, Bin 3 the median itself and Bin 4 the
//! median score of random clip pairs. Every bin spans its centre ± 0.02.

mod abx;

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::dot;
use crate::error::{Error, Result};
use crate::index::VectorIndex;

pub use abx::{
    aggregate_abx, generate_abx_trials, read_responses, read_trials, write_responses, write_trials, AbxCell,
    AbxClip, AbxRow, AbxTable, AbxTrial, Choice, ClipRef, Order, MAX_RETRIES,
};

pub const BIN_HALFWIDTH: f64 = 0.02;
pub const DEFAULT_QUERIES: usize = 1_000;
pub const DEFAULT_TOP_M: usize = 10_000;
pub const DEFAULT_BASELINE_PAIRS: usize = 1_000;
/// Spacing of the census thresholds stacked above the high-similarity one.
pub const CENSUS_STEP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSource {
    TopMPerQuery,
    RandomPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityDistribution {
    pub scores: Vec<f64>,
    pub source: DistributionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub median: f64,
    pub sd: f64,
    /// Bin 1 to Bin 4, strictly decreasing.
    pub bin_centers: [f64; 4],
    pub bin_halfwidth: f64,
    pub random_baseline: f64,
    pub high_similarity_threshold: f64,
}

impl CalibrationProfile {
    /// Index (0-based) of the bin containing `score`, if any.
    pub fn bin_of(&self, score: f64) -> Option<usize> {
        self.bin_centers
            .iter()
            .position(|c| (score - c).abs() <= self.bin_halfwidth)
    }

    /// Five thresholds from the high-similarity one upwards in 0.02 steps,
    /// highest first.
    pub fn census_thresholds(&self) -> Vec<f64> {
        (0..5)
            .rev()
            .map(|i| snap(self.high_similarity_threshold + CENSUS_STEP * i as f64))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Invariant(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
        if !p.bin_centers.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::Malformed(format!("{}: bin centres not decreasing", path.display())));
        }
        Ok(p)
    }
}

/// Rounds to twelve decimal places so sums like 0.693 + 2 × 0.091 land on
/// the nearest double to the decimal result.
fn snap(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Pools the top-`m` neighbour scores (self excluded) of `n_queries` distinct
/// stored clips chosen at random.
pub fn sample_top_similarities(idx: &VectorIndex, n_queries: usize, m: usize, seed: u64) -> Result<SimilarityDistribution> {
    let n = idx.len();
    if m == 0 || n_queries == 0 {
        return Err(Error::InvalidArgument("n_queries and m must be at least 1".into()));
    }
    if m >= n {
        return Err(Error::InvalidArgument(format!("top-{m} needs more than {m} stored clips, index has {n}")));
    }
    if n_queries > n {
        return Err(Error::InvalidArgument(format!("{n_queries} queries requested from {n} stored clips")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n_queries * m);
    for q in sample(&mut rng, n, n_queries).into_vec() {
        let mut all = idx.all_scores(idx.vector(q))?;
        all.swap_remove(q);
        all.select_nth_unstable_by(m - 1, |a, b| b.total_cmp(a));
        scores.extend(all[..m].iter().map(|&s| s as f64));
    }
    Ok(SimilarityDistribution {
        scores,
        source: DistributionSource::TopMPerQuery,
    })
}

/// Median similarity over all cross pairs of two disjoint random subsets of
/// `n` clips.
pub fn random_pair_baseline(idx: &VectorIndex, n: usize, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("baseline subset size must be at least 1".into()));
    }
    if idx.len() < 2 * n {
        return Err(Error::InvalidArgument(format!(
            "baseline needs {} stored clips, index has {}",
            2 * n,
            idx.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, idx.len(), 2 * n).into_vec();
    let (left, right) = picks.split_at(n);
    let mut scores = Vec::with_capacity(n * n);
    for &a in left {
        for &b in right {
            scores.push(dot(idx.vector(a), idx.vector(b)) as f64);
        }
    }
    Ok(median(&mut scores))
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Sample median and population standard deviation.
pub fn fit_gaussian(dist: &SimilarityDistribution) -> Result<(f64, f64)> {
    let xs = &dist.scores;
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 scores, got {}", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite similarity score".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok((median(&mut xs.clone()), var.sqrt()))
}

pub fn make_bins(median: f64, sd: f64, baseline: f64) -> Result<CalibrationProfile> {
    let overlap = 2.0 * BIN_HALFWIDTH;
    if !(median.is_finite() && sd.is_finite() && baseline.is_finite()) {
        return Err(Error::InvalidArgument("calibration inputs must be finite".into()));
    }
    if sd <= overlap {
        return Err(Error::InvalidArgument(format!(
            "sd = {sd} would make bins overlap (need sd > {overlap})"
        )));
    }
    if median - baseline <= overlap {
        return Err(Error::InvalidArgument(format!(
            "random baseline {baseline} is not more than {overlap} below the median {median}"
        )));
    }
    let bin_centers = [snap(median + 2.0 * sd), snap(median + sd), median, baseline];
    Ok(CalibrationProfile {
        median,
        sd,
        bin_centers,
        bin_halfwidth: BIN_HALFWIDTH,
        random_baseline: baseline,
        high_similarity_threshold: bin_centers[0],
    })
}

/// Full calibration pass: top-neighbour distribution, Gaussian fit, random
/// baseline and bins.
pub fn calibrate(
    idx: &VectorIndex,
    n_queries: usize,
    top_m: usize,
    baseline_pairs: usize,
    seed: u64,
) -> Result<CalibrationProfile> {
    let dist = sample_top_similarities(idx, n_queries, top_m, seed)?;
    let (median, sd) = fit_gaussian(&dist)?;
    let baseline = random_pair_baseline(idx, baseline_pairs, seed ^ 0x5EED_BA5E)?;
    make_bins(median, sd, baseline)
}
