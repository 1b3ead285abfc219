//! Perturbation-robustness sweeps: how often a modified stored clip still
//! retrieves its source song.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{aggregate_clip_hits_to_songs, MetaTable, DEFAULT_K_CLIPS};
use crate::audio::{AudioBuffer, ClipRecord, ClipSource};
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::index::{SearchMode, VectorIndex};
use crate::perturb::{add_white_noise, mashup, pitch_shift, time_stretch, PerturbationKind};

pub const DEFAULT_TARGETS: usize = 200;
pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

/// Where mash-up partners come from.
#[derive(Clone, Copy)]
pub enum Partners<'a> {
    /// A random clip of a different indexed song.
    Indexed,
    /// A random clip from audio that is not in the index.
    External {
        source: &'a dyn ClipSource,
        clips: &'a [ClipRecord],
    },
    /// Explicit (stored target, partner audio) pairs; replaces the random
    /// target draw.
    Paired(&'a [(ClipRecord, AudioBuffer)]),
}

/// Read-only inputs shared by every sweep point.
#[derive(Clone, Copy)]
pub struct SweepContext<'a> {
    pub idx: &'a VectorIndex,
    /// Audio of the stored clips.
    pub source: &'a dyn ClipSource,
    pub embedder: &'a Embedder,
    pub meta: &'a MetaTable,
    pub partners: Partners<'a>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: PerturbationKind,
    pub levels: Vec<f64>,
    pub n_targets: usize,
    /// Ascending song-rank cut-offs.
    pub ks: Vec<usize>,
    pub mode: SearchMode,
    /// Clip neighbours retrieved per query before song aggregation.
    pub k_clips: usize,
}

impl SweepConfig {
    /// The default grid and settings for `kind`.
    pub fn new(kind: PerturbationKind) -> Self {
        Self {
            kind,
            levels: default_grid(kind),
            n_targets: DEFAULT_TARGETS,
            ks: DEFAULT_KS.to_vec(),
            mode: SearchMode::Ann,
            k_clips: DEFAULT_K_CLIPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::EmptyInput("level grid"));
        }
        for &l in &self.levels {
            self.kind.check(l)?;
        }
        if self.n_targets == 0 {
            return Err(Error::InvalidArgument("n_targets must be at least 1".into()));
        }
        if self.ks.is_empty() || self.ks[0] == 0 || !self.ks.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("ks must be ascending and at least 1".into()));
        }
        if self.k_clips == 0 {
            return Err(Error::InvalidArgument("k_clips must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn default_grid(kind: PerturbationKind) -> Vec<f64> {
    let (from, to, step) = match kind {
        PerturbationKind::PitchShift => (-12, 12, 1),
        PerturbationKind::TimeStretch => (-20, 20, 2),
        PerturbationKind::NoiseOverlay => (-30, 30, 6),
        PerturbationKind::MashUp => (5, 95, 5),
    };
    (from..=to).step_by(step).map(f64::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub level: f64,
    pub n_targets: usize,
    /// Fraction of targets whose song ranked within each k, in `ks` order.
    pub recall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub kind: PerturbationKind,
    pub mode: SearchMode,
    pub ks: Vec<usize>,
    pub rows: Vec<RecallRow>,
}

impl RecallCurve {
    /// recall@k at `level`, if both are on the curve.
    pub fn recall_at(&self, level: f64, k: usize) -> Option<f64> {
        let col = self.ks.iter().position(|&x| x == k)?;
        self.rows.iter().find(|r| r.level == level).map(|r| r.recall[col])
    }
}

struct Target {
    clip: ClipRecord,
    audio: AudioBuffer,
    partner: Option<AudioBuffer>,
}

fn mix_seed(seed: u64, a: usize, b: usize) -> u64 {
    seed ^ (a as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (b as u64 + 1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

fn fit_len(mut buf: AudioBuffer, n: usize) -> AudioBuffer {
    buf.samples.resize(n, 0.0);
    buf
}

fn draw_targets(ctx: &SweepContext<'_>, cfg: &SweepConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Target>> {
    let idx = ctx.idx;
    if let Partners::Paired(pairs) = ctx.partners {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("mash-up pairs"));
        }
        return pairs
            .iter()
            .take(cfg.n_targets)
            .map(|(clip, partner)| {
                if idx.find(&clip.song_id, clip.clip_index).is_none() {
                    return Err(Error::UnknownClip {
                        song_id: clip.song_id.clone(),
                        clip_index: clip.clip_index,
                    });
                }
                let audio = ctx.source.clip_audio(clip)?;
                let partner = fit_len(partner.clone(), audio.len());
                Ok(Target {
                    clip: clip.clone(),
                    audio,
                    partner: Some(partner),
                })
            })
            .collect();
    }
    if cfg.n_targets > idx.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets requested from {} stored clips",
            cfg.n_targets,
            idx.len()
        )));
    }
    let picks = sample(rng, idx.len(), cfg.n_targets).into_vec();
    let mut out = Vec::with_capacity(picks.len());
    for e in picks {
        let clip = idx.record(e).clone();
        let audio = ctx.source.clip_audio(&clip)?;
        let partner = if cfg.kind != PerturbationKind::MashUp {
            None
        } else {
            let rec = match ctx.partners {
                Partners::Indexed => {
                    let mut found = None;
                    for _ in 0..1_000 {
                        let r = idx.record(rng.random_range(0..idx.len()));
                        if r.song_id != clip.song_id {
                            found = Some(r.clone());
                            break;
                        }
                    }
                    let r = found.ok_or_else(|| {
                        Error::InvalidArgument("mash-up needs at least two indexed songs".into())
                    })?;
                    ctx.source.clip_audio(&r)?
                }
                Partners::External { source, clips } => {
                    if clips.is_empty() {
                        return Err(Error::EmptyInput("external partner clips"));
                    }
                    source.clip_audio(&clips[rng.random_range(0..clips.len())])?
                }
                Partners::Paired(_) => unreachable!("handled above"),
            };
            Some(fit_len(rec, audio.len()))
        };
        out.push(Target { clip, audio, partner });
    }
    Ok(out)
}

fn perturb(kind: PerturbationKind, level: f64, noise_seed: u64, t: &Target) -> Result<AudioBuffer> {
    match kind {
        PerturbationKind::PitchShift => pitch_shift(&t.audio, level),
        PerturbationKind::TimeStretch => time_stretch(&t.audio, level),
        PerturbationKind::NoiseOverlay => add_white_noise(&t.audio, level, noise_seed),
        PerturbationKind::MashUp => {
            let partner = t.partner.as_ref().expect("mash-up targets carry a partner");
            mashup(&t.audio, partner, level)
        }
    }
}

/// 0-based song rank of `song_id` for one perturbed query, if retrieved.
fn song_rank(ctx: &SweepContext<'_>, cfg: &SweepConfig, audio: &AudioBuffer, song_id: &str) -> Result<Option<usize>> {
    let emb = ctx.embedder.embed(audio)?;
    let hits = ctx.idx.search_topk(&emb, cfg.k_clips, cfg.mode)?;
    let songs = aggregate_clip_hits_to_songs(&hits, ctx.meta)?;
    Ok(songs.iter().position(|m| m.song_id == song_id))
}

/// Recall@k of the target songs at every level of the grid.
///
/// Targets (and mash-up partners) are drawn once from `seed` and reused at
/// every level, so rows differ only in the perturbation amount.
pub fn robustness_sweep(ctx: &SweepContext<'_>, cfg: &SweepConfig, seed: u64) -> Result<RecallCurve> {
    cfg.validate()?;
    if ctx.idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = draw_targets(ctx, cfg, &mut rng)?;
    let mut rows = Vec::with_capacity(cfg.levels.len());
    for (li, &level) in cfg.levels.iter().enumerate() {
        let mut hits = vec![0usize; cfg.ks.len()];
        for (ti, t) in targets.iter().enumerate() {
            let audio = perturb(cfg.kind, level, mix_seed(seed, ti, li), t)?;
            if let Some(rank) = song_rank(ctx, cfg, &audio, &t.clip.song_id)? {
                for (h, &k) in hits.iter_mut().zip(&cfg.ks) {
                    *h += (rank < k) as usize;
                }
            }
        }
        let n = targets.len();
        rows.push(RecallRow {
            level,
            n_targets: n,
            recall: hits.iter().map(|&h| h as f64 / n as f64).collect(),
        });
    }
    Ok(RecallCurve {
        kind: cfg.kind,
        mode: cfg.mode,
        ks: cfg.ks.clone(),
        rows,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::audio::Corpus;
    use crate::embed::EmbedderConfig;
    use crate::index::IndexConfig;
    use crate::synth::{synth_corpus, SynthConfig};

    pub(crate) struct Fixture {
        pub corpus: Corpus,
        pub idx: VectorIndex,
        pub embedder: Embedder,
        pub meta: MetaTable,
    }

    pub(crate) fn fixture(songs: usize, seconds: f64, seed: u64) -> Fixture {
        let corpus = synth_corpus(&SynthConfig {
            songs,
            seconds_per_song: seconds,
            seed,
            ..Default::default()
        })
        .unwrap();
        let embedder = Embedder::new(EmbedderConfig::default()).unwrap();
        let items = corpus
            .clips()
            .unwrap()
            .into_iter()
            .map(|(r, a)| (r, embedder.embed(&a).unwrap()))
            .collect();
        let idx = VectorIndex::build(items, IndexConfig::default()).unwrap();
        let meta = corpus.meta_table();
        Fixture { corpus, idx, embedder, meta }
    }

    impl Fixture {
        pub fn ctx(&self) -> SweepContext<'_> {
            SweepContext {
                idx: &self.idx,
                source: &self.corpus,
                embedder: &self.embedder,
                meta: &self.meta,
                partners: Partners::Indexed,
            }
        }
    }

    fn cfg(kind: PerturbationKind, levels: &[f64], n: usize) -> SweepConfig {
        SweepConfig {
            levels: levels.to_vec(),
            n_targets: n,
            mode: SearchMode::Exact,
            ..SweepConfig::new(kind)
        }
    }

    #[test]
    fn default_grids() {
        assert_eq!(default_grid(PerturbationKind::PitchShift).len(), 25);
        assert_eq!(default_grid(PerturbationKind::TimeStretch).len(), 21);
        assert_eq!(default_grid(PerturbationKind::NoiseOverlay), vec![-30.0, -24.0, -18.0, -12.0, -6.0, 0.0, 6.0, 12.0, 18.0, 24.0, 30.0]);
        let mash = default_grid(PerturbationKind::MashUp);
        assert_eq!((mash[0], mash[18], mash.len()), (5.0, 95.0, 19));
        for k in [PerturbationKind::PitchShift, PerturbationKind::TimeStretch, PerturbationKind::NoiseOverlay, PerturbationKind::MashUp] {
            SweepConfig::new(k).validate().unwrap();
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(PerturbationKind::PitchShift, &[13.0], 1).validate().is_err());
        assert!(cfg(PerturbationKind::PitchShift, &[], 1).validate().is_err());
        assert!(cfg(PerturbationKind::PitchShift, &[0.0], 0).validate().is_err());
        let mut c = cfg(PerturbationKind::PitchShift, &[0.0], 1);
        c.ks = vec![5, 1];
        assert!(c.validate().is_err());
    }

    #[test]
    fn identity_levels_retrieve_every_target() {
        let f = fixture(6, 9.0, 11);
        let ctx = f.ctx();
        for (kind, level) in [
            (PerturbationKind::PitchShift, 0.0),
            (PerturbationKind::TimeStretch, 0.0),
            (PerturbationKind::MashUp, 100.0),
        ] {
            let curve = robustness_sweep(&ctx, &cfg(kind, &[level], 12), 4).unwrap();
            assert_eq!(curve.rows[0].recall, vec![1.0, 1.0, 1.0], "{kind:?}");
        }
    }

    #[test]
    fn curves_have_grid_shape_and_monotone_k() {
        let f = fixture(6, 9.0, 12);
        let ctx = f.ctx();
        let c = cfg(PerturbationKind::PitchShift, &default_grid(PerturbationKind::PitchShift), 4);
        let curve = robustness_sweep(&ctx, &c, 1).unwrap();
        assert_eq!(curve.rows.len(), 25);
        for r in &curve.rows {
            assert_eq!(r.recall.len(), 3);
            assert!(r.recall.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(curve.recall_at(0.0, 1), Some(1.0));
    }

    #[test]
    fn sweeps_are_reproducible() {
        let f = fixture(5, 6.0, 13);
        let ctx = f.ctx();
        let c = cfg(PerturbationKind::NoiseOverlay, &[-6.0, 6.0], 8);
        assert_eq!(robustness_sweep(&ctx, &c, 9).unwrap(), robustness_sweep(&ctx, &c, 9).unwrap());
        let m = cfg(PerturbationKind::MashUp, &[25.0, 75.0], 8);
        assert_eq!(robustness_sweep(&ctx, &m, 9).unwrap(), robustness_sweep(&ctx, &m, 9).unwrap());
    }

    #[test]
    fn external_and_paired_partners() {
        let f = fixture(4, 6.0, 14);
        let outside = fixture(2, 6.0, 99);
        let clips: Vec<ClipRecord> = outside.idx.records().to_vec();
        let ctx = SweepContext {
            partners: Partners::External {
                source: &outside.corpus,
                clips: &clips,
            },
            ..f.ctx()
        };
        let curve = robustness_sweep(&ctx, &cfg(PerturbationKind::MashUp, &[100.0], 8), 2).unwrap();
        assert_eq!(curve.rows[0].recall[0], 1.0);

        let target = f.idx.record(0).clone();
        let partner = outside.corpus.clip_audio(&clips[0]).unwrap();
        let pairs = vec![(target, partner)];
        let ctx = SweepContext {
            partners: Partners::Paired(&pairs),
            ..f.ctx()
        };
        let curve = robustness_sweep(&ctx, &cfg(PerturbationKind::MashUp, &[100.0, 0.0], 8), 2).unwrap();
        assert_eq!(curve.rows[0].n_targets, 1);
        assert_eq!(curve.rows[0].recall[0], 1.0);
    }
}
