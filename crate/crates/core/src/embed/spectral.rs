//! Built-in spectral embedder: pooled log-mel and chroma statistics.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Embedding;
use crate::audio::{AudioBuffer, CANONICAL_RATE};
use crate::dsp::{frame_count, Stft};
use crate::error::{Error, Result};

/// Shortest clip the embedder accepts.
pub const MIN_EMBED_SECONDS: f64 = 0.5;

const CHROMA_FMIN: f64 = 55.0;
const CHROMA_FMAX: f64 = 8_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub mel_bands: usize,
    pub chroma_bins: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            sample_rate: CANONICAL_RATE,
            window: 2048,
            hop: 512,
            mel_bands: 64,
            chroma_bins: 12,
        }
    }
}

impl EmbedderConfig {
    /// Mean and standard deviation for every mel band and chroma bin.
    pub fn dim(&self) -> usize {
        2 * self.mel_bands + 2 * self.chroma_bins
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("embedder config: {m}")));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.window < 16 || self.hop == 0 || self.hop > self.window {
            return bad("need window >= 16 and 0 < hop <= window");
        }
        if self.mel_bands == 0 || self.chroma_bins == 0 {
            return bad("mel_bands and chroma_bins must be positive");
        }
        Ok(())
    }
}

/// A sparse triangular filter over FFT bins.
#[derive(Debug, Clone)]
struct Filter {
    first_bin: usize,
    weights: Vec<f64>,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn mel_filterbank(bands: usize, window: usize, rate: u32) -> Vec<Filter> {
    let bins = window / 2 + 1;
    let bin_hz = rate as f64 / window as f64;
    let top = hz_to_mel(rate as f64 / 2.0);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
        .collect();
    (0..bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let weight = |k: usize| {
                let f = k as f64 * bin_hz;
                if f <= lo || f >= hi {
                    0.0
                } else if f <= mid {
                    (f - lo) / (mid - lo)
                } else {
                    (hi - f) / (hi - mid)
                }
            };
            let first_bin = ((lo / bin_hz).floor() as usize).min(bins - 1);
            let last_bin = ((hi / bin_hz).ceil() as usize).min(bins - 1);
            let mut weights: Vec<f64> = (first_bin..=last_bin).map(weight).collect();
            if weights.iter().all(|&w| w == 0.0) {
                // band narrower than one bin: take the nearest bin
                weights = vec![0.0; last_bin - first_bin + 1];
                let nearest = ((mid / bin_hz).round() as usize).clamp(first_bin, last_bin);
                weights[nearest - first_bin] = 1.0;
            }
            Filter { first_bin, weights }
        })
        .collect()
}

/// Pitch class of every FFT bin inside the chroma range.
fn chroma_map(classes: usize, window: usize, rate: u32) -> Vec<Option<usize>> {
    let bin_hz = rate as f64 / window as f64;
    (0..window / 2 + 1)
        .map(|k| {
            let f = k as f64 * bin_hz;
            if !(CHROMA_FMIN..=CHROMA_FMAX).contains(&f) {
                return None;
            }
            // classes per octave, anchored so class 0 is C
            let pos = classes as f64 * (f / 440.0).log2() + classes as f64 * 9.0 / 12.0;
            Some((pos.round() as i64).rem_euclid(classes as i64) as usize)
        })
        .collect()
}

/// Reusable embedder; holds the FFT plan and filterbanks.
#[derive(Debug, Clone)]
pub struct Embedder {
    cfg: EmbedderConfig,
    stft: Stft,
    mel: Vec<Filter>,
    chroma: Vec<Option<usize>>,
}

impl Embedder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            stft: Stft::new(cfg.window),
            mel: mel_filterbank(cfg.mel_bands, cfg.window, cfg.sample_rate),
            chroma: chroma_map(cfg.chroma_bins, cfg.window, cfg.sample_rate),
            cfg,
        })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    /// Embeds a clip of any length of at least half a second.
    ///
    /// Frames are centred on multiples of the hop. Each frame contributes
    /// `log(1 + mel magnitude)` per band and a max-normalised chroma vector;
    /// per-feature mean and standard deviation over frames are concatenated
    /// and L2-normalised. A silent clip maps to the uniform unit vector.
    pub fn embed(&self, buf: &AudioBuffer) -> Result<Embedding> {
        if buf.sample_rate != self.cfg.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: self.cfg.sample_rate,
                actual: buf.sample_rate,
            });
        }
        let min_len = buf.samples_for(MIN_EMBED_SECONDS);
        if buf.len() < min_len || buf.is_empty() {
            return Err(Error::TooShort {
                actual_sec: buf.duration_sec(),
                min_sec: MIN_EMBED_SECONDS,
            });
        }

        let n_mel = self.cfg.mel_bands;
        let n_chroma = self.cfg.chroma_bins;
        let features = n_mel + n_chroma;
        let frames = frame_count(buf.len(), self.cfg.hop);
        let half = (self.cfg.window / 2) as isize;

        let mut sum = vec![0.0f64; features];
        let mut sum_sq = vec![0.0f64; features];
        let mut spec: Vec<Complex64> = Vec::with_capacity(self.cfg.window);
        let mut mag = vec![0.0f64; self.stft.bins()];
        let mut row = vec![0.0f64; features];

        for f in 0..frames {
            let start = (f * self.cfg.hop) as isize - half;
            self.stft.analyze(&buf.samples, start, &mut spec);
            for (m, c) in mag.iter_mut().zip(&spec) {
                *m = c.norm();
            }

            for (b, filt) in self.mel.iter().enumerate() {
                let e: f64 = filt
                    .weights
                    .iter()
                    .zip(&mag[filt.first_bin..])
                    .map(|(w, m)| w * m)
                    .sum();
                row[b] = e.ln_1p();
            }

            let chroma = &mut row[n_mel..];
            chroma.fill(0.0);
            for (m, class) in mag.iter().zip(&self.chroma) {
                if let Some(c) = class {
                    chroma[*c] += m * m;
                }
            }
            let peak = chroma.iter().cloned().fold(0.0, f64::max);
            if peak > 0.0 {
                chroma.iter_mut().for_each(|c| *c /= peak);
            }

            for i in 0..features {
                sum[i] += row[i];
                sum_sq[i] += row[i] * row[i];
            }
        }

        let n = frames as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std: Vec<f64> = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt())
            .collect();

        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&mean[..n_mel]);
        v.extend_from_slice(&std[..n_mel]);
        v.extend_from_slice(&mean[n_mel..]);
        v.extend_from_slice(&std[n_mel..]);
        Ok(Embedding::normalize_f64(&v))
    }
}

/// One-shot convenience wrapper around [`Embedder`].
pub fn embed_clip(buf: &AudioBuffer, cfg: &EmbedderConfig) -> Result<Embedding> {
    Embedder::new(cfg.clone())?.embed(buf)
}
