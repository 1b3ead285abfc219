//! Deterministic audio perturbations: pitch shift, time stretch, white-noise
//! overlay and two-clip mash-ups.

pub mod vocoder;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{resample::resample_to_len, rms_of, AudioBuffer, ClipRecord};
use crate::error::{check_range, Error, Result};

pub const PITCH_RANGE: (f64, f64) = (-12.0, 12.0);
pub const STRETCH_RANGE: (f64, f64) = (-20.0, 20.0);
pub const NOISE_RANGE: (f64, f64) = (-30.0, 30.0);
pub const MASHUP_RANGE: (f64, f64) = (0.0, 100.0);

/// Length of the linear crossfade at a mash-up splice.
pub const CROSSFADE_SECONDS: f64 = 0.010;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    PitchShift,
    TimeStretch,
    NoiseOverlay,
    MashUp,
}

impl PerturbationKind {
    pub fn range(self) -> (f64, f64) {
        match self {
            PerturbationKind::PitchShift => PITCH_RANGE,
            PerturbationKind::TimeStretch => STRETCH_RANGE,
            PerturbationKind::NoiseOverlay => NOISE_RANGE,
            PerturbationKind::MashUp => MASHUP_RANGE,
        }
    }

    fn label(self) -> &'static str {
        match self {
            PerturbationKind::PitchShift => "semitones",
            PerturbationKind::TimeStretch => "speed percent",
            PerturbationKind::NoiseOverlay => "noise level (dB)",
            PerturbationKind::MashUp => "target percent",
        }
    }

    pub fn check(self, amount: f64) -> Result<()> {
        let (lo, hi) = self.range();
        check_range(self.label(), amount, lo, hi)
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pitch" | "pitch_shift" => Ok(PerturbationKind::PitchShift),
            "stretch" | "time_stretch" => Ok(PerturbationKind::TimeStretch),
            "noise" | "noise_overlay" => Ok(PerturbationKind::NoiseOverlay),
            "mashup" | "mash_up" => Ok(PerturbationKind::MashUp),
            other => Err(Error::InvalidArgument(format!("unknown perturbation kind {other:?}"))),
        }
    }
}

/// One fully specified perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    PitchShift { semitones: f64 },
    TimeStretch { speed_percent: f64 },
    NoiseOverlay { level_db: f64, seed: u64 },
    MashUp { target_percent: f64, partner: ClipRecord },
}

impl Perturbation {
    pub fn kind(&self) -> PerturbationKind {
        match self {
            Perturbation::PitchShift { .. } => PerturbationKind::PitchShift,
            Perturbation::TimeStretch { .. } => PerturbationKind::TimeStretch,
            Perturbation::NoiseOverlay { .. } => PerturbationKind::NoiseOverlay,
            Perturbation::MashUp { .. } => PerturbationKind::MashUp,
        }
    }

    pub fn amount(&self) -> f64 {
        match *self {
            Perturbation::PitchShift { semitones } => semitones,
            Perturbation::TimeStretch { speed_percent } => speed_percent,
            Perturbation::NoiseOverlay { level_db, .. } => level_db,
            Perturbation::MashUp { target_percent, .. } => target_percent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind().check(self.amount())
    }

    /// Applies the perturbation to `buf`. Mash-ups need the partner clip's
    /// audio, which the caller resolves from `partner`.
    pub fn apply(&self, buf: &AudioBuffer, partner_audio: Option<&AudioBuffer>) -> Result<AudioBuffer> {
        match self {
            Perturbation::PitchShift { semitones } => pitch_shift(buf, *semitones),
            Perturbation::TimeStretch { speed_percent } => time_stretch(buf, *speed_percent),
            Perturbation::NoiseOverlay { level_db, seed } => add_white_noise(buf, *level_db, *seed),
            Perturbation::MashUp { target_percent, .. } => {
                let partner = partner_audio.ok_or_else(|| {
                    Error::InvalidArgument("mash-up requires partner audio".into())
                })?;
                mashup(buf, partner, *target_percent)
            }
        }
    }
}

/// Shifts pitch by `semitones` while keeping the length: the clip is
/// time-scaled by the pitch ratio and then resampled back onto its original
/// length.
pub fn pitch_shift(buf: &AudioBuffer, semitones: f64) -> Result<AudioBuffer> {
    PerturbationKind::PitchShift.check(semitones)?;
    if buf.is_empty() {
        return Err(Error::ZeroLengthAudio);
    }
    if semitones == 0.0 {
        return Ok(buf.clone());
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let stretched = vocoder::time_scale(&buf.samples, 1.0 / ratio);
    let mut samples = resample_to_len(&stretched, buf.len());
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(AudioBuffer::new(samples, buf.sample_rate))
}

/// Changes playback speed by `speed_percent` (positive is faster) while
/// keeping the pitch.
pub fn time_stretch(buf: &AudioBuffer, speed_percent: f64) -> Result<AudioBuffer> {
    PerturbationKind::TimeStretch.check(speed_percent)?;
    if buf.is_empty() {
        return Err(Error::ZeroLengthAudio);
    }
    if speed_percent == 0.0 {
        return Ok(buf.clone());
    }
    let speed = 1.0 + speed_percent / 100.0;
    let mut samples = vocoder::time_scale(&buf.samples, speed);
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(AudioBuffer::new(samples, buf.sample_rate))
}

/// Adds seeded Gaussian white noise whose RMS is `level_db` relative to the
/// RMS of `buf`, then clamps to [-1, 1].
pub fn add_white_noise(buf: &AudioBuffer, level_db: f64, seed: u64) -> Result<AudioBuffer> {
    PerturbationKind::NoiseOverlay.check(level_db)?;
    if buf.is_empty() {
        return Err(Error::ZeroLengthAudio);
    }
    let signal_rms = rms_of(&buf.samples);
    if signal_rms == 0.0 {
        return Err(Error::SilentInput);
    }
    let target = signal_rms * 10f64.powf(level_db / 20.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..buf.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let noise_rms = (noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64).sqrt();
    let gain = if noise_rms > 0.0 { target / noise_rms } else { 0.0 };

    let samples = buf
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, &n)| (s as f64 + gain * n).clamp(-1.0, 1.0) as f32)
        .collect();
    Ok(AudioBuffer::new(samples, buf.sample_rate))
}

/// Splices the first `target_percent` of `a` onto the remainder of `b` with a
/// short linear crossfade centred on the splice point.
pub fn mashup(a: &AudioBuffer, b: &AudioBuffer, target_percent: f64) -> Result<AudioBuffer> {
    PerturbationKind::MashUp.check(target_percent)?;
    if a.sample_rate != b.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: a.sample_rate,
            actual: b.sample_rate,
        });
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if target_percent >= 100.0 {
        return Ok(a.clone());
    }
    if target_percent <= 0.0 {
        return Ok(b.clone());
    }

    let n = a.len();
    let split = (target_percent / 100.0 * n as f64).round() as usize;
    let half = a.samples_for(CROSSFADE_SECONDS) / 2;
    let fade_start = split.saturating_sub(half);
    let fade_end = (split + half).min(n);
    let width = (2 * half).max(1) as f64;

    let samples = (0..n)
        .map(|i| {
            if i < fade_start {
                a.samples[i]
            } else if i >= fade_end {
                b.samples[i]
            } else {
                // weight of `b`, measured from the nominal fade start
                let w = ((i as f64 + 0.5) - (split as f64 - half as f64)) / width;
                let w = w.clamp(0.0, 1.0);
                ((1.0 - w) * a.samples[i] as f64 + w * b.samples[i] as f64) as f32
            }
        })
        .collect();
    Ok(AudioBuffer::new(samples, a.sample_rate))
}
