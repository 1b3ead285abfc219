//! Seeded toy-music synthesizer for test corpora and demos.
//!
//! Each song has its own key, tempo, chord progression, instrument timbres
//! and drum pattern, so clips of one song resemble each other more than
//! clips of other songs. Drum noise makes every clip unique.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioBuffer, Corpus, SongMeta, CANONICAL_RATE};
use crate::error::Result;

const TABLE_LEN: usize = 2048;
const MAJOR: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR: [i32; 7] = [0, 2, 3, 5, 7, 8, 10];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub songs: usize,
    pub seconds_per_song: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            songs: 100,
            seconds_per_song: 30.0,
            sample_rate: CANONICAL_RATE,
            seed: 0,
        }
    }
}

/// One period of a harmonic waveform.
struct Wavetable(Vec<f32>);

impl Wavetable {
    fn new(rng: &mut ChaCha8Rng, max_harmonics: usize) -> Self {
        let harmonics = rng.random_range(2..=max_harmonics);
        let rolloff: f64 = rng.random_range(0.6..2.2);
        let amps: Vec<f64> = (1..=harmonics)
            .map(|h| rng.random_range(0.5..1.0) / (h as f64).powf(rolloff))
            .collect();
        let mut table: Vec<f64> = (0..TABLE_LEN)
            .map(|i| {
                let ph = 2.0 * PI * i as f64 / TABLE_LEN as f64;
                amps.iter()
                    .enumerate()
                    .map(|(h, a)| a * (ph * (h + 1) as f64).sin())
                    .sum()
            })
            .collect();
        let peak = table.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
        table.iter_mut().for_each(|v| *v /= peak);
        Wavetable(table.into_iter().map(|v| v as f32).collect())
    }

    #[inline]
    fn at(&self, phase: f64) -> f32 {
        let pos = phase.fract() * TABLE_LEN as f64;
        self.0[pos as usize % TABLE_LEN]
    }
}

fn midi_hz(note: i32) -> f64 {
    440.0 * 2f64.powf((note - 69) as f64 / 12.0)
}

/// Adds a decaying note starting at sample `start` to `out`.
#[allow(clippy::too_many_arguments)]
fn render_note(out: &mut [f32], rate: f64, start: usize, len: usize, hz: f64, gain: f32, decay: f64, table: &Wavetable) {
    let attack = (0.008 * rate) as usize;
    let step = hz / rate;
    let end = (start + len).min(out.len());
    let mut phase = 0.0;
    for (i, s) in out[start.min(end)..end].iter_mut().enumerate() {
        let t = i as f64 / rate;
        let env = if i < attack {
            i as f64 / attack as f64
        } else {
            (-t * decay).exp()
        };
        // short release so notes do not click off
        let tail = ((end - start - i) as f64 / (0.01 * rate)).min(1.0);
        *s += gain * (env * tail) as f32 * table.at(phase);
        phase += step;
    }
}

/// Renders one song of `seconds` length.
pub fn synth_song(seed: u64, seconds: f64, sample_rate: u32) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = sample_rate as f64;
    let n = (seconds * rate).round() as usize;
    let mut out = vec![0.0f32; n];

    let root = rng.random_range(45..57);
    let scale = if rng.random_bool(0.5) { MAJOR } else { MINOR };
    let bpm: f64 = rng.random_range(78.0..160.0);
    let beat = (60.0 / bpm * rate) as usize;
    let pad = Wavetable::new(&mut rng, 8);
    let bass = Wavetable::new(&mut rng, 4);
    let lead = Wavetable::new(&mut rng, 12);
    let pad_gain: f32 = rng.random_range(0.08..0.2);
    let lead_gain: f32 = rng.random_range(0.1..0.3);
    let bass_gain: f32 = rng.random_range(0.15..0.35);
    let drum_gain: f32 = rng.random_range(0.05..0.3);
    let hat_prob: f64 = rng.random_range(0.2..0.9);
    let lead_octave = 12 * rng.random_range(1..3);
    let lead_density: f64 = rng.random_range(0.4..0.95);

    let progressions: Vec<Vec<usize>> = (0..2)
        .map(|_| (0..4).map(|_| rng.random_range(0..7)).collect())
        .collect();
    let degree = |d: usize, scale: &[i32; 7]| scale[d % 7] + 12 * (d / 7) as i32;

    let bars = n / (4 * beat) + 1;
    for bar in 0..bars {
        let prog = &progressions[(bar / 4) % 2];
        let chord_deg = prog[bar % 4];
        let bar_start = bar * 4 * beat;
        if bar_start >= n {
            break;
        }
        // sustained triad
        for k in 0..3 {
            let note = root + 12 + degree(chord_deg + 2 * k, &scale);
            render_note(&mut out, rate, bar_start, 4 * beat, midi_hz(note), pad_gain, 0.4, &pad);
        }
        for b in 0..4 {
            let t0 = bar_start + b * beat;
            if t0 >= n {
                break;
            }
            render_note(&mut out, rate, t0, beat, midi_hz(root - 12 + degree(chord_deg, &scale)), bass_gain, 3.0, &bass);

            // drums: kick on 1 and 3, snare on 2 and 4, hats on eighths
            if b % 2 == 0 {
                let len = (0.15 * rate) as usize;
                let mut ph = 0.0;
                for i in 0..len.min(n - t0) {
                    let t = i as f64 / rate;
                    let hz = 50.0 + 90.0 * (-t * 30.0).exp();
                    ph += hz / rate;
                    out[t0 + i] += drum_gain * 2.0 * ((-t * 18.0).exp() * (2.0 * PI * ph).sin()) as f32;
                }
            } else {
                let len = (0.12 * rate) as usize;
                for i in 0..len.min(n - t0) {
                    let t = i as f64 / rate;
                    let noise: f64 = rng.random_range(-1.0..1.0);
                    out[t0 + i] += drum_gain * ((-t * 25.0).exp() * noise) as f32;
                }
            }
            for half in 0..2 {
                let h0 = t0 + half * beat / 2;
                if h0 >= n || !rng.random_bool(hat_prob) {
                    continue;
                }
                let len = (0.04 * rate) as usize;
                let mut prev = 0.0f64;
                for i in 0..len.min(n - h0) {
                    let t = i as f64 / rate;
                    let noise: f64 = rng.random_range(-1.0..1.0);
                    out[h0 + i] += drum_gain * 0.5 * ((-t * 80.0).exp() * (noise - prev)) as f32;
                    prev = noise;
                }
            }

            // melody on eighth notes, drawn from the scale
            for half in 0..2 {
                let m0 = t0 + half * beat / 2;
                if m0 >= n || !rng.random_bool(lead_density) {
                    continue;
                }
                let d = chord_deg + rng.random_range(0..8);
                let note = root + lead_octave + degree(d, &scale);
                render_note(&mut out, rate, m0, beat / 2, midi_hz(note), lead_gain, 4.0, &lead);
            }
        }
    }

    let peak = out.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-9);
    let gain = 0.5 / peak;
    out.iter_mut().for_each(|v| *v *= gain);
    AudioBuffer::new(out, sample_rate)
}

/// Song seed derived from the corpus seed and song index.
fn song_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Metadata and audio for `cfg.songs` songs with ids `song-0000`, ...
pub fn synth_songs(cfg: &SynthConfig) -> Vec<(SongMeta, AudioBuffer)> {
    (0..cfg.songs)
        .map(|i| {
            let audio = synth_song(song_seed(cfg.seed, i), cfg.seconds_per_song, cfg.sample_rate);
            let song_id = format!("song-{i:04}");
            let meta = SongMeta {
                title: format!("Synthetic Song {i}"),
                artist: format!("Toy Band {}", i % 17),
                source_path: format!("{song_id}.wav"),
                total_duration_sec: audio.duration_sec(),
                song_id,
            };
            (meta, audio)
        })
        .collect()
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    for (meta, audio) in synth_songs(cfg) {
        corpus.insert(meta, audio)?;
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::rms;

    #[test]
    fn songs_are_deterministic_and_distinct() {
        let a = synth_song(1, 4.0, CANONICAL_RATE);
        let b = synth_song(1, 4.0, CANONICAL_RATE);
        let c = synth_song(2, 4.0, CANONICAL_RATE);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 88_200);
        assert!(a.samples.iter().all(|s| s.abs() <= 0.5 + 1e-6));
        assert!(rms(&a).unwrap() > 0.02);
    }

    #[test]
    fn corpus_has_requested_shape() {
        let cfg = SynthConfig {
            songs: 3,
            seconds_per_song: 6.0,
            ..Default::default()
        };
        let corpus = synth_corpus(&cfg).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.clips().unwrap().len(), 6);
        assert!(corpus.song("song-0002").is_some());
    }
}
