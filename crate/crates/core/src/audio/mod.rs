//! Audio ingestion and segmentation into fixed-length clips.

pub(crate) mod corpus;
pub mod resample;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{
    read_clip_table, read_manifest, read_song_table, write_clip_table, write_manifest, write_song_table, ClipSource,
    Corpus, ManifestEntry,
};

/// Canonical working rate for every stage of the pipeline.
pub const CANONICAL_RATE: u32 = 22_050;
/// Length of a clip, the atomic unit of embedding and search.
pub const CLIP_SECONDS: f64 = 3.0;
/// Shortest trailing remainder that is kept (zero-padded) instead of dropped.
pub const MIN_TAIL_SECONDS: f64 = 1.5;

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Number of samples spanning `seconds` at this buffer's rate.
    pub fn samples_for(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate as f64).round() as usize
    }
}

/// Identity of one clip within a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub song_id: String,
    pub clip_index: u32,
    pub start_sec: f64,
    pub duration_sec: f64,
    pub padded: bool,
}

impl ClipRecord {
    /// Canonical record for the `clip_index`-th clip of a song.
    pub fn canonical(song_id: impl Into<String>, clip_index: u32, padded: bool) -> Self {
        Self {
            song_id: song_id.into(),
            clip_index,
            start_sec: clip_index as f64 * CLIP_SECONDS,
            duration_sec: CLIP_SECONDS,
            padded,
        }
    }

    /// Ordering key used for every deterministic tie-break.
    pub fn key(&self) -> (&str, u32) {
        (&self.song_id, self.clip_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongMeta {
    pub song_id: String,
    pub title: String,
    pub artist: String,
    pub source_path: String,
    pub total_duration_sec: f64,
}

/// Reads a PCM WAV file as mono audio at `target_rate`.
///
/// Integer (8/16/24/32-bit) and 32-bit float PCM are accepted. Stereo is
/// averaged to mono before resampling, and samples are clamped to [-1, 1].
pub fn ingest_audio(path: impl AsRef<Path>, target_rate: u32) -> Result<AudioBuffer> {
    let path = path.as_ref();
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::UnsupportedFormat(format!("{channels} channels")));
    }
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::UnsupportedFormat(format!(
                    "{}-bit float",
                    spec.bits_per_sample
                )));
            }
            reader
                .into_samples::<f32>()
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        hound::SampleFormat::Int => {
            if !matches!(spec.bits_per_sample, 8 | 16 | 24 | 32) {
                return Err(Error::UnsupportedFormat(format!(
                    "{}-bit integer",
                    spec.bits_per_sample
                )));
            }
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
    };
    if interleaved.is_empty() {
        return Err(Error::ZeroLengthAudio);
    }
    if interleaved.iter().any(|s| !s.is_finite()) {
        return Err(Error::Malformed(format!(
            "{}: non-finite sample",
            path.display()
        )));
    }

    let mono: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|lr| 0.5 * (lr[0] + lr[1]))
            .collect()
    };
    let mut samples = resample::resample(&mono, spec.sample_rate, target_rate);
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(AudioBuffer::new(samples, target_rate))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedFormat(path.display().to_string()),
        other => Error::UnsupportedFormat(format!("{}: {other}", path.display())),
    }
}

/// Writes `buf` as 32-bit float mono WAV.
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &buf.samples {
        writer.write_sample(s).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

/// Splits `buf` into consecutive, non-overlapping 3-second clips.
///
/// A trailing remainder of at least 1.5 s is zero-padded to full length and
/// marked `padded`; anything shorter is dropped.
pub fn segment_into_clips(buf: &AudioBuffer, song_id: &str) -> Result<Vec<(ClipRecord, AudioBuffer)>> {
    let clip_len = buf.samples_for(CLIP_SECONDS);
    let min_tail = (MIN_TAIL_SECONDS * buf.sample_rate as f64).ceil() as usize;
    if buf.len() < min_tail {
        return Err(Error::TooShort {
            actual_sec: buf.duration_sec(),
            min_sec: MIN_TAIL_SECONDS,
        });
    }

    let mut clips = Vec::with_capacity(buf.len() / clip_len + 1);
    for (i, chunk) in buf.samples.chunks(clip_len).enumerate() {
        let padded = chunk.len() < clip_len;
        if padded && chunk.len() < min_tail {
            break;
        }
        let mut samples = chunk.to_vec();
        samples.resize(clip_len, 0.0);
        clips.push((
            ClipRecord::canonical(song_id, i as u32, padded),
            AudioBuffer::new(samples, buf.sample_rate),
        ));
    }
    Ok(clips)
}

/// Root-mean-square level of the buffer.
pub fn rms(buf: &AudioBuffer) -> Result<f64> {
    if buf.is_empty() {
        return Err(Error::ZeroLengthAudio);
    }
    Ok(rms_of(&buf.samples))
}

pub(crate) fn rms_of(samples: &[f32]) -> f64 {
    let sum: f64 = samples.iter().map(|&s| s as f64 * s as f64).sum();
    (sum / samples.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn buffer(seconds: f64) -> AudioBuffer {
        let n = (seconds * CANONICAL_RATE as f64).round() as usize;
        AudioBuffer::new(
            (0..n).map(|i| ((i % 200) as f32 / 200.0) - 0.5).collect(),
            CANONICAL_RATE,
        )
    }

    fn write_pcm16(path: &Path, rate: u32, channels: u16, samples: &[i16]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn segmentation_counts() {
        let clips = segment_into_clips(&buffer(9.0), "s").unwrap();
        assert_eq!(clips.len(), 3);
        assert!(clips.iter().all(|(r, _)| !r.padded));

        assert_eq!(segment_into_clips(&buffer(10.0), "s").unwrap().len(), 3);

        let clips = segment_into_clips(&buffer(11.0), "s").unwrap();
        assert_eq!(clips.len(), 4);
        let (last, audio) = &clips[3];
        assert!(last.padded);
        assert_eq!(last.start_sec, 9.0);
        assert_eq!(audio.len(), 66_150);
        assert!(audio.samples[44_100..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn segmentation_rejects_short_buffer() {
        assert!(matches!(
            segment_into_clips(&buffer(1.4), "s"),
            Err(Error::TooShort { .. })
        ));
        let clips = segment_into_clips(&buffer(1.5), "s").unwrap();
        assert_eq!(clips.len(), 1);
        assert!(clips[0].0.padded);
    }

    #[test]
    fn rms_examples() {
        let c = AudioBuffer::new(vec![0.5; 100], 8000);
        assert!((rms(&c).unwrap() - 0.5).abs() < 1e-12);
        let z = AudioBuffer::new(vec![0.0; 100], 8000);
        assert_eq!(rms(&z).unwrap(), 0.0);
        let sine = AudioBuffer::new(
            (0..22_050)
                .map(|i| (2.0 * std::f64::consts::PI * 441.0 * i as f64 / 22_050.0).sin() as f32)
                .collect(),
            22_050,
        );
        assert!((rms(&sine).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01);
        assert!(matches!(
            rms(&AudioBuffer::new(vec![], 8000)),
            Err(Error::ZeroLengthAudio)
        ));
    }

    #[test]
    fn ingest_passthrough_at_canonical_rate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let buf = AudioBuffer::new(
            (0..66_150).map(|i| ((i as f32) * 0.01).sin() * 0.7).collect(),
            CANONICAL_RATE,
        );
        write_wav(&path, &buf).unwrap();
        let back = ingest_audio(&path, CANONICAL_RATE).unwrap();
        assert_eq!(back.len(), 66_150);
        assert_eq!(back, buf);
        // deterministic
        assert_eq!(ingest_audio(&path, CANONICAL_RATE).unwrap(), back);
    }

    #[test]
    fn ingest_stereo_downsamples_to_mono() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let frames = 88_200;
        let mut inter = Vec::with_capacity(frames * 2);
        for i in 0..frames {
            let v = ((i as f64 * 0.05).sin() * 8000.0) as i16;
            inter.push(v);
            inter.push(-v / 2);
        }
        write_pcm16(&path, 44_100, 2, &inter);
        let buf = ingest_audio(&path, CANONICAL_RATE).unwrap();
        assert_eq!(buf.sample_rate, CANONICAL_RATE);
        assert!((buf.len() as i64 - 44_100).abs() <= 1);
    }

    #[test]
    fn ingest_rejects_empty_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        write_pcm16(&path, 22_050, 1, &[]);
        assert!(matches!(
            ingest_audio(&path, CANONICAL_RATE),
            Err(Error::ZeroLengthAudio)
        ));
        let missing = ingest_audio(dir.path().join("nope.wav"), CANONICAL_RATE).unwrap_err();
        assert_eq!(missing.kind(), crate::ErrorKind::Io);
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"definitely not a riff header").unwrap();
        assert!(ingest_audio(&junk, CANONICAL_RATE).is_err());
    }

    proptest! {
        #[test]
        fn clip_count_and_lossless_prefix(n in 33_075usize..400_000) {
            let buf = AudioBuffer::new(
                (0..n).map(|i| ((i * 7919) % 1000) as f32 / 1000.0 - 0.5).collect(),
                CANONICAL_RATE,
            );
            let clips = segment_into_clips(&buf, "p").unwrap();
            let clip_len = 66_150;
            let expected = n / clip_len + usize::from(n % clip_len >= 33_075);
            prop_assert_eq!(clips.len(), expected);

            let joined: Vec<f32> = clips
                .iter()
                .filter(|(r, _)| !r.padded)
                .flat_map(|(_, a)| a.samples.iter().copied())
                .collect();
            prop_assert_eq!(&joined[..], &buf.samples[..joined.len()]);
            for (i, (r, _)) in clips.iter().enumerate() {
                prop_assert_eq!(r.clip_index as usize, i);
                prop_assert_eq!(r.start_sec, i as f64 * 3.0);
            }
        }
    }
}
