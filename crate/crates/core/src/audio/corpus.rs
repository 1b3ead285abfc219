use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ingest_audio, segment_into_clips, AudioBuffer, ClipRecord, SongMeta, CLIP_SECONDS};
use crate::error::{Error, Result};

/// One line of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub song_id: String,
    pub title: String,
    pub artist: String,
    pub source_path: String,
}

/// Anything that can hand back the audio of a stored clip.
pub trait ClipSource: Sync {
    fn clip_audio(&self, clip: &ClipRecord) -> Result<AudioBuffer>;
}

/// Songs held in memory, keyed by song id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    songs: BTreeMap<String, (SongMeta, AudioBuffer)>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, meta: SongMeta, audio: AudioBuffer) -> Result<()> {
        if self.songs.contains_key(&meta.song_id) {
            return Err(Error::InvalidArgument(format!(
                "duplicate song id {:?}",
                meta.song_id
            )));
        }
        if audio.is_empty() {
            return Err(Error::ZeroLengthAudio);
        }
        self.songs.insert(meta.song_id.clone(), (meta, audio));
        Ok(())
    }

    /// Loads every song listed in a JSON-lines manifest. Relative paths are
    /// resolved against the manifest's directory.
    pub fn from_manifest(path: impl AsRef<Path>, sample_rate: u32) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut corpus = Corpus::new();
        for entry in read_manifest(path)? {
            let source = resolve(&base, &entry.source_path);
            let audio = ingest_audio(&source, sample_rate)?;
            let meta = SongMeta {
                total_duration_sec: audio.duration_sec(),
                song_id: entry.song_id,
                title: entry.title,
                artist: entry.artist,
                source_path: entry.source_path,
            };
            corpus.insert(meta, audio)?;
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.songs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.songs.is_empty()
    }

    pub fn song(&self, song_id: &str) -> Option<(&SongMeta, &AudioBuffer)> {
        self.songs.get(song_id).map(|(m, a)| (m, a))
    }

    pub fn meta_table(&self) -> BTreeMap<String, SongMeta> {
        self.songs
            .iter()
            .map(|(id, (m, _))| (id.clone(), m.clone()))
            .collect()
    }

    /// All clips of all songs, ordered by (song_id, clip_index). Songs too
    /// short to yield a clip are skipped.
    pub fn clips(&self) -> Result<Vec<(ClipRecord, AudioBuffer)>> {
        let mut out = Vec::new();
        for (id, (_, audio)) in &self.songs {
            match segment_into_clips(audio, id) {
                Ok(clips) => out.extend(clips),
                Err(Error::TooShort { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

impl ClipSource for Corpus {
    fn clip_audio(&self, clip: &ClipRecord) -> Result<AudioBuffer> {
        let unknown = || Error::UnknownClip {
            song_id: clip.song_id.clone(),
            clip_index: clip.clip_index,
        };
        let (_, audio) = self.songs.get(&clip.song_id).ok_or_else(unknown)?;
        let clip_len = audio.samples_for(CLIP_SECONDS);
        let start = clip.clip_index as usize * clip_len;
        if start >= audio.len() {
            return Err(unknown());
        }
        let end = (start + clip_len).min(audio.len());
        let mut samples = audio.samples[start..end].to_vec();
        samples.resize(clip_len, 0.0);
        Ok(AudioBuffer::new(samples, audio.sample_rate))
    }
}

pub(crate) fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let entries: Vec<ManifestEntry> = read_jsonl(path.as_ref())?;
    let mut seen = HashSet::new();
    for e in &entries {
        if !seen.insert(e.song_id.as_str()) {
            return Err(Error::Malformed(format!("duplicate song id {:?}", e.song_id)));
        }
    }
    Ok(entries)
}

pub fn write_clip_table(path: impl AsRef<Path>, clips: &[ClipRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), clips)
}

pub fn read_clip_table(path: impl AsRef<Path>) -> Result<Vec<ClipRecord>> {
    read_jsonl(path.as_ref())
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    write_jsonl(path.as_ref(), entries)
}

/// Writes song metadata as JSON lines, ordered by song id.
pub fn write_song_table(path: impl AsRef<Path>, songs: &BTreeMap<String, SongMeta>) -> Result<()> {
    let rows: Vec<&SongMeta> = songs.values().collect();
    write_jsonl(path.as_ref(), &rows)
}

pub fn read_song_table(path: impl AsRef<Path>) -> Result<BTreeMap<String, SongMeta>> {
    let rows: Vec<SongMeta> = read_jsonl(path.as_ref())?;
    let mut out = BTreeMap::new();
    for m in rows {
        if out.contains_key(&m.song_id) {
            return Err(Error::Malformed(format!("duplicate song id {:?}", m.song_id)));
        }
        out.insert(m.song_id.clone(), m);
    }
    Ok(out)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::Malformed(format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Invariant(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
