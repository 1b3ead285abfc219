//! Clip-level similarity search and training-data attribution for music.
//!
//! Songs are cut into 3-second clips, each clip is embedded as a unit-norm
//! vector, and the vectors are indexed for top-k cosine search. On top of
//! that sit song-level attribution reports, similarity calibration with ABX
//! listening-trial tooling, and perturbation-robustness sweeps.

pub mod attribution;
pub mod audio;
pub mod calibrate;
mod dsp;
pub mod embed;
mod error;
pub mod index;
pub mod perturb;
pub mod synth;
pub mod workbench;

pub use audio::{AudioBuffer, ClipRecord, SongMeta};
pub use embed::{cosine_similarity, Embedder, EmbedderConfig, Embedding};
pub use error::{Error, ErrorKind, Result};
pub use index::{Hit, IndexConfig, SearchMode, VectorIndex};
