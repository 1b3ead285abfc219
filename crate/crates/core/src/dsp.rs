//! Short-time Fourier transform shared by the embedder and the phase vocoder.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Forward and inverse FFTs of a fixed size together with the analysis window.
#[derive(Clone)]
pub struct Stft {
    pub window_len: usize,
    pub window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("window_len", &self.window_len)
            .finish()
    }
}

impl Stft {
    pub fn new(window_len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            window_len,
            window: hann(window_len),
            forward: planner.plan_fft_forward(window_len),
            inverse: planner.plan_fft_inverse(window_len),
        }
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Windowed spectrum of the frame starting at `start` (may be negative or
    /// run past the end; missing samples are zero). Writes `bins()` values.
    pub fn analyze(&self, signal: &[f32], start: isize, buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend((0..self.window_len).map(|i| {
            let idx = start + i as isize;
            let s = if idx >= 0 && (idx as usize) < signal.len() {
                signal[idx as usize] as f64
            } else {
                0.0
            };
            Complex64::new(s * self.window[i], 0.0)
        }));
        self.forward.process(buf);
        buf.truncate(self.bins());
    }

    /// Inverse of a half spectrum (`bins()` values), unscaled by the window.
    /// Output is written into `out` (length `window_len`).
    pub fn synthesize(&self, half: &[Complex64], scratch: &mut Vec<Complex64>, out: &mut [f64]) {
        let n = self.window_len;
        scratch.clear();
        scratch.extend_from_slice(half);
        for k in (1..n - half.len() + 1).rev() {
            scratch.push(half[k].conj());
        }
        debug_assert_eq!(scratch.len(), n);
        self.inverse.process(scratch);
        let scale = 1.0 / n as f64;
        for (o, c) in out.iter_mut().zip(scratch.iter()) {
            *o = c.re * scale;
        }
    }
}

/// Number of centred frames covering `len` samples at `hop`.
pub fn frame_count(len: usize, hop: usize) -> usize {
    1 + len / hop
}
