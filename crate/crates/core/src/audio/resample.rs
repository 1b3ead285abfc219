//! Band-limited resampling with a Kaiser-windowed sinc kernel.
//!
//! The kernel is tabulated once per resampler at a fine sub-sample resolution
//! and evaluated with linear interpolation, so arbitrary (non-rational) ratios
//! cost the same as rational ones.

use std::f64::consts::PI;

/// Zero crossings of the sinc on each side of the centre tap.
const ZERO_CROSSINGS: f64 = 32.0;
/// Table entries per input sample.
const OVERSAMPLE: usize = 256;
/// Kaiser window shape; roughly 90 dB stop-band attenuation.
const KAISER_BETA: f64 = 9.0;
/// Cut-off as a fraction of the lower of the two Nyquist frequencies.
const ROLLOFF: f64 = 0.97;

#[derive(Debug, Clone)]
pub struct Resampler {
    /// Input samples advanced per output sample.
    step: f64,
    /// Kernel half-width in input samples.
    half_width: f64,
    table: Vec<f64>,
}

impl Resampler {
    /// `out_per_in` is the output/input length ratio (2.0 doubles the rate).
    pub fn new(out_per_in: f64) -> Self {
        assert!(out_per_in.is_finite() && out_per_in > 0.0);
        // Normalised cut-off, in cycles per input sample.
        let fc = 0.5 * ROLLOFF * out_per_in.min(1.0);
        let half_width = ZERO_CROSSINGS / (2.0 * fc);
        let len = (half_width * OVERSAMPLE as f64).ceil() as usize + 2;
        let norm = bessel_i0(KAISER_BETA);
        let table = (0..len)
            .map(|i| {
                let t = i as f64 / OVERSAMPLE as f64;
                if t >= half_width {
                    return 0.0;
                }
                let r = t / half_width;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                2.0 * fc * sinc(2.0 * fc * t) * window
            })
            .collect();
        Self {
            step: 1.0 / out_per_in,
            half_width,
            table,
        }
    }

    #[inline]
    fn kernel(&self, t: f64) -> f64 {
        let pos = t.abs() * OVERSAMPLE as f64;
        let i = pos as usize;
        if i + 1 >= self.table.len() {
            return 0.0;
        }
        let frac = pos - i as f64;
        self.table[i] + (self.table[i + 1] - self.table[i]) * frac
    }

    /// Produces exactly `out_len` samples, the `n`-th taken at input time
    /// `n * step`. Samples outside the input are treated as zero.
    pub fn process(&self, input: &[f32], out_len: usize) -> Vec<f32> {
        let n_in = input.len() as isize;
        (0..out_len)
            .map(|n| {
                let t = n as f64 * self.step;
                let lo = ((t - self.half_width).ceil() as isize).max(0);
                let hi = ((t + self.half_width).floor() as isize).min(n_in - 1);
                let mut acc = 0.0f64;
                for k in lo..=hi {
                    acc += input[k as usize] as f64 * self.kernel(t - k as f64);
                }
                acc as f32
            })
            .collect()
    }
}

/// Resamples `input` from `from_rate` to `to_rate`; output length is
/// `round(len * to_rate / from_rate)`.
pub fn resample(input: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if from_rate == to_rate {
        return input.to_vec();
    }
    let out_len = (input.len() as f64 * to_rate as f64 / from_rate as f64).round() as usize;
    resample_to_len(input, out_len)
}

/// Stretches or squeezes `input` onto exactly `out_len` samples.
pub fn resample_to_len(input: &[f32], out_len: usize) -> Vec<f32> {
    if out_len == input.len() {
        return input.to_vec();
    }
    if input.is_empty() {
        return vec![0.0; out_len];
    }
    let ratio = out_len as f64 / input.len() as f64;
    Resampler::new(ratio).process(input, out_len)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-12 * sum {
        term *= (half / k) * (half / k);
        sum += term;
        k += 1.0;
    }
    sum
}
