//! Phase-vocoder time scaling.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::dsp::Stft;

pub const WINDOW: usize = 2048;
pub const HOP: usize = 512;

/// Time-scales `signal` so that it plays `speed` times faster, keeping the
/// pitch. The result has exactly `round(len / speed)` samples.
pub fn time_scale(signal: &[f32], speed: f64) -> Vec<f32> {
    assert!(speed.is_finite() && speed > 0.0);
    let out_len = (signal.len() as f64 / speed).round() as usize;
    time_scale_to_len(signal, speed, out_len)
}

pub(crate) fn time_scale_to_len(signal: &[f32], speed: f64, out_len: usize) -> Vec<f32> {
    let stft = Stft::new(WINDOW);
    let bins = stft.bins();
    let half = (WINDOW / 2) as isize;
    let frames = out_len.div_ceil(HOP) + 1;

    let omega: Vec<f64> = (0..bins)
        .map(|k| 2.0 * PI * k as f64 / WINDOW as f64)
        .collect();

    let mut out = vec![0.0f64; out_len + WINDOW];
    let mut norm = vec![0.0f64; out_len + WINDOW];
    let mut spec = Vec::with_capacity(WINDOW);
    let mut scratch = Vec::with_capacity(WINDOW);
    let mut frame = vec![0.0f64; WINDOW];
    let mut synth = vec![Complex64::new(0.0, 0.0); bins];
    let mut prev_phase = vec![0.0f64; bins];
    let mut acc_phase = vec![0.0f64; bins];
    let mut prev_pos = 0isize;

    for m in 0..frames {
        // analysis centre in input samples
        let pos = (m as f64 * HOP as f64 * speed).round() as isize;
        stft.analyze(signal, pos - half, &mut spec);
        let hop_in = (pos - prev_pos) as f64;
        for k in 0..bins {
            let phase = spec[k].arg();
            if m == 0 {
                acc_phase[k] = phase;
            } else {
                let mut dev = phase - prev_phase[k] - omega[k] * hop_in;
                dev -= 2.0 * PI * (dev / (2.0 * PI)).round();
                let inst = omega[k] + dev / hop_in;
                acc_phase[k] += inst * HOP as f64;
            }
            prev_phase[k] = phase;
            synth[k] = Complex64::from_polar(spec[k].norm(), acc_phase[k]);
        }
        prev_pos = pos;

        stft.synthesize(&synth, &mut scratch, &mut frame);
        // output frame m is centred at m * HOP; `out` is offset by `half`
        let base = m * HOP;
        let end = (base + WINDOW).min(out.len());
        for (j, (&x, &w)) in (base..end).zip(frame.iter().zip(&stft.window)) {
            out[j] += x * w;
            norm[j] += w * w;
        }
    }

    (0..out_len)
        .map(|i| {
            let j = i + half as usize;
            let n = norm[j];
            if n > 1e-6 {
                (out[j] / n) as f32
            } else {
                0.0
            }
        })
        .collect()
}
