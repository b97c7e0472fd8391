//! Deterministic synthetic "speakers" for corpus-free runs: harmonic tone
//! complexes and band-limited noise, both gated by a syllable-like envelope.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::Waveform;

const PEAK: f64 = 0.5;

pub fn sinusoid(freq: f64, seconds: f64, sample_rate: u32, amplitude: f64) -> Waveform {
    let n = (seconds * f64::from(sample_rate)).round() as usize;
    let sr = f64::from(sample_rate);
    Waveform::from_parts_unchecked(
        (0..n).map(|i| amplitude * (2.0 * PI * freq * i as f64 / sr).sin()).collect(),
        sample_rate,
    )
}

/// On/off gating with 120-350 ms voiced segments, 40-200 ms pauses and
/// 10 ms raised-cosine ramps.
fn syllable_envelope(n: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = f64::from(sample_rate);
    let ramp = ((0.01 * sr) as usize).max(1);
    let mut env = vec![0.0; n];
    let mut pos = (rng.random_range(0.0..0.1) * sr) as usize;
    while pos < n {
        let on = (rng.random_range(0.12..0.35) * sr) as usize;
        let end = (pos + on).min(n);
        for (i, e) in env[pos..end].iter_mut().enumerate() {
            let up = (i as f64 / ramp as f64).min(1.0);
            let down = ((end - pos - i) as f64 / ramp as f64).min(1.0);
            *e = 0.5 - 0.5 * (PI * up.min(down)).cos();
        }
        pos = end + (rng.random_range(0.04..0.2) * sr) as usize;
    }
    env
}

fn peak_normalize(mut x: Vec<f64>) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut x {
            *v *= PEAK / peak;
        }
    }
    x
}

/// Harmonic complex: fundamental in 110-220 Hz, harmonics below 2 kHz with
/// 1/h amplitudes, slow vibrato, syllable gating. Peak 0.5.
pub fn multi_tone(seconds: f64, sample_rate: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = f64::from(sample_rate);
    let n = (seconds * sr).round() as usize;
    let f0 = rng.random_range(110.0..220.0);
    let vibrato_rate = rng.random_range(3.0..6.0);
    let harmonics = ((2000.0 / f0) as usize).max(1);
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let env = syllable_envelope(n, sample_rate, &mut rng);
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(n);
    for (i, e) in env.iter().enumerate() {
        let t = i as f64 / sr;
        let f = f0 * (1.0 + 0.02 * (2.0 * PI * vibrato_rate * t).sin());
        phase += 2.0 * PI * f / sr;
        let s: f64 = phases
            .iter()
            .enumerate()
            .map(|(h, p)| ((h + 1) as f64 * phase + p).sin() / (h + 1) as f64)
            .sum();
        out.push(e * s);
    }
    Waveform::from_parts_unchecked(peak_normalize(out), sample_rate)
}

/// Gaussian noise through two cascaded band-pass biquads centred in
/// 3-5 kHz, syllable gating. Peak 0.5.
pub fn filtered_noise(seconds: f64, sample_rate: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = f64::from(sample_rate);
    let n = (seconds * sr).round() as usize;
    let fc = rng.random_range(3000.0..5000.0f64).min(0.45 * sr);
    let q = 1.2;
    let w0 = 2.0 * PI * fc / sr;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let env = syllable_envelope(n, sample_rate, &mut rng);
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let biquad = |x: &[f64]| -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = b0 * x0 + b2 * x2 - a1 * y1 - a2 * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    };
    let y = biquad(&biquad(&noise));
    let out = y.iter().zip(&env).map(|(a, b)| a * b).collect();
    Waveform::from_parts_unchecked(peak_normalize(out), sample_rate)
}

/// Synthetic room impulse response: a direct-path impulse followed, after
/// a 2-10 ms gap, by Gaussian noise decaying with an RT60 drawn from
/// 0.2-0.6 s. The direct path has amplitude 0.9.
pub fn room_impulse_response(seconds: f64, sample_rate: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = f64::from(sample_rate);
    let n = ((seconds * sr).round() as usize).max(1);
    let rt60 = rng.random_range(0.2..0.6);
    let gap = (rng.random_range(0.002..0.01) * sr) as usize;
    // amplitude falls by 60 dB (factor 1000) over rt60 seconds
    let decay = 1000f64.ln() / (rt60 * sr);
    let mut h = vec![0.0; n];
    h[0] = 1.0;
    for (i, v) in h.iter_mut().enumerate().skip(gap.max(1)) {
        let z: f64 = rng.sample(StandardNormal);
        *v = 0.2 * z.clamp(-4.0, 4.0) * (-decay * i as f64).exp();
    }
    Waveform::from_parts_unchecked(h.into_iter().map(|v| 0.9 * v).collect(), sample_rate)
}

/// Alternating tone and noise clips totalling `total_seconds`.
pub fn corpus(total_seconds: f64, clip_seconds: f64, sample_rate: u32, seed: u64) -> Vec<Waveform> {
    let clips = (total_seconds / clip_seconds).round().max(1.0) as u64;
    (0..clips)
        .map(|i| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i);
            if i % 2 == 0 {
                multi_tone(clip_seconds, sample_rate, s)
            } else {
                filtered_noise(clip_seconds, sample_rate, s)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded_and_bounded() {
        for g in [multi_tone, filtered_noise] {
            let a = g(0.5, 16_000, 4);
            assert_eq!(a, g(0.5, 16_000, 4));
            assert_ne!(a, g(0.5, 16_000, 5));
            assert_eq!(a.len(), 8000);
            let peak = a.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((peak - PEAK).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_has_pauses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let env = syllable_envelope(16_000, 16_000, &mut rng);
        assert!(env.iter().any(|&e| e == 0.0));
        assert!(env.iter().any(|&e| e == 1.0));
    }

    #[test]
    fn rir_starts_with_direct_path() {
        let h = room_impulse_response(0.3, 16_000, 3);
        assert_eq!(h.len(), 4800);
        assert!((h.samples()[0] - 0.9).abs() < 1e-12);
        assert!(h.samples()[1..].iter().all(|v| v.abs() <= 0.9));
        let tail: f64 = h.samples()[4000..].iter().map(|v| v.abs()).sum();
        let head: f64 = h.samples()[1..801].iter().map(|v| v.abs()).sum();
        assert!(tail < head);
    }

    #[test]
    fn corpus_length() {
        let c = corpus(4.0, 1.0, 16_000, 2);
        assert_eq!(c.len(), 4);
    }
}
