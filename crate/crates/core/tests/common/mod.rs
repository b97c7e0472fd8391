//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sanet::{CodecWeights, EmbeddingField, MaskSet, TFRepresentation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central finite-difference gradient of the reconstruction loss with respect
/// to every encoder entry, then every decoder entry. Evaluates the loss
/// directly and shares no code with the analytic backward pass.
pub fn finite_difference_gradient(clip: &[f64], c: &CodecWeights, h: f64) -> (Vec<f64>, Vec<f64>) {
    let (f, w, hop) = (c.feature_dim(), c.window(), c.hop());
    let loss = |enc: &[f64], dec: &[f64]| -> f64 {
        let frames = (clip.len() - w) / hop + 1;
        let len = (frames - 1) * hop + w;
        let mut y = vec![0.0; len];
        for t in 0..frames {
            for fi in 0..f {
                let mut z = 0.0;
                for k in 0..w {
                    z += enc[fi * w + k] * clip[t * hop + k];
                }
                let a = if z > 0.0 { z } else { 0.0 };
                for k in 0..w {
                    y[t * hop + k] += a * dec[fi * w + k];
                }
            }
        }
        y.iter().zip(clip).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / len as f64
    };
    let enc0 = c.encoder_kernel().to_vec();
    let dec0 = c.decoder_kernel().to_vec();
    let mut g_enc = vec![0.0; enc0.len()];
    let mut g_dec = vec![0.0; dec0.len()];
    for i in 0..enc0.len() {
        let mut p = enc0.clone();
        let mut m = enc0.clone();
        p[i] += h;
        m[i] -= h;
        g_enc[i] = (loss(&p, &dec0) - loss(&m, &dec0)) / (2.0 * h);
    }
    for i in 0..dec0.len() {
        let mut p = dec0.clone();
        let mut m = dec0.clone();
        p[i] += h;
        m[i] -= h;
        g_dec[i] = (loss(&enc0, &p) - loss(&enc0, &m)) / (2.0 * h);
    }
    (g_enc, g_dec)
}

/// `||a - b|| / max(||b||, 1e-12)` over the concatenation of both pairs.
pub fn relative_error(a: &[&[f64]], b: &[&[f64]]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.iter().zip(y.iter()) {
            num += (p - q).powi(2);
            den += q * q;
        }
    }
    num.sqrt() / den.sqrt().max(1e-12)
}

pub fn random_codec_instance(seed: u64, max_f: usize, max_n: usize) -> (Vec<f64>, CodecWeights) {
    let mut r = rng(seed);
    let f = r.random_range(1..=max_f);
    let n = r.random_range(16..=max_n);
    let clip: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let c = CodecWeights::init(f, 16, 8, seed.wrapping_add(1000)).unwrap();
    (clip, c)
}

pub fn random_tf(r: &mut ChaCha8Rng, frames: usize, fdim: usize, silent_fraction: f64) -> TFRepresentation {
    let v = (0..frames * fdim)
        .map(|_| {
            if r.random::<f64>() < silent_fraction {
                0.0
            } else {
                r.random_range(0.0..2.0)
            }
        })
        .collect();
    TFRepresentation::new(frames, fdim, v).unwrap()
}

pub fn random_field(r: &mut ChaCha8Rng, frames: usize, fdim: usize, d: usize) -> EmbeddingField {
    let v = (0..frames * fdim * d).map(|_| r.random_range(-1.0..1.0)).collect();
    EmbeddingField::new(frames, fdim, d, v).unwrap()
}

/// Random masks on the simplex in every bin.
pub fn random_masks(r: &mut ChaCha8Rng, frames: usize, fdim: usize, c: usize) -> MaskSet {
    let bins = frames * fdim;
    let mut masks = vec![vec![0.0; bins]; c];
    for tf in 0..bins {
        let raw: Vec<f64> = (0..c).map(|_| r.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        for i in 0..c {
            masks[i][tf] = raw[i] / s;
        }
    }
    MaskSet::new(frames, fdim, masks).unwrap()
}

/// Masks that give each source a random mixture of dominated and shared bins.
pub fn balanced_masks(r: &mut ChaCha8Rng, frames: usize, fdim: usize) -> MaskSet {
    let bins = frames * fdim;
    let m0: Vec<f64> = (0..bins).map(|_| r.random::<f64>()).collect();
    let m1: Vec<f64> = m0.iter().map(|v| 1.0 - v).collect();
    MaskSet::new(frames, fdim, vec![m0, m1]).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Best mean cosine between two pairs of attractors over both label
/// permutations, reported as the smaller of the two matched cosines.
pub fn matched_min_cosine(sim: &[Vec<f64>]) -> f64 {
    let straight = sim[0][0].min(sim[1][1]);
    let swapped = sim[0][1].min(sim[1][0]);
    straight.max(swapped)
}
