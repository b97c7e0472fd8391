//! Mixture and reverberation conditions, SI-SDR, and the end-to-end
//! separation pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::attractor::{spherical_kmeans, AttractorSet, KMeansOptions};
use crate::audio::Waveform;
use crate::codec::{CodecWeights, TFRepresentation};
use crate::embedder::Embedder;
use crate::error::{Error, Result};
use crate::masking::{apply_mask, energy_weights, estimate_masks, MaskSet};

pub const MIN_GAIN: f64 = 0.25;
pub const MAX_GAIN: f64 = 0.75;
pub const SI_SDR_CAP_DB: f64 = 100.0;
const SI_SDR_EPS: f64 = 1e-12;
const DIRECT_CONV_LIMIT: usize = 1 << 20;

/// Gain and seed describing one two-source mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    pub gain: f64,
    pub seed: u64,
    /// Optional cap on the output length in samples.
    pub truncate_to: Option<usize>,
}

impl MixSpec {
    pub fn new(gain: f64, seed: u64) -> Result<Self> {
        check_gain(gain)?;
        Ok(MixSpec {
            gain,
            seed,
            truncate_to: None,
        })
    }

    /// Gain drawn with [`sample_gain`].
    pub fn sampled(seed: u64) -> Self {
        MixSpec {
            gain: sample_gain(seed),
            seed,
            truncate_to: None,
        }
    }
}

fn check_gain(r: f64) -> Result<()> {
    if !(MIN_GAIN..=MAX_GAIN).contains(&r) {
        return Err(Error::Parameter(format!(
            "gain {r} outside the allowed range [{MIN_GAIN}, {MAX_GAIN}]"
        )));
    }
    Ok(())
}

/// `r * a + (1 - r) * b`, truncated to the shorter input.
pub fn mix(a: &Waveform, b: &Waveform, r: f64) -> Result<Waveform> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::RateMismatch(a.sample_rate(), b.sample_rate()));
    }
    check_gain(r)?;
    let samples = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| r * x + (1.0 - r) * y)
        .collect();
    Ok(Waveform::from_parts_unchecked(samples, a.sample_rate()))
}

/// Mixes according to a [`MixSpec`], applying its truncation.
pub fn mix_with(a: &Waveform, b: &Waveform, spec: &MixSpec) -> Result<Waveform> {
    let out = mix(a, b, spec.gain)?;
    Ok(match spec.truncate_to {
        Some(n) => out.truncated(n),
        None => out,
    })
}

/// Uniform draw from `[0.25, 0.75]`.
pub fn sample_gain(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.random_range(MIN_GAIN..=MAX_GAIN)
}

/// Linear convolution with a room impulse response, truncated to the input
/// length and rescaled to the input's RMS.
pub fn convolve_rir(x: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if x.sample_rate() != rir.sample_rate() {
        return Err(Error::RateMismatch(x.sample_rate(), rir.sample_rate()));
    }
    if rir.is_empty() {
        return Err(Error::Input("impulse response is empty".into()));
    }
    let n = x.len();
    let mut out = if n.saturating_mul(rir.len()) <= DIRECT_CONV_LIMIT {
        direct_convolution(x.samples(), rir.samples(), n)
    } else {
        fft_convolution(x.samples(), rir.samples(), n)
    };
    let target = x.rms();
    let got = rms(&out);
    if got > 0.0 {
        let g = target / got;
        for v in &mut out {
            *v *= g;
        }
    }
    Waveform::new(out, x.sample_rate())
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }
}

fn direct_convolution(x: &[f64], h: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(h.len() - 1);
        let mut acc = 0.0;
        for j in lo..=i {
            acc += x[j] * h[i - j];
        }
        *o = acc;
    }
    out
}

fn fft_convolution(x: &[f64], h: &[f64], len: usize) -> Vec<f64> {
    let size = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |s: &[f64]| -> Vec<Complex<f64>> {
        let mut v: Vec<Complex<f64>> = s.iter().map(|&r| Complex::new(r, 0.0)).collect();
        v.resize(size, Complex::new(0.0, 0.0));
        v
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a.iter().take(len).map(|c| c.re / size as f64).collect()
}

/// Scale-invariant SDR in dB, after removing the mean of both signals.
pub fn si_sdr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    si_sdr_samples(estimate.samples(), reference.samples(), true)
}

/// SI-SDR on raw slices; `center` controls mean removal. Capped at +100 dB.
pub fn si_sdr_samples(estimate: &[f64], reference: &[f64], center: bool) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Input("signals are empty".into()));
    }
    let mean = |x: &[f64]| if center { x.iter().sum::<f64>() / x.len() as f64 } else { 0.0 };
    let (me, mr) = (mean(estimate), mean(reference));
    let s: Vec<f64> = reference.iter().map(|v| v - mr).collect();
    let e: Vec<f64> = estimate.iter().map(|v| v - me).collect();
    let ss: f64 = s.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return Err(Error::Input("reference is all zero".into()));
    }
    let scale = e.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / ss;
    let mut target = 0.0;
    let mut noise = 0.0;
    for (ev, sv) in e.iter().zip(&s) {
        let t = scale * sv;
        target += t * t;
        noise += (ev - t) * (ev - t);
    }
    Ok((10.0 * (target / (noise + SI_SDR_EPS)).log10()).min(SI_SDR_CAP_DB))
}

/// Output of [`separate`].
#[derive(Debug, Clone)]
pub struct Separation {
    pub estimates: Vec<Waveform>,
    pub attractors: AttractorSet,
    pub masks: MaskSet,
    pub mixture_tf: TFRepresentation,
}

/// Full inference pipeline: encode, embed, weight, cluster into `k`
/// attractors, estimate soft masks, mask and decode each source.
pub fn separate(
    mixture: &Waveform,
    codec: &CodecWeights,
    embedder: &Embedder,
    k: usize,
    temperature: f64,
    seed: u64,
) -> Result<Separation> {
    mixture.require_separation_rate()?;
    let e_x = codec.encode(mixture)?;
    let v = embedder.embed(&e_x, codec)?;
    let w = energy_weights(&e_x)?;
    let km = spherical_kmeans(&v, &w, k, seed, &KMeansOptions::default())?;
    let masks = estimate_masks(&v, &km.attractors, temperature)?;
    let estimates = masks
        .masks()
        .iter()
        .map(|m| codec.decode(&apply_mask(&e_x, m)?, mixture.sample_rate()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Separation {
        estimates,
        attractors: km.attractors,
        masks,
        mixture_tf: e_x,
    })
}

/// Pairs estimates with references to maximize mean SI-SDR. Returns, for each
/// reference, the index of its estimate and the SI-SDR achieved. References
/// are compared over the estimate length.
pub fn match_estimates(estimates: &[Waveform], references: &[Waveform]) -> Result<Vec<(usize, f64)>> {
    if estimates.len() != references.len() || estimates.is_empty() {
        return Err(Error::Dimension(format!(
            "{} estimates for {} references",
            estimates.len(),
            references.len()
        )));
    }
    if estimates.len() > 8 {
        return Err(Error::Parameter("permutation matching supports at most 8 sources".into()));
    }
    let n = estimates.len();
    let mut table = vec![vec![0.0; n]; n];
    for (r, reference) in references.iter().enumerate() {
        for (e, est) in estimates.iter().enumerate() {
            let len = est.len().min(reference.len());
            table[r][e] = si_sdr_samples(&est.samples()[..len], &reference.samples()[..len], true)?;
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::NEG_INFINITY, perm.clone());
    permute(&mut perm, 0, &mut |p| {
        let score: f64 = p.iter().enumerate().map(|(r, &e)| table[r][e]).sum();
        if score > best.0 {
            best = (score, p.to_vec());
        }
    });
    Ok(best.1.iter().enumerate().map(|(r, &e)| (e, table[r][e])).collect())
}

fn permute(p: &mut Vec<usize>, at: usize, visit: &mut impl FnMut(&[usize])) {
    if at == p.len() {
        visit(p);
        return;
    }
    for i in at..p.len() {
        p.swap(at, i);
        permute(p, at + 1, visit);
        p.swap(at, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: Vec<f64>) -> Waveform {
        Waveform::new(v, 16_000).unwrap()
    }

    #[test]
    fn mix_cases() {
        let a = w(vec![0.1, -0.2, 0.3, 0.4]);
        assert_eq!(mix(&a, &a, 0.5).unwrap(), a);
        let z = w(vec![0.0; 3]);
        let m = mix(&a, &z, 0.75).unwrap();
        assert_eq!(m.samples(), &[0.75 * 0.1, 0.75 * -0.2, 0.75 * 0.3]);
        assert!(matches!(mix(&a, &a, 0.2), Err(Error::Parameter(_))));
        let other = Waveform::new(vec![0.0; 4], 8000).unwrap();
        assert!(matches!(mix(&a, &other, 0.5), Err(Error::RateMismatch(..))));
    }

    #[test]
    fn gain_draws() {
        assert_eq!(sample_gain(3), sample_gain(3));
        let draws: Vec<f64> = (0..10_000).map(sample_gain).collect();
        assert!(draws.iter().all(|g| (MIN_GAIN..=MAX_GAIN).contains(g)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() <= 0.01, "mean {mean}");
    }

    #[test]
    fn impulse_rirs() {
        let x = w((0..50).map(|i| (i as f64 * 0.3).sin() * 0.5).collect());
        let y = convolve_rir(&x, &w(vec![1.0])).unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() <= 1e-9);
        }
        let mut h = vec![0.0; 4];
        h[3] = 1.0;
        let y = convolve_rir(&x, &w(h)).unwrap();
        assert_eq!(y.len(), x.len());
        let kept: f64 = x.samples()[..47].iter().map(|v| v * v).sum();
        let g = x.rms() / (kept / 50.0).sqrt();
        for i in 3..50 {
            assert!((y.samples()[i] - g * x.samples()[i - 3]).abs() <= 1e-12);
        }
        assert!((y.rms() - x.rms()).abs() < 1e-12);
    }

    #[test]
    fn fft_matches_direct() {
        let x: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let h: Vec<f64> = (0..40).map(|i| (-(i as f64) / 9.0).exp() * if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        let d = direct_convolution(&x, &h, x.len());
        let f = fft_convolution(&x, &h, x.len());
        for (a, b) in d.iter().zip(&f) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn si_sdr_cases() {
        let s = w((0..64).map(|i| (i as f64 * 0.2).sin()).collect());
        assert_eq!(si_sdr(&s, &s).unwrap(), SI_SDR_CAP_DB);
        let v = si_sdr_samples(&[1.0, 1.0], &[1.0, 0.0], false).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
        let n = w((0..64).map(|i| (i as f64 * 0.2).sin() + 0.3 * (i as f64 * 1.7).cos()).collect());
        let base = si_sdr(&n, &s).unwrap();
        for a in [0.1, 10.0] {
            assert!((si_sdr(&n.scaled(a), &s).unwrap() - base).abs() <= 1e-6);
        }
        assert!(matches!(si_sdr(&s, &w(vec![0.0; 64])), Err(Error::Input(_))));
        assert!(matches!(si_sdr(&s, &w(vec![0.0; 63])), Err(Error::Dimension(_))));
    }

    #[test]
    fn matching_finds_swap() {
        let a = w((0..64).map(|i| (i as f64 * 0.2).sin()).collect());
        let b = w((0..64).map(|i| (i as f64 * 0.9).cos()).collect());
        let m = match_estimates(&[b.clone(), a.clone()], &[a, b]).unwrap();
        assert_eq!(m[0].0, 1);
        assert_eq!(m[1].0, 0);
    }
}
