//! Browser bindings for the separation demo. Every export takes plain numbers
//! and returns a JSON string; errors come back as `{"error": "..."}`.

use std::cell::RefCell;

use sanet::{
    match_estimates, mix, pretrain_codec, random_unit_attractors, reconstruction_si_sdr, separate,
    si_sdr, spherical_kmeans, synth, CodecWeights, Embedder, EmbeddingField, EnergyWeight, KMeansOptions, OracleSpec,
    PretrainConfig, Waveform,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SR: u32 = 16_000;
const PLOT_POINTS: usize = 400;
const MASK_COLUMNS: usize = 200;

thread_local! {
    static CODEC: RefCell<Option<CodecWeights>> = const { RefCell::new(None) };
}

fn to_json<T: Serialize>(r: sanet::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

/// Codec used by the separation demo, trained once per page load.
fn demo_codec() -> sanet::Result<CodecWeights> {
    CODEC.with(|cell| {
        if let Some(c) = cell.borrow().as_ref() {
            return Ok(c.clone());
        }
        let corpus = synth::corpus(60.0, 2.0, SR, 1);
        let cfg = PretrainConfig {
            steps: 2000,
            learning_rate: 10.0,
            batch_frames: 256,
            seed: 1,
        };
        let c = pretrain_codec(&corpus, CodecWeights::init(32, 16, 8, 1)?, &cfg)?.weights;
        *cell.borrow_mut() = Some(c.clone());
        Ok(c)
    })
}

/// Min/max envelope in `PLOT_POINTS` buckets.
#[derive(Serialize)]
struct Envelope {
    min: Vec<f64>,
    max: Vec<f64>,
}

fn envelope(w: &Waveform) -> Envelope {
    let s = w.samples();
    let size = s.len().div_ceil(PLOT_POINTS).max(1);
    let (min, max) = s
        .chunks(size)
        .map(|c| {
            c.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        })
        .unzip();
    Envelope { min, max }
}

/// Frame-averaged mask, `columns x feature_dim`, row-major by column.
fn mask_image(mask: &[f64], frames: usize, fdim: usize) -> Vec<f64> {
    let size = frames.div_ceil(MASK_COLUMNS).max(1);
    let mut out = Vec::new();
    for start in (0..frames).step_by(size) {
        let end = (start + size).min(frames);
        for f in 0..fdim {
            let sum: f64 = (start..end).map(|t| mask[t * fdim + f]).sum();
            out.push(sum / (end - start) as f64);
        }
    }
    out
}

#[derive(Serialize)]
struct SeparationDemo {
    gain: f64,
    sources: Vec<Envelope>,
    mixture: Envelope,
    estimates: Vec<Envelope>,
    /// SI-SDR of the matched estimate for each source.
    estimate_si_sdr: Vec<f64>,
    mixture_si_sdr: Vec<f64>,
    mask_columns: usize,
    feature_dim: usize,
    masks: Vec<Vec<f64>>,
    mask_energy: Vec<f64>,
}

/// Mixes a harmonic tone with band-limited noise, separates the mixture with
/// an oracle embedder and reports waveforms, masks and SI-SDR.
#[wasm_bindgen]
pub fn separation_demo(seed: u32, gain: f64, noise_sigma: f64, temperature: f64) -> String {
    to_json(run_separation(u64::from(seed), gain, noise_sigma, temperature))
}

fn run_separation(seed: u64, gain: f64, sigma: f64, temperature: f64) -> sanet::Result<SeparationDemo> {
    let codec = demo_codec()?;
    let a = synth::multi_tone(0.5, SR, 1000 + seed);
    let b = synth::filtered_noise(0.5, SR, 2000 + seed);
    let mixture = mix(&a, &b, gain)?;
    let refs = vec![a.scaled(gain), b.scaled(1.0 - gain)];
    let embedder = Embedder::Oracle(OracleSpec {
        sources: refs.clone(),
        attractors: random_unit_attractors(2, 128, 0.0, 3000 + seed)?,
        noise_sigma: sigma,
        seed,
    });
    let sep = separate(&mixture, &codec, &embedder, 2, temperature, seed)?;
    let n = sep.estimates[0].len();
    let refs: Vec<Waveform> = refs.iter().map(|r| r.truncated(n)).collect();
    let matched = match_estimates(&sep.estimates, &refs)?;
    let mix_n = mixture.truncated(n);
    let frames = sep.masks.frames();
    let fdim = sep.masks.feature_dim();
    Ok(SeparationDemo {
        gain,
        sources: refs.iter().map(envelope).collect(),
        mixture: envelope(&mix_n),
        estimates: matched.iter().map(|&(i, _)| envelope(&sep.estimates[i])).collect(),
        estimate_si_sdr: matched.iter().map(|m| m.1).collect(),
        mixture_si_sdr: refs.iter().map(|r| si_sdr(&mix_n, r)).collect::<sanet::Result<_>>()?,
        mask_columns: frames.div_ceil(frames.div_ceil(MASK_COLUMNS).max(1)),
        feature_dim: fdim,
        masks: matched
            .iter()
            .map(|&(i, _)| mask_image(sep.masks.mask(i), frames, fdim))
            .collect(),
        mask_energy: matched.iter().map(|&(i, _)| sep.attractors.mask_energy()[i]).collect(),
    })
}

#[derive(Serialize)]
struct CircleClustering {
    points: Vec<[f64; 2]>,
    labels: Vec<usize>,
    centers: Vec<[f64; 2]>,
    truth: Vec<[f64; 2]>,
    objective: Vec<f64>,
}

/// Spherical K-means on noisy points around `k` random directions in the plane.
#[wasm_bindgen]
pub fn kmeans_circle(seed: u32, k: u32, points: u32, spread: f64) -> String {
    to_json(run_kmeans(u64::from(seed), k as usize, points as usize, spread))
}

fn run_kmeans(seed: u64, k: usize, n: usize, spread: f64) -> sanet::Result<CircleClustering> {
    if !(1..=8).contains(&k) {
        return Err(sanet::Error::Parameter("k must be between 1 and 8".into()));
    }
    let truth = random_unit_attractors(k, 2, (std::f64::consts::PI / k as f64).cos().max(-1.0), seed)?;
    let per_class = n.div_ceil(k).max(1);
    let masks = (0..k)
        .map(|c| (0..per_class * k).map(|i| f64::from(i / per_class == c)).collect())
        .collect();
    let masks = sanet::MaskSet::new(per_class * k, 1, masks)?;
    let v: EmbeddingField = sanet::oracle_embed(&masks, &truth, spread, seed)?;
    let w = EnergyWeight::uniform(per_class * k, 1);
    let out = spherical_kmeans(&v, &w, k, seed, &KMeansOptions::default())?;
    let pair = |r: &[f64]| [r[0], r[1]];
    Ok(CircleClustering {
        points: v.rows().map(pair).collect(),
        labels: out.assignment.labels.clone(),
        centers: out.attractors.vectors().iter().map(|c| pair(c)).collect(),
        truth: truth.vectors().iter().map(|c| pair(c)).collect(),
        objective: out.objective_trace,
    })
}

#[derive(Serialize)]
struct TrainingCurve {
    /// Mean loss over consecutive blocks of `block` steps.
    block_loss: Vec<f64>,
    block: usize,
    si_sdr_before: f64,
    si_sdr_after: f64,
}

/// Pretrains a codec on a short synthetic corpus and returns its loss curve.
#[wasm_bindgen]
pub fn pretrain_curve(feature_dim: u32, learning_rate: f64, steps: u32, seed: u32) -> String {
    to_json(run_pretrain(feature_dim as usize, learning_rate, steps as usize, u64::from(seed)))
}

fn run_pretrain(fdim: usize, lr: f64, steps: usize, seed: u64) -> sanet::Result<TrainingCurve> {
    let corpus = synth::corpus(10.0, 1.0, SR, seed);
    let init = CodecWeights::init(fdim, 16, 8, seed)?;
    let before = reconstruction_si_sdr(&corpus, &init)?;
    let cfg = PretrainConfig {
        steps,
        learning_rate: lr,
        batch_frames: 256,
        seed,
    };
    let out = pretrain_codec(&corpus, init, &cfg)?;
    let block = (steps / 100).max(1);
    Ok(TrainingCurve {
        block_loss: out
            .losses
            .chunks(block)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect(),
        block,
        si_sdr_before: before,
        si_sdr_after: reconstruction_si_sdr(&corpus, &out.weights)?,
    })
}


#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn separation_reports_two_sources() {
        let v = parse(&separation_demo(0, 0.6, 0.05, 0.1));
        assert!(v.get("error").is_none(), "{v}");
        assert_eq!(v["estimates"].as_array().unwrap().len(), 2);
        let est: Vec<f64> = v["estimate_si_sdr"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let base: Vec<f64> = v["mixture_si_sdr"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(est.iter().sum::<f64>() > base.iter().sum::<f64>());
        let cols = v["mask_columns"].as_u64().unwrap() as usize;
        assert_eq!(v["masks"][0].as_array().unwrap().len(), cols * 32);
    }

    #[test]
    fn bad_gain_is_an_error() {
        assert!(parse(&separation_demo(0, 0.9, 0.05, 0.1)).get("error").is_some());
    }

    #[test]
    fn circle_clustering_labels_every_point() {
        let v = parse(&kmeans_circle(3, 3, 90, 0.2));
        assert_eq!(v["points"].as_array().unwrap().len(), 90);
        assert_eq!(v["labels"].as_array().unwrap().len(), 90);
        assert_eq!(v["centers"].as_array().unwrap().len(), 3);
        assert!(parse(&kmeans_circle(3, 0, 90, 0.2)).get("error").is_some());
        for k in 1..=8 {
            for seed in 0..5 {
                let v = parse(&kmeans_circle(seed, k, 200, 0.3));
                assert!(v.get("error").is_none(), "k={k} seed={seed}: {v}");
            }
        }
    }

    #[test]
    fn training_improves_reconstruction() {
        let v = parse(&pretrain_curve(16, 10.0, 300, 2));
        assert!(v["si_sdr_after"].as_f64().unwrap() > v["si_sdr_before"].as_f64().unwrap());
        assert_eq!(v["block_loss"].as_array().unwrap().len(), 100);
    }
}
