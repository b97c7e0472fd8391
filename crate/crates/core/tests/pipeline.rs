mod common;

use std::sync::OnceLock;

use common::*;
use sanet::*;

const SR: u32 = 16_000;

fn tiny_codec() -> &'static CodecWeights {
    static CODEC: OnceLock<CodecWeights> = OnceLock::new();
    CODEC.get_or_init(|| {
        let corpus = synth::corpus(60.0, 2.0, SR, 1);
        let cfg = PretrainConfig {
            steps: 2000,
            learning_rate: 10.0,
            batch_frames: 256,
            seed: 1,
        };
        pretrain_codec(&corpus, CodecWeights::init(32, 16, 8, 1).unwrap(), &cfg)
            .unwrap()
            .weights
    })
}

fn oracle(sources: Vec<Waveform>, fixture_seed: u64, sigma: f64, seed: u64) -> (Embedder, AttractorSet) {
    let fixtures = random_unit_attractors(sources.len(), 128, 0.0, fixture_seed).unwrap();
    let e = Embedder::Oracle(OracleSpec {
        sources,
        attractors: fixtures.clone(),
        noise_sigma: sigma,
        seed,
    });
    (e, fixtures)
}

#[test]
fn noiseless_oracle_closes_the_loop() {
    let mut r = rng(11);
    let fixtures = random_unit_attractors(2, 32, 0.0, 5).unwrap();
    let masks = balanced_masks(&mut r, 20, 8);
    let v = oracle_embed(&masks, &fixtures, 0.0, 0).unwrap();
    let w = energy_weights(&random_tf(&mut r, 20, 8, 0.0)).unwrap();

    let dominant: Vec<Vec<f64>> = (0..2)
        .map(|i| (0..masks.bins()).map(|tf| f64::from(masks.dominant_source(tf) == i)).collect())
        .collect();
    let hard = MaskSet::new(20, 8, dominant).unwrap();
    let closed = ideal_attractors(&v, &w, &hard).unwrap();
    let sim = attractor_similarity(&closed, &fixtures).unwrap();
    assert!(sim[0][0] >= 1.0 - 1e-9 && sim[1][1] >= 1.0 - 1e-9);

    let km = spherical_kmeans(&v, &w, 2, 3, &KMeansOptions::default()).unwrap();
    let sim = attractor_similarity(&km.attractors, &fixtures).unwrap();
    assert!(matched_min_cosine(&sim) >= 1.0 - 1e-9);
}

#[test]
fn extraction_recovers_fixtures_and_orders_energy() {
    let codec = tiny_codec();
    let a = synth::multi_tone(0.5, SR, 21);
    let b = synth::filtered_noise(0.5, SR, 22);
    let mixture = mix(&a, &b, 0.7).unwrap();
    let (embedder, fixtures) = oracle(vec![a.scaled(0.7), b.scaled(0.3)], 23, 0.05, 1);
    let set = extract_reference_attractors(&mixture, codec, &embedder, 2, 4).unwrap();
    assert_eq!(set.provenance(), Provenance::KMeans);
    let sim = attractor_similarity(&set, &fixtures).unwrap();
    assert!(matched_min_cosine(&sim) >= 0.98);
    // the louder source owns the strongest attractor
    let strongest = set.strongest();
    assert!(sim[strongest][0] > sim[strongest][1]);
}

#[test]
fn extraction_requires_separation_rate() {
    let codec = tiny_codec();
    let a = synth::multi_tone(0.2, 8000, 1);
    let (embedder, _) = oracle(vec![a.clone()], 1, 0.0, 0);
    assert!(matches!(
        extract_reference_attractors(&a, codec, &embedder, 1, 0),
        Err(Error::UnsupportedRate { .. })
    ));
}

#[test]
fn single_cluster_separation_is_the_round_trip() {
    let codec = tiny_codec();
    let x = synth::multi_tone(0.25, SR, 5);
    let (embedder, _) = oracle(vec![x.clone()], 6, 0.05, 0);
    let sep = separate(&x, codec, &embedder, 1, 1.0, 0).unwrap();
    let rt = codec.round_trip(&x).unwrap();
    assert_eq!(sep.estimates.len(), 1);
    for (p, q) in sep.estimates[0].samples().iter().zip(rt.samples()) {
        assert!((p - q).abs() <= 1e-12);
    }
}

#[test]
fn sinusoid_and_noise_separate_with_margin() {
    let codec = tiny_codec();
    let a = synth::sinusoid(440.0, 0.5, SR, 0.5);
    let b = synth::filtered_noise(0.5, SR, 31);
    let mixture = mix(&a, &b, 0.5).unwrap();
    let refs = [a.scaled(0.5), b.scaled(0.5)];
    let (embedder, _) = oracle(refs.to_vec(), 32, 0.05, 2);
    let sep = separate(&mixture, codec, &embedder, 2, 0.1, 2).unwrap();

    let n = sep.estimates[0].len();
    let refs: Vec<Waveform> = refs.iter().map(|s| s.truncated(n)).collect();
    let matched = match_estimates(&sep.estimates, &refs).unwrap();
    let est = matched.iter().map(|m| m.1).sum::<f64>() / 2.0;
    let mix_n = mixture.truncated(n);
    let base = refs.iter().map(|s| si_sdr(&mix_n, s).unwrap()).sum::<f64>() / 2.0;
    assert!(est - base >= 5.0, "margin {:.2} dB", est - base);

    let rt = codec.round_trip(&mixture).unwrap();
    for i in 0..n {
        let s = sep.estimates[0].samples()[i] + sep.estimates[1].samples()[i];
        assert!((s - rt.samples()[i]).abs() <= 1e-9);
    }
}

#[test]
fn separation_is_seed_deterministic() {
    let codec = tiny_codec();
    let a = synth::multi_tone(0.25, SR, 41);
    let b = synth::filtered_noise(0.25, SR, 42);
    let mixture = mix(&a, &b, 0.4).unwrap();
    let (embedder, _) = oracle(vec![a.scaled(0.4), b.scaled(0.6)], 43, 0.05, 3);
    let s1 = separate(&mixture, codec, &embedder, 2, 0.1, 9).unwrap();
    let s2 = separate(&mixture, codec, &embedder, 2, 0.1, 9).unwrap();
    assert_eq!(s1.estimates, s2.estimates);
    assert_eq!(s1.attractors, s2.attractors);
}

#[cfg(feature = "parallel")]
#[test]
fn tcn_forward_is_independent_of_thread_count() {
    let cfg = TcnConfig {
        feature_dim: 16,
        embed_dim: 8,
        bottleneck: 12,
        hidden: 24,
        kernel_size: 3,
        blocks_per_repeat: 3,
        repeats: 2,
    };
    let w = TcnWeights::random(cfg, 42).unwrap();
    let mut r = rng(42);
    let e_x = random_tf(&mut r, 50, 16, 0.1);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| tcn_forward(&e_x, &w).unwrap())
    };
    let one = run(1);
    assert_eq!(one.bins(), 50 * 16);
    for threads in [2, 4, 7] {
        let other = run(threads);
        let same = one
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "{threads} threads changed the output");
    }
}

#[test]
fn sinusoid_pretraining_reaches_floor() {
    let clip = synth::sinusoid(440.0, 1.0, SR, 0.5);
    let cfg = PretrainConfig {
        steps: 2000,
        learning_rate: 0.1,
        batch_frames: 256,
        seed: 1,
    };
    let out = pretrain_codec(std::slice::from_ref(&clip), CodecWeights::init(128, 16, 8, 1).unwrap(), &cfg).unwrap();
    let score = reconstruction_si_sdr(&[clip], &out.weights).unwrap();
    assert!(score >= 15.0, "reconstruction SI-SDR {score:.2} dB");
    let blocks: Vec<f64> = out.losses.chunks(100).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    for pair in blocks.windows(2) {
        assert!(pair[1] <= pair[0], "block mean loss rose {} -> {}", pair[0], pair[1]);
    }
}
