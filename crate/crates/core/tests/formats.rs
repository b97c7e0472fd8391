use sanet::*;

fn small_tcn(seed: u64) -> TcnWeights {
    let cfg = TcnConfig {
        feature_dim: 4,
        embed_dim: 3,
        bottleneck: 5,
        hidden: 7,
        kernel_size: 3,
        blocks_per_repeat: 2,
        repeats: 2,
    };
    TcnWeights::random(cfg, seed).unwrap()
}

#[test]
fn codec_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.sacw");
    let c = CodecWeights::init(12, 16, 8, 3).unwrap();
    c.save(&path).unwrap();
    assert_eq!(CodecWeights::load(&path).unwrap(), c);
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 20 + 2 * 12 * 16 * 4);
}

#[test]
fn codec_header_layout() {
    let bytes = CodecWeights::init(2, 16, 8, 0).unwrap().to_bytes();
    assert_eq!(&bytes[..4], b"SACW");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 16);
    assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 8);
}

#[test]
fn tcn_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.satw");
    let t = small_tcn(4);
    t.save(&path).unwrap();
    assert_eq!(TcnWeights::load(&path).unwrap(), t);
}

#[test]
fn tcn_header_inconsistent_with_payload() {
    let mut bytes = small_tcn(1).to_bytes();
    // repeats field
    bytes[32..36].copy_from_slice(&3u32.to_le_bytes());
    assert!(matches!(TcnWeights::from_bytes(&bytes), Err(Error::Format { .. })));
    bytes[32..36].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(matches!(TcnWeights::from_bytes(&bytes), Err(Error::Format { .. })));
}

#[test]
fn attractor_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.saeb");
    let a = random_unit_attractors(3, 16, 0.2, 9).unwrap().quantized();
    a.save(&path).unwrap();
    let back = AttractorSet::load(&path).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.provenance(), Provenance::Fixture);
}

#[test]
fn unknown_version_is_rejected() {
    let mut bytes = random_unit_attractors(2, 4, 0.5, 1).unwrap().quantized().to_bytes();
    bytes[4] = 9;
    assert!(matches!(
        AttractorSet::from_bytes(&bytes),
        Err(Error::Format { offset: 4, .. })
    ));
}

#[test]
fn wrong_magic_is_rejected_at_offset_zero() {
    let bytes = CodecWeights::init(2, 16, 8, 0).unwrap().to_bytes();
    assert!(matches!(
        AttractorSet::from_bytes(&bytes),
        Err(Error::Format { offset: 0, .. })
    ));
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        CodecWeights::load("/nonexistent/codec.sacw"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn wav_round_trip_is_within_one_lsb() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let x = synth::multi_tone(0.1, 16_000, 2);
    write_wav(&path, &x).unwrap();
    let y = read_wav(&path).unwrap();
    assert_eq!(y.sample_rate(), 16_000);
    assert_eq!(y.len(), x.len());
    for (a, b) in x.samples().iter().zip(y.samples()) {
        assert!((a - b).abs() <= 1.0 / 32768.0);
    }
}
