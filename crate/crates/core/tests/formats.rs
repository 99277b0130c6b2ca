use mamba_va::checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
use mamba_va::data::{
    decode_features, encode_features, load_annotations, load_features, parse_annotations,
    save_annotations, save_features, FeatureSequence, VaSeries, FEATURE_MAGIC,
};
use mamba_va::error::{Error, FormatError};
use mamba_va::layers::{Model, ModelConfig};
use mamba_va::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn sequence() -> FeatureSequence {
    let data = Tensor::from_fn(&[7, 3], |i| (i as f32 * 1.37).sin() * 1e3 + f32::EPSILON);
    FeatureSequence::new("clip_01", data).unwrap()
}

#[test]
fn features_roundtrip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clip_01.fvec");
    let seq = sequence();
    save_features(&path, &seq).unwrap();
    let back = load_features(&path).unwrap();
    assert_eq!(back.video_id, "clip_01");
    let bits = |s: &FeatureSequence| s.data.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&seq));
    assert_eq!(std::fs::read(&path).unwrap(), encode_features(&seq));
}

#[test]
fn corrupt_feature_files_are_rejected() {
    let bytes = encode_features(&sequence());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_features("v", &bad), Err(FormatError::BadMagic { expected, .. }) if expected == FEATURE_MAGIC));
    let mut version = bytes.clone();
    version[4] = 9;
    assert_eq!(decode_features("v", &version).unwrap_err(), FormatError::UnsupportedVersion(9));
    assert!(matches!(decode_features("v", &bytes[..bytes.len() - 1]), Err(FormatError::Truncated { .. })));
    assert!(matches!(decode_features("v", &bytes[..10]), Err(FormatError::Truncated { .. })));
    let mut nan = bytes;
    let at = 16 + 4 * (2 * 3 + 1);
    nan[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    assert_eq!(decode_features("v", &nan).unwrap_err(), FormatError::NonFinite { frame: 2, column: 1 });
}

#[test]
fn load_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.fvec");
    std::fs::write(&path, b"nope").unwrap();
    match load_features(&path) {
        Err(Error::Format { path: p, .. }) => assert_eq!(p, path),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn annotations_roundtrip_and_sentinels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    let labels = VaSeries::from_pairs(&[(0.5, -0.25), (-5.0, -5.0), (0.125, 1.0)]);
    save_annotations(&path, &labels).unwrap();
    let back = load_annotations(&path, Some(3)).unwrap();
    assert_eq!(back, labels);
    assert_eq!(back.valid, vec![true, false, true]);
    // shorter files are padded with invalid frames
    let padded = load_annotations(&path, Some(5)).unwrap();
    assert_eq!(padded.valid, vec![true, false, true, false, false]);
}

#[test]
fn annotation_parse_errors_carry_line_numbers() {
    match parse_annotations("valence,arousal\n0.1,0.2\n0.3,abc\n", Path::new("x.csv"), None) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

fn model() -> Model<f32> {
    let mut cfg = ModelConfig::with_in_dim(5);
    cfg.tcn.hidden_dim = 8;
    cfg.mamba.d_model = 8;
    cfg.mamba.state_dim = 3;
    Model::init(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
}

#[test]
fn checkpoint_roundtrip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mva");
    let m = model();
    let ck = Checkpoint::from_model(&m);
    ck.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.encode(), bytes);
    let restored = back.to_model(None).unwrap();
    for ((n1, a), (n2, b)) in m.params.named().into_iter().zip(restored.params.named()) {
        assert_eq!(n1, n2);
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b), "{n1}");
    }
    assert_eq!(restored.config, m.config);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let bytes = Checkpoint::from_model(&model()).encode();
    assert_eq!(&bytes[..4], &CHECKPOINT_MAGIC);
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"FVEC");
    assert!(matches!(Checkpoint::decode(&bad), Err(FormatError::BadMagic { .. })));
    assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() / 2]), Err(FormatError::Truncated { .. })));
    let mut huge_config = bytes;
    huge_config[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(matches!(Checkpoint::decode(&huge_config), Err(FormatError::Truncated { .. })));
}

#[test]
fn missing_tensor_is_named() {
    let mut ck = Checkpoint::from_model(&model());
    ck.tensors.retain(|(n, _)| n != "head.bias");
    match ck.to_model(None) {
        Err(Error::MissingTensor(name)) => assert_eq!(name, "head.bias"),
        other => panic!("unexpected {other:?}"),
    }
}
