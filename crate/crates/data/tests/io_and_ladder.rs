use hfm_data::glyphs::{synthesize, Family, Style};
use hfm_data::idx::{encode_images, encode_labels};
use hfm_data::{breadth_ladder, load_idx, preprocess, DataError, Dataset, LadderConfig, RawImages};
use proptest::prelude::*;

fn fixture() -> RawImages {
    // four 28x28 images: blank, full, left half, one pixel
    let mut pixels = Vec::new();
    pixels.extend(vec![0u8; 784]);
    pixels.extend(vec![255u8; 784]);
    pixels.extend((0..784).map(|i| if i % 28 < 14 { 200 } else { 0 }));
    pixels.extend((0..784).map(|i| if i == 0 { 255 } else { 0 }));
    RawImages::new(28, 28, pixels, vec![0, 1, 2, 3]).unwrap()
}

#[test]
fn fixture_round_trips_through_idx_files() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    let raw = fixture();
    raw.write(&img, &lab).unwrap();
    let back = load_idx(&img, &lab).unwrap();
    assert_eq!(back.len(), 4);
    assert_eq!((back.rows, back.cols), (28, 28));
    assert_eq!(back, raw);
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    let raw = fixture();
    let mut bytes = encode_images(&raw);
    bytes[3] = 0x02;
    std::fs::write(&img, &bytes).unwrap();
    std::fs::write(&lab, encode_labels(&raw.labels)).unwrap();
    assert!(matches!(load_idx(&img, &lab), Err(DataError::Idx(_))));

    std::fs::write(&img, encode_images(&raw)).unwrap();
    std::fs::write(&lab, encode_labels(&raw.labels[..3])).unwrap();
    assert!(matches!(load_idx(&img, &lab), Err(DataError::Idx(_))));

    let mut truncated = encode_images(&raw);
    truncated.truncate(100);
    std::fs::write(&img, truncated).unwrap();
    std::fs::write(&lab, encode_labels(&raw.labels)).unwrap();
    assert!(load_idx(&img, &lab).is_err());
}

#[test]
fn preprocessing_examples() {
    let raw = fixture();
    let d = preprocess(&raw, 2, 0.5).unwrap();
    assert_eq!(d.width(), 196);
    assert!(d.images.row(0).iter().all(|&v| v == 0.0));
    assert!(d.images.row(1).iter().all(|&v| v == 1.0));
    let left: f64 = d.images.row(2).iter().sum();
    assert_eq!(left, 98.0);
    // one bright pixel in a 2x2 block has mean 63.75
    assert_eq!(d.images.row(3).sum(), 0.0);
    let low = preprocess(&raw, 2, 1e-6).unwrap();
    assert_eq!(low.images.row(3).sum(), 1.0);
    assert_eq!(low.images.row(2).sum(), 98.0);
    for bad in [0, 3, 5] {
        assert!(preprocess(&raw, bad, 0.5).is_err());
    }
    assert!(preprocess(&raw, 2, 0.0).is_err());
    assert!(preprocess(&raw, 2, 1.0).is_err());
}

#[test]
fn dataset_files_round_trip() {
    let d = preprocess(&fixture(), 4, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = d.save(dir.path(), "fixture").unwrap();
    assert_eq!(paths.len(), 3);
    let back = Dataset::load(dir.path(), "fixture").unwrap();
    assert_eq!(back, d);
    // the rows file is also a valid sample file
    let text = std::fs::read(&paths[0]).unwrap();
    let sample = hfm::EmpiricalSample::read_text(text.as_slice(), None).unwrap();
    assert_eq!(sample.total(), 4);
    assert_eq!(sample, d.to_sample());
}

fn small_ladder(target: usize, letters: bool, seed: u64) -> hfm_data::Ladder {
    let digits = synthesize(Family::Digits, 20, &Style::default(), 1);
    let letters_raw = synthesize(Family::Letters, 5, &Style::default(), 2);
    let config = LadderConfig {
        target_size: target,
        seed,
        ..LadderConfig::default()
    };
    breadth_ladder(&digits, letters.then_some(&letters_raw), &config, "synthetic").unwrap()
}

#[test]
fn ladder_sizes_and_classes() {
    for letters in [false, true] {
        let ladder = small_ladder(150, letters, 7);
        for (_, d) in ladder.iter() {
            assert_eq!(d.len(), 150);
            assert_eq!(d.width(), 196);
            assert!(d.images.iter().all(|&v| v == 0.0 || v == 1.0));
        }
        assert_eq!(ladder.narrow.distinct_labels(), 1);
        assert_eq!(ladder.narrow.provenance.classes, vec![2]);
        // 20 originals of the class, the rest augmented
        assert_eq!(ladder.narrow.provenance.original, 20);
        assert_eq!(ladder.narrow.provenance.augmented, 130);
        assert_eq!(ladder.medium.distinct_labels(), 10);
        assert!(ladder.broad.distinct_labels() > 10);
        assert_eq!(ladder.broad.provenance.mirror_proxy, !letters);
    }
}

#[test]
fn ladder_is_deterministic() {
    assert_eq!(small_ladder(60, false, 3), small_ladder(60, false, 3));
    assert_ne!(small_ladder(60, false, 3).narrow, small_ladder(60, false, 4).narrow);
}

#[test]
fn ladder_without_the_narrow_class_fails() {
    let digits = synthesize(Family::Digits, 3, &Style::default(), 1).filter(|l| l != 2);
    let err = breadth_ladder(&digits, None, &LadderConfig::default(), "x").unwrap_err();
    assert!(matches!(err, DataError::Insufficient(_)));
}

#[test]
fn synthesis_is_deterministic() {
    let a = synthesize(Family::Letters, 2, &Style::default(), 9);
    assert_eq!(a, synthesize(Family::Letters, 2, &Style::default(), 9));
    assert_eq!(a.len(), 52);
}

proptest! {
    #[test]
    fn binary_images_are_fixed_by_unit_downsampling(bits in prop::collection::vec(any::<bool>(), 16), t in 0.01f64..0.99) {
        let pixels: Vec<u8> = bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let raw = RawImages::new(4, 4, pixels, vec![0]).unwrap();
        let d = preprocess(&raw, 1, t).unwrap();
        let expected: Vec<f64> = bits.iter().map(|&b| b as u8 as f64).collect();
        prop_assert_eq!(d.images.row(0).to_vec(), expected);
    }
}
