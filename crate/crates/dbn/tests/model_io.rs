mod common;

use common::random_dbn;
use hfm_dbn::{Dbn, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dbn = random_dbn(&[6, 4, 3], 0.5, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let config = TrainConfig { seed: 77, ..TrainConfig::default() };
    dbn.save_json(&path, Some(&config)).unwrap();
    let (back, train) = Dbn::load_json(&path).unwrap();
    assert_eq!(back, dbn);
    assert_eq!(train, Some(config));
    assert_eq!(back.sizes(), vec![6, 4, 3]);
}

#[test]
fn rejects_foreign_or_inconsistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"format":"other","version":1,"sizes":[1,1],"layers":[]}"#).unwrap();
    assert!(Dbn::load_json(&path).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dbn = random_dbn(&[3, 2], 0.5, &mut rng);
    dbn.save_json(&path, None).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    value["sizes"] = serde_json::json!([3, 5]);
    std::fs::write(&path, value.to_string()).unwrap();
    assert!(Dbn::load_json(&path).is_err());
}
