use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use hfm_cli::pipeline::{self, StageStatus};
use hfm_cli::{CliError, ExperimentConfig};

/// Four visible units (2 x 2 blocks of 14 x 14 pixels) and two hidden layers
/// of three, so every layer can be enumerated.
const TOY: &str = r#"
seed = 7

[data]
source = "synthetic"
synthetic_per_class = 20

[data.ladder]
target_size = 3000
downsample = 14
threshold = 0.2

[dbn]
hidden = [3, 3]

[dbn.train]
epochs = 10
batch_size = 50

[sampling]
passes = 2
equilibrium_samples = 20000

[sampling.equilibrium]
burn_in = 2000

[tap]
max_inits = 200

[observables]
rollouts = 50
max_points = 300
"#;

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn toy_pipeline_passes_enumeration_checks_and_reruns_identically() {
    let config = ExperimentConfig::from_toml(TOY).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let outcome = pipeline::run(&config, &a).unwrap();
    for (stage, status) in &outcome.manifest.stages {
        assert_eq!(status, &StageStatus::Ok, "{stage}");
    }
    for ds in &outcome.summary.datasets {
        // every layer of a [4, 3, 3] network is checked on both paths
        assert_eq!(ds.checks.len(), 5, "{}", ds.name);
        for c in &ds.checks {
            assert!(c.passed, "{} {c:?}", ds.name);
        }
        assert_eq!(ds.layers.len(), 2);
        assert!(ds.layers.iter().all(|l| l.clamped.is_some() && l.tap.is_some()));
    }

    let mut jobs = config.clone();
    jobs.jobs = 3;
    pipeline::run(&jobs, &b).unwrap();
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        assert!(bytes == &tb[name], "{name} differs between runs");
    }

    // the manifest covers every other file with its hash
    let manifest = &outcome.manifest;
    assert_eq!(manifest.files.len() + 1, ta.len());
    for (name, record) in &manifest.files {
        assert_eq!(record.sha256, hfm_cli::output::sha256_hex(&ta[name]), "{name}");
    }
    assert_eq!(manifest.config_hash, outcome.summary.config_hash);
}

#[test]
fn missing_dataset_path_fails_validation_before_any_output() {
    let text = TOY.replace(
        "source = \"synthetic\"",
        "source = \"idx\"\ndigits_images = \"/nonexistent/images.idx\"\ndigits_labels = \"/nonexistent/labels.idx\"",
    );
    let config = ExperimentConfig::from_toml(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(matches!(pipeline::run(&config, &out), Err(CliError::Config(_))));
    assert!(!out.exists());

    let cfg_path = dir.path().join("bad.toml");
    fs::write(&cfg_path, text).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_hfm"))
        .args(["pipeline", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn unknown_config_keys_exit_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("typo.toml");
    fs::write(&cfg_path, TOY.replace("[tap]", "[tap]\nmax_init = 3")).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_hfm"))
        .args(["pipeline", "--config", cfg_path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn failed_data_stage_skips_dependents_and_still_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // valid IDX files whose images are not square
    let raw = hfm_data::RawImages::new(4, 2, vec![0; 8 * 10], (0..10).collect()).unwrap();
    let (img, lab) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    raw.write(&img, &lab).unwrap();
    let text = TOY.replace(
        "source = \"synthetic\"",
        &format!("source = \"idx\"\ndigits_images = {:?}\ndigits_labels = {:?}", img, lab),
    );
    let config = ExperimentConfig::from_toml(&text).unwrap();
    let out = dir.path().join("run");
    let outcome = pipeline::run(&config, &out).unwrap();
    assert!(matches!(outcome.manifest.stages["data"], StageStatus::Failed(_)));
    assert_eq!(outcome.failed_stages(), vec!["data"]);
    for name in ["narrow", "medium", "broad"] {
        for stage in ["train", "samples", "analysis", "tap", "observables", "checks"] {
            let key = format!("{stage}/{name}");
            assert!(matches!(outcome.manifest.stages[&key], StageStatus::Skipped(_)), "{key}");
        }
    }
    assert!(out.join("manifest.json").exists());
    assert!(out.join("config.json").exists());

    let cfg_path = dir.path().join("c.toml");
    fs::write(&cfg_path, text).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_hfm"))
        .args(["pipeline", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
