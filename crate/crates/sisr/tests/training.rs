use std::fs;
use std::path::Path;

use sisr::config::RunConfig;
use sisr::runner::{read_log, run_training, RunOptions, CHECKPOINT_DIR, DISCRIMINATOR_FILE, FEATURES_FILE, GENERATOR_FILE, LOG_FILE};
use sisr::synth::write_texture_set;
use sisr::weights::read_archive;
use sisr_core::discriminator::DiscConfig;
use sisr_core::generator::ArchConfig;
use sisr_core::perceptual::{FeatureNet, FeatureNetSpec};
use sisr_core::train::{StepLosses, TrainConfig};

fn tiny(manifest: &Path, out: &Path, p1: u64, p2: u64) -> RunConfig {
    let text = format!(
        "[paths]\nmanifest = {:?}\nout_dir = {:?}\n",
        manifest.to_str().unwrap(),
        out.to_str().unwrap()
    );
    let mut cfg = RunConfig::parse(&text, Path::new("inline")).unwrap();
    cfg.train = TrainConfig {
        seed: 11,
        batch_size: 2,
        hr_crop: 16,
        phase1_steps: p1,
        phase2_steps: p2,
        checkpoint_every: 3,
        log_every: 1,
        arch: ArchConfig { num_rrdb: 1, num_features: 8, growth_channels: 4, ..ArchConfig::default() },
        disc: DiscConfig { stages: 3, base_channels: 4, hidden: 8, ..DiscConfig::default() },
        features: FeatureNetSpec { channels: vec![4, 8], downsample_after: vec![0], tap_layer: 1, seed: 2 },
        ..TrainConfig::default()
    };
    cfg
}

fn data(dir: &Path) -> std::path::PathBuf {
    write_texture_set(&dir.join("data"), 1, 3, 32, 32).unwrap()
}

#[test]
fn pixel_only_run_emits_no_discriminator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = tiny(&data(dir.path()), &out, 4, 0);
    let outcome = run_training(&cfg, RunOptions::default()).unwrap();
    assert_eq!(outcome.steps_completed, 4);
    assert!(out.join(GENERATOR_FILE).is_file());
    assert!(!out.join(DISCRIMINATOR_FILE).exists());
    assert!(!out.join(CHECKPOINT_DIR).join(DISCRIMINATOR_FILE).exists());
    let log = read_log(out.join(LOG_FILE)).unwrap();
    assert_eq!(log.len(), 4);
    assert!(log.iter().all(|r| matches!(r.losses, StepLosses::Pretrain { l1 } if l1 > 0.0)));
}

#[test]
fn resumed_run_matches_an_unbroken_one() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = data(dir.path());
    let full = dir.path().join("full");
    let parts = dir.path().join("parts");
    run_training(&tiny(&manifest, &full, 4, 3), RunOptions::default()).unwrap();
    // Stop at the step-6 checkpoint, inside the GAN phase, then resume.
    let cfg = tiny(&manifest, &parts, 4, 3);
    run_training(&cfg, RunOptions { resume: false, stop_after: Some(6) }).unwrap();
    let done = run_training(&cfg, RunOptions { resume: true, stop_after: None }).unwrap();
    assert_eq!(done.steps_completed, 7);
    for f in [LOG_FILE, GENERATOR_FILE, DISCRIMINATOR_FILE, FEATURES_FILE] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(parts.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_rejects_a_changed_config() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = data(dir.path());
    let out = dir.path().join("r");
    run_training(&tiny(&manifest, &out, 3, 0), RunOptions { resume: false, stop_after: Some(3) }).unwrap();
    let mut changed = tiny(&manifest, &out, 3, 0);
    changed.train.lr_pretrain = 1e-3;
    assert!(matches!(run_training(&changed, RunOptions { resume: true, stop_after: None }), Err(sisr::Error::Config { .. })));
}

#[test]
fn gan_run_is_deterministic_and_keeps_its_books() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = data(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = tiny(&manifest, &a, 2, 4);
    run_training(&cfg, RunOptions::default()).unwrap();
    run_training(&tiny(&manifest, &b, 2, 4), RunOptions::default()).unwrap();
    for f in [LOG_FILE, GENERATOR_FILE, DISCRIMINATOR_FILE, FEATURES_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let log = read_log(a.join(LOG_FILE)).unwrap();
    let gan: Vec<_> = log.iter().filter_map(|r| if let StepLosses::Gan(l) = r.losses { Some(l) } else { None }).collect();
    assert_eq!(gan.len(), 4);
    for l in gan {
        let re_added = cfg.train.loss.combine_f32(l.percep, l.adv, l.l1);
        assert!((re_added - l.total).abs() <= 1e-6, "{re_added} vs {}", l.total);
    }
    // The feature network is never trained.
    let stored = read_archive(a.join(FEATURES_FILE)).unwrap();
    let fresh = FeatureNet::<f32>::from_seed(cfg.train.features.clone()).unwrap();
    assert_eq!(stored, fresh.params);
}

#[test]
fn missing_manifest_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("none.txt"), &dir.path().join("o"), 1, 0);
    let err = run_training(&cfg, RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn supplied_feature_weights_replace_the_seeded_network() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = data(dir.path());
    let mut cfg = tiny(&manifest, &dir.path().join("run"), 1, 2);
    let other = FeatureNet::<f32>::from_seed(FeatureNetSpec { seed: 99, ..cfg.train.features.clone() }).unwrap();
    let weights = dir.path().join("external.srwt");
    sisr::weights::write_archive(&other.params, &weights).unwrap();
    cfg.paths.feature_weights = Some(weights);
    run_training(&cfg, RunOptions::default()).unwrap();
    assert_eq!(read_archive(dir.path().join("run").join(FEATURES_FILE)).unwrap(), other.params);

    let wrong = FeatureNet::<f32>::from_seed(FeatureNetSpec { channels: vec![4, 4], ..cfg.train.features.clone() }).unwrap();
    let bad = dir.path().join("wrong.srwt");
    sisr::weights::write_archive(&wrong.params, &bad).unwrap();
    cfg.paths.feature_weights = Some(bad);
    cfg.paths.out_dir = dir.path().join("run2");
    let err = run_training(&cfg, RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("wrong.srwt"), "{err}");
}
