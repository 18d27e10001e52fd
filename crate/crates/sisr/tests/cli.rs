use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sisr::io::{load_image, save_image};
use sisr::synth::{texture, write_texture_set};

fn sisr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sisr")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn degrade_writes_quarter_size_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    fs::create_dir(&src).unwrap();
    save_image(&texture(1, 0, 64, 64), src.join("a.png")).unwrap();
    save_image(&texture(1, 1, 65, 64), src.join("b.png")).unwrap();
    let out = dir.path().join("out");
    let run = sisr(&["degrade", p(&src), "--out", p(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let lr = load_image(out.join("lr/a.png")).unwrap();
    assert_eq!((lr.width(), lr.height()), (16, 16));
    assert!(String::from_utf8_lossy(&run.stderr).contains("b.png"));
    assert!(!out.join("lr/b.png").exists());
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("entry hr/a.png lr/a.png"), "{manifest}");
}

#[test]
fn degrade_of_an_empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = sisr(&["degrade", p(dir.path()), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("no images found"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&sisr(&[])), 1);
    assert_eq!(code(&sisr(&["bogus"])), 1);
    assert_eq!(code(&sisr(&["eval", "--manifest", "m.txt", "--out", "o"])), 1);
    assert_eq!(code(&sisr(&["--help"])), 0);
}

#[test]
fn corrupt_weights_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("g.srwt");
    fs::write(&weights, b"not an archive at all").unwrap();
    let img = dir.path().join("x.png");
    save_image(&texture(2, 0, 8, 8), &img).unwrap();
    let run = sisr(&["upscale", "--weights", p(&weights), "--out", p(&dir.path().join("o")), p(&img)]);
    assert_eq!(code(&run), 2);
    let msg = String::from_utf8_lossy(&run.stderr);
    assert!(msg.contains("g.srwt") && msg.contains("byte 0"), "{msg}");
}

#[test]
fn eval_of_an_empty_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.txt");
    fs::write(&manifest, "scale 4\n# nothing here\n").unwrap();
    let run = sisr(&["eval", "--baseline", "bicubic", "--manifest", p(&manifest), "--out", p(&dir.path().join("o"))]);
    assert_ne!(code(&run), 0);
}

#[test]
fn baseline_eval_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_texture_set(&dir.path().join("data"), 4, 2, 48, 48).unwrap();
    let mut reports = Vec::new();
    for base in ["bicubic", "nearest"] {
        let out = dir.path().join(base);
        let run = sisr(&["eval", "--baseline", base, "--manifest", p(&manifest), "--out", p(&out), "--save-images"]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
        assert!(out.join("images/texture_000.png").is_file());
        reports.push(out.join("report.toml"));
    }
    let table_path = dir.path().join("table.txt");
    let run = sisr(&["report", p(&reports[0]), p(&reports[1]), "--out", p(&table_path)]);
    assert_eq!(code(&run), 0);
    let table = fs::read_to_string(&table_path).unwrap();
    assert_eq!(table, String::from_utf8_lossy(&run.stdout));
    let ours = table.lines().find(|l| l.starts_with("Our method / MSE")).unwrap();
    assert!(ours.contains("29.56") && ours.contains("0.9109") && ours.contains("3.64"));
    assert!(table.lines().any(|l| l.starts_with("bicubic ")));
    assert!(table.lines().any(|l| l.starts_with("nearest ")));

    let bare = sisr(&["report", p(&reports[0]), "--no-reference"]);
    assert!(!String::from_utf8_lossy(&bare.stdout).contains("29.56"));
}

#[test]
fn train_then_upscale() {
    let dir = tempfile::tempdir().unwrap();
    write_texture_set(&dir.path().join("data"), 5, 2, 32, 32).unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "[paths]\nmanifest = \"data/manifest.txt\"\nout_dir = \"run\"\n\n\
         [train]\nbatch_size = 1\nhr_crop = 16\nphase1_steps = 3\nphase2_steps = 2\ncheckpoint_every = 2\nlog_every = 1\n\n\
         [train.arch]\nnum_rrdb = 1\nnum_features = 8\ngrowth_channels = 4\n\n\
         [train.disc]\nstages = 2\nbase_channels = 4\nhidden = 8\n\n\
         [train.features]\nchannels = [4, 8]\ndownsample_after = [0]\ntap_layer = 1\n",
    )
    .unwrap();
    let run = sisr(&["train", "--config", p(&config), "--seed", "3"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let weights = dir.path().join("run/generator.srwt");
    assert!(weights.is_file());
    let resolved = fs::read_to_string(dir.path().join("run/resolved_config.toml")).unwrap();
    assert!(resolved.contains("seed = 3"));

    let lr = dir.path().join("small.png");
    save_image(&texture(6, 0, 8, 8), &lr).unwrap();
    let out = dir.path().join("up");
    let run = sisr(&["upscale", "--weights", p(&weights), "--out", p(&out), p(&lr)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let sr = load_image(out.join("small.png")).unwrap();
    assert_eq!((sr.width(), sr.height()), (32, 32));

    let bad = fs::read_to_string(&config).unwrap().replace("[train]\n", "[train]\nwarp_factor = 9\n");
    fs::write(&config, bad).unwrap();
    assert_eq!(code(&sisr(&["train", "--config", p(&config)])), 1);
}

#[test]
fn gradcheck_passes() {
    let run = sisr(&["gradcheck", "--seed", "5"]);
    assert_eq!(code(&run), 0);
    assert!(String::from_utf8_lossy(&run.stdout).contains(" 0 failed"));
}
