//! Training runs on disk.
//!
//! Output directory layout:
//!
//! ```text
//! resolved_config.toml   the fully resolved run configuration
//! train.log              one loss record per logged step
//! features.srwt          the frozen feature network
//! checkpoint/            latest resumable state (generator, discriminator, state)
//! generator.srwt         final generator
//! discriminator.srwt     final discriminator, only when the GAN phase ran
//! ```
//!
//! Log records are single lines of `key=value` fields, for example
//! `step=0 phase=pretrain l1=0.2315` or
//! `step=120 phase=gan total=0.41 percep=0.39 adv=1.38 l1=0.08 d_loss=1.39`.
//! `step` is zero-based and values are printed with full `f32` round-trip
//! precision.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use sisr_core::perceptual::FeatureNet;
use sisr_core::train::{GanLosses, Phase, StepLosses, StepRecord, Trainer};

use crate::config::{RunConfig, RESOLVED_CONFIG};
use crate::dataset::load_manifest;
use crate::error::{Error, Result};
use crate::weights::{load_discriminator, load_generator, read_archive, save_generator, write_archive};

pub const LOG_FILE: &str = "train.log";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const GENERATOR_FILE: &str = "generator.srwt";
pub const DISCRIMINATOR_FILE: &str = "discriminator.srwt";
pub const FEATURES_FILE: &str = "features.srwt";
pub const STATE_FILE: &str = "state.srwt";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue from `checkpoint/` in the output directory.
    pub resume: bool,
    /// Stop (after checkpointing) once this many steps have completed.
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub out_dir: PathBuf,
    /// Final generator, or the checkpointed one when stopped early.
    pub generator: PathBuf,
    pub log: PathBuf,
    pub steps_completed: u64,
    pub last: Option<StepRecord>,
}

/// Formats one log line.
pub fn format_record(r: &StepRecord) -> String {
    match r.losses {
        StepLosses::Pretrain { l1 } => format!("step={} phase=pretrain l1={l1}", r.step),
        StepLosses::Gan(GanLosses { total, percep, adv, l1, d_loss }) => {
            format!("step={} phase=gan total={total} percep={percep} adv={adv} l1={l1} d_loss={d_loss}", r.step)
        }
    }
}

/// Parses a line written by [`format_record`].
pub fn parse_record(line: &str) -> Option<StepRecord> {
    let mut step = None;
    let mut phase = None;
    let mut vals = std::collections::BTreeMap::new();
    for field in line.split_whitespace() {
        let (k, v) = field.split_once('=')?;
        match k {
            "step" => step = v.parse::<u64>().ok(),
            "phase" => phase = Some(v),
            _ => {
                vals.insert(k, v.parse::<f32>().ok()?);
            }
        }
    }
    let get = |k: &str| vals.get(k).copied();
    let losses = match phase? {
        "pretrain" => StepLosses::Pretrain { l1: get("l1")? },
        "gan" => StepLosses::Gan(GanLosses {
            total: get("total")?,
            percep: get("percep")?,
            adv: get("adv")?,
            l1: get("l1")?,
            d_loss: get("d_loss")?,
        }),
        _ => return None,
    };
    Some(StepRecord { step: step?, losses })
}

/// Every record in a log file.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| parse_record(l).ok_or_else(|| Error::Failed(format!("{}:{}: malformed record", path.display(), i + 1))))
        .collect()
}

fn save_checkpoint(trainer: &Trainer, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    save_generator(&trainer.generator, dir.join(GENERATOR_FILE))?;
    if let Some(d) = &trainer.discriminator {
        write_archive(&d.to_archive(), dir.join(DISCRIMINATOR_FILE))?;
    }
    // The state goes last: its presence marks a complete checkpoint.
    write_archive(&trainer.state_params()?, dir.join(STATE_FILE))
}

fn restore(cfg: &RunConfig, features: FeatureNet<f32>, dir: &Path) -> Result<Trainer> {
    let state_path = dir.join(STATE_FILE);
    if !state_path.is_file() {
        return Err(Error::Usage(format!("no checkpoint to resume in {}", dir.display())));
    }
    let generator = load_generator(dir.join(GENERATOR_FILE))?;
    let disc_path = dir.join(DISCRIMINATOR_FILE);
    let discriminator = if disc_path.is_file() { Some(load_discriminator(&disc_path)?) } else { None };
    let state = read_archive(&state_path)?;
    Trainer::restore(cfg.train.clone(), features, generator, discriminator, &state).map_err(Error::in_file(&state_path))
}

/// Keeps the records of steps before `step`, dropping any written after the
/// checkpoint being resumed.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let kept: Vec<String> = read_log(path)?.iter().filter(|r| r.step < step).map(format_record).collect();
    let mut text = kept.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(Error::io(path))
}

/// Runs (or resumes) the two-phase schedule described by `cfg`.
pub fn run_training(cfg: &RunConfig, opts: RunOptions) -> Result<TrainingOutcome> {
    let out = cfg.paths.out_dir.clone();
    let config_path = out.join(RESOLVED_CONFIG);
    cfg.validate(&config_path)?;
    fs::create_dir_all(&out).map_err(Error::io(&out))?;
    let resolved = cfg.to_toml()?;
    if opts.resume {
        let previous = fs::read_to_string(&config_path).map_err(Error::io(&config_path))?;
        if previous != resolved {
            return Err(Error::Config {
                path: config_path,
                reason: "configuration differs from the run being resumed".into(),
            });
        }
    } else {
        fs::write(&config_path, &resolved).map_err(Error::io(&config_path))?;
    }

    let dataset = load_manifest(&cfg.paths.manifest)?;
    if dataset.entries.is_empty() {
        return Err(Error::Usage(format!("manifest {} has no entries", cfg.paths.manifest.display())));
    }
    let images = dataset.load_all()?;
    info!("loaded {} training images from {}", images.len(), cfg.paths.manifest.display());

    let spec = cfg.train.features.clone();
    let features = match &cfg.paths.feature_weights {
        Some(p) => FeatureNet::from_params(spec, read_archive(p)?).map_err(Error::in_file(p))?,
        None => FeatureNet::from_seed(spec)?,
    };
    let ckpt_dir = out.join(CHECKPOINT_DIR);
    let log_path = out.join(LOG_FILE);
    let mut trainer = if opts.resume {
        let t = restore(cfg, features.clone(), &ckpt_dir)?;
        truncate_log(&log_path, t.step)?;
        info!("resuming at step {}", t.step);
        t
    } else {
        write_archive(&features.params, out.join(FEATURES_FILE))?;
        File::create(&log_path).map_err(Error::io(&log_path))?;
        Trainer::new(cfg.train.clone(), features)?
    };
    if cfg.train.phase1_steps == 0 && cfg.train.phase2_steps > 0 {
        warn!("phase1_steps is 0: the GAN phase starts from a freshly initialized generator");
    }

    let file = fs::OpenOptions::new().append(true).open(&log_path).map_err(Error::io(&log_path))?;
    let mut log = BufWriter::new(file);
    let total = cfg.train.total_steps();
    let mut last = None;
    let mut previous_phase = trainer.phase();
    while trainer.phase() != Phase::Done {
        if opts.stop_after.is_some_and(|s| trainer.step >= s) {
            break;
        }
        let record = trainer.step_on(&images)?;
        if record.phase() != previous_phase {
            info!("entering {} phase at step {}", record.phase(), record.step);
            previous_phase = record.phase();
        }
        if record.step % cfg.train.log_every == 0 || trainer.step == total {
            writeln!(log, "{}", format_record(&record)).map_err(Error::io(&log_path))?;
            log.flush().map_err(Error::io(&log_path))?;
            info!("{}", format_record(&record));
        }
        if cfg.train.checkpoint_every > 0 && trainer.step % cfg.train.checkpoint_every == 0 && trainer.step < total {
            save_checkpoint(&trainer, &ckpt_dir)?;
        }
        last = Some(record);
    }
    log.flush().map_err(Error::io(&log_path))?;
    save_checkpoint(&trainer, &ckpt_dir)?;

    let generator = if trainer.phase() == Phase::Done {
        let g = out.join(GENERATOR_FILE);
        save_generator(&trainer.generator, &g)?;
        if let Some(d) = &trainer.discriminator {
            write_archive(&d.to_archive(), out.join(DISCRIMINATOR_FILE))?;
        }
        g
    } else {
        ckpt_dir.join(GENERATOR_FILE)
    };
    Ok(TrainingOutcome { out_dir: out, generator, log: log_path, steps_completed: trainer.step, last })
}
