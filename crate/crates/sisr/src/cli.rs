//! The `sisr` command line.
//!
//! Exit status is 0 on success, 1 for usage or configuration errors and 2
//! for failures while doing the work.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use sisr_core::gradcheck::run_suite;
use sisr_core::metrics::{format_comparison, format_report, published_set5_rows};
use sisr_core::patch::degrade;

use crate::config::{Overrides, RunConfig};
use crate::dataset::{load_manifest, manifest_text};
use crate::error::{Error, Result};
use crate::eval::{evaluate_dataset, output_name, read_report, write_report, Upscaler};
use crate::io::{is_image_path, load_image, save_image};
use crate::runner::{run_training, RunOptions};
use crate::weights::load_generator;

#[derive(Debug, Parser)]
#[command(name = "sisr", version, about = "4x single-image super-resolution: degrade, train, upscale, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bicubic-downscale HR images by 4 and write a manifest pairing them.
    Degrade {
        /// A directory of PNG/PPM images or a manifest file.
        input: PathBuf,
        /// Output directory; receives hr/, lr/ and manifest.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a generator from a run configuration.
    Train(TrainArgs),
    /// Upscale images 4x with a trained generator.
    Upscale {
        #[arg(long)]
        weights: PathBuf,
        /// Output directory for the 4x PNGs.
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score a generator or a baseline on a manifest.
    Eval(EvalArgs),
    /// Merge report files into one comparison table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Omit the published reference rows.
        #[arg(long)]
        no_reference: bool,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub phase1_steps: Option<u64>,
    #[arg(long)]
    pub phase2_steps: Option<u64>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Bicubic,
    Nearest,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; receives report.toml and report.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Row label in tables; defaults to the weights file name or baseline.
    #[arg(long)]
    pub label: Option<String>,
    /// Also write each SR image into <out>/images.
    #[arg(long)]
    pub save_images: bool,
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Degrade { input, out } => cmd_degrade(&input, &out),
        Command::Train(a) => cmd_train(&a),
        Command::Upscale { weights, out, inputs } => cmd_upscale(&weights, &inputs, &out),
        Command::Eval(a) => cmd_eval(&a),
        Command::Report { reports, out, no_reference } => cmd_report(&reports, out.as_deref(), !no_reference),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

/// `(name, path)` of each image to degrade, sorted by name.
fn degrade_inputs(input: &Path) -> Result<Vec<(String, PathBuf)>> {
    if input.is_dir() {
        let mut found = Vec::new();
        for entry in fs::read_dir(input).map_err(Error::io(input))? {
            let path = entry.map_err(Error::io(input))?.path();
            if path.is_file() && is_image_path(&path) {
                let name = path.file_name().expect("file path").to_string_lossy().into_owned();
                found.push((name, path));
            }
        }
        found.sort();
        Ok(found)
    } else {
        let dataset = load_manifest(input)?;
        Ok(dataset.entries.into_iter().map(|e| (e.name, e.hr)).collect())
    }
}

/// Writes `out/hr/<name>.png`, `out/lr/<name>.png` and `out/manifest.txt`.
/// Images that cannot be degraded are listed and skipped; the command fails
/// only when none succeed.
pub fn cmd_degrade(input: &Path, out: &Path) -> Result<()> {
    let inputs = degrade_inputs(input)?;
    if inputs.is_empty() {
        return Err(Error::Usage(format!("no images found in {}", input.display())));
    }
    mkdir(&out.join("hr"))?;
    mkdir(&out.join("lr"))?;
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (name, path) in &inputs {
        let file = output_name(name);
        if entries.iter().any(|(hr, _): &(String, Option<String>)| hr == &format!("hr/{file}")) {
            skipped.push(format!("{name}: output name {file} is already taken"));
            continue;
        }
        let result = load_image(path).and_then(|hr| {
            let lr = degrade(&hr)?;
            save_image(&hr, out.join("hr").join(&file))?;
            save_image(&lr, out.join("lr").join(&file))?;
            Ok(())
        });
        match result {
            Ok(()) => entries.push((format!("hr/{file}"), Some(format!("lr/{file}")))),
            Err(e) => skipped.push(format!("{name}: {e}")),
        }
    }
    for s in &skipped {
        eprintln!("skipped {s}");
    }
    if entries.is_empty() {
        return Err(Error::Failed(format!("all {} images were skipped", inputs.len())));
    }
    let manifest = out.join("manifest.txt");
    fs::write(&manifest, manifest_text(".", &entries)?).map_err(Error::io(&manifest))?;
    println!("degraded {} images ({} skipped); manifest {}", entries.len(), skipped.len(), manifest.display());
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    cfg.apply(&Overrides {
        seed: a.seed,
        phase1_steps: a.phase1_steps,
        phase2_steps: a.phase2_steps,
        manifest: a.manifest.clone(),
        out_dir: a.out.clone(),
    })?;
    cfg.validate(&a.config)?;
    let outcome = run_training(&cfg, RunOptions { resume: a.resume, stop_after: None })?;
    info!("trained {} steps", outcome.steps_completed);
    println!("{}", outcome.generator.display());
    Ok(())
}

pub fn cmd_upscale(weights: &Path, inputs: &[PathBuf], out: &Path) -> Result<()> {
    let up = Upscaler::Network(Box::new(load_generator(weights)?));
    mkdir(out)?;
    for input in inputs {
        let lr = load_image(input)?;
        let sr = up.upscale(&lr)?;
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
        let target = out.join(format!("{stem}.png"));
        save_image(&sr, &target)?;
        println!("{} -> {} ({}x{})", input.display(), target.display(), sr.width(), sr.height());
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (up, default_label) = match (&a.weights, a.baseline) {
        (Some(w), _) => (
            Upscaler::Network(Box::new(load_generator(w)?)),
            w.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        ),
        (None, Some(Baseline::Bicubic)) => (Upscaler::Bicubic, "bicubic".to_string()),
        (None, Some(Baseline::Nearest)) => (Upscaler::Nearest, "nearest".to_string()),
        (None, None) => return Err(Error::Usage("either --weights or --baseline is required".into())),
    };
    let dataset = load_manifest(&a.manifest)?;
    mkdir(&a.out)?;
    let save_dir = a.save_images.then(|| a.out.join("images"));
    let label = a.label.clone().unwrap_or(default_label);
    let report = evaluate_dataset(&dataset, &up, &label, save_dir.as_deref())?;
    write_report(&report, a.out.join("report.toml"))?;
    let table = format_report(&report, &published_set5_rows());
    let txt = a.out.join("report.txt");
    fs::write(&txt, &table).map_err(Error::io(&txt))?;
    print!("{table}");
    if report.images.is_empty() {
        return Err(Error::Failed("every image failed to evaluate".into()));
    }
    Ok(())
}

pub fn cmd_report(paths: &[PathBuf], out: Option<&Path>, reference: bool) -> Result<()> {
    let reports = paths.iter().map(read_report).collect::<Result<Vec<_>>>()?;
    let rows = if reference { published_set5_rows() } else { Vec::new() };
    let table = format_comparison(&reports, &rows);
    if let Some(p) = out {
        fs::write(p, &table).map_err(Error::io(p))?;
    }
    print!("{table}");
    Ok(())
}

pub fn cmd_gradcheck(seed: u64) -> Result<()> {
    let results = run_suite(seed)?;
    let mut failed = 0;
    for r in &results {
        let status = if r.passed() { "ok  " } else { "FAIL" };
        println!(
            "{status} {:<44} {:>10.3e} <= {:.0e}  ({} points, {} skipped at kinks)",
            r.name, r.max_rel_error, r.tolerance, r.elements, r.skipped
        );
        if !r.passed() {
            failed += 1;
        }
    }
    println!("{} checks, {failed} failed", results.len());
    if failed > 0 {
        return Err(Error::Failed(format!("{failed} gradient checks failed")));
    }
    Ok(())
}
