//! Dataset evaluation and report files.
//!
//! Reports are stored as TOML with the fields of
//! [`MetricReport`](sisr_core::metrics::MetricReport):
//!
//! ```toml
//! label = "generator.srwt"
//! [[images]]
//! name = "hr/0001.png"
//! psnr_db = 24.31
//! ssim = 0.8123
//! [[failures]]
//! name = "hr/0002.png"
//! reason = "..."
//! [aggregate]
//! count = 1
//! psnr_db = 24.31
//! ssim = 0.8123
//! ```
//!
//! A PSNR of `inf` marks identical images. Failed images are listed but
//! excluded from the aggregate.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use sisr_core::generator::GeneratorWeights;
use sisr_core::image::{image_from_tensor, tensor_from_image, ImageBuffer};
use sisr_core::metrics::{psnr, ssim, EvalFailure, ImageMetrics, MetricReport};
use sisr_core::resample::{bicubic_resize, nearest_upscale};
use sisr_core::SCALE;

use crate::dataset::{Dataset, DatasetEntry};
use crate::error::{Error, Result};
use crate::io::save_image;

/// How LR images are brought back to HR size.
#[derive(Debug, Clone)]
pub enum Upscaler {
    Network(Box<GeneratorWeights<f32>>),
    Bicubic,
    Nearest,
}

impl Upscaler {
    pub fn upscale(&self, lr: &ImageBuffer) -> Result<ImageBuffer> {
        Ok(match self {
            Upscaler::Network(g) => image_from_tensor(&g.upscale(&tensor_from_image::<f32>(lr))?)?,
            Upscaler::Bicubic => bicubic_resize(lr, lr.width() * SCALE, lr.height() * SCALE)?,
            Upscaler::Nearest => nearest_upscale(lr, SCALE)?,
        })
    }
}

fn evaluate_entry(entry: &DatasetEntry, up: &Upscaler, save_dir: Option<&Path>) -> Result<ImageMetrics> {
    let pair = entry.load()?;
    let sr = up.upscale(&pair.lr_or_degraded()?)?;
    if let Some(dir) = save_dir {
        save_image(&sr, dir.join(output_name(&entry.name)))?;
    }
    Ok(ImageMetrics { name: entry.name.clone(), psnr_db: psnr(&sr, &pair.hr)?, ssim: ssim(&sr, &pair.hr)? })
}

/// File name for the SR output of a manifest entry: its path with
/// separators flattened, as PNG.
pub fn output_name(name: &str) -> String {
    let stem = Path::new(name).with_extension("");
    let flat: String = stem.to_string_lossy().chars().map(|c| if c == '/' || c == '\\' { '_' } else { c }).collect();
    format!("{flat}.png")
}

/// Scores every entry of `dataset`. Entries that fail to load or score are
/// recorded as failures rather than aborting the run.
pub fn evaluate_dataset(dataset: &Dataset, up: &Upscaler, label: &str, save_dir: Option<&Path>) -> Result<MetricReport> {
    if dataset.entries.is_empty() {
        return Err(Error::Core(sisr_core::Error::Domain(format!(
            "manifest {} has no entries to evaluate",
            dataset.manifest_path.display()
        ))));
    }
    if let Some(dir) = save_dir {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut images = Vec::new();
    let mut failures = Vec::new();
    for entry in &dataset.entries {
        match evaluate_entry(entry, up, save_dir) {
            Ok(m) => images.push(m),
            Err(e) => failures.push(EvalFailure { name: entry.name.clone(), reason: e.to_string() }),
        }
    }
    if !failures.is_empty() {
        warn!("{} of {} images failed and are excluded from the aggregate", failures.len(), dataset.entries.len());
    }
    Ok(MetricReport::new(label, images, failures))
}

pub fn report_to_toml(report: &MetricReport) -> Result<String> {
    toml::to_string(report).map_err(|e| Error::Failed(format!("cannot serialize report: {e}")))
}

pub fn write_report(report: &MetricReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report_to_toml(report)?).map_err(Error::io(path))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    toml::from_str(&text).map_err(|e| Error::Format { path: PathBuf::from(path), reason: format!("invalid report: {}", e.message()) })
}
