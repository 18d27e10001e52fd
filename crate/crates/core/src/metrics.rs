//! PSNR, SSIM and benchmark report tables.

#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{domain_err, Result};
use crate::image::ImageBuffer;

/// Side length of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_same_dims(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(domain_err!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all RGB samples with peak 1.0.
/// Identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_same_dims(a, b)?;
    let n = a.pixels().len() as f64;
    let mse = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - center;
        *v = libm_exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

fn libm_exp(x: f64) -> f64 {
    num_traits::Float::exp(x)
}

/// Valid-mode separable filtering of a `w x h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = Vec::with_capacity(ow * h);
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp.push(k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            out.push((0..SSIM_WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum::<f64>());
        }
    }
    out
}

/// Mean structural similarity of the BT.601 luma planes, using 11x11
/// Gaussian windows (σ = 1.5) placed wherever they fit inside the image.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_same_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(domain_err!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {w}x{h}"));
    }
    let (ya, yb) = (a.luma(), b.luma());
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&ya, w, h, &k);
    let mu_b = filter_valid(&yb, w, h, &k);
    let e_aa = filter_valid(&prod(&ya, &ya), w, h, &k);
    let e_bb = filter_valid(&prod(&yb, &yb), w, h, &k);
    let e_ab = filter_valid(&prod(&ya, &yb), w, h, &k);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2));
    }
    Ok(total / mu_a.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageMetrics {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalFailure {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Aggregate {
    pub count: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-image scores of one evaluated method, with their means.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub label: String,
    pub images: Vec<ImageMetrics>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub failures: Vec<EvalFailure>,
    pub aggregate: Aggregate,
}

impl MetricReport {
    pub fn new(label: impl Into<String>, images: Vec<ImageMetrics>, failures: Vec<EvalFailure>) -> Self {
        let aggregate = aggregate(&images);
        Self { label: label.into(), images, failures, aggregate }
    }

    /// Recomputes the means from the per-image list.
    pub fn recompute_aggregate(&self) -> Aggregate {
        aggregate(&self.images)
    }
}

fn aggregate(images: &[ImageMetrics]) -> Aggregate {
    let n = images.len();
    let mean = |f: fn(&ImageMetrics) -> f64| {
        if n == 0 {
            f64::NAN
        } else {
            images.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Aggregate { count: n, psnr_db: mean(|m| m.psnr_db), ssim: mean(|m| m.ssim) }
}

/// A published result displayed beside measured rows. Never computed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub method: &'static str,
    pub loss: &'static str,
    pub psnr_db: f64,
    pub ssim: f64,
    pub mos: Option<f64>,
}

/// Set5 results published for SRResNet, SRGAN and the RRDB relativistic GAN
/// under MSE and VGG22 content losses.
pub fn published_set5_rows() -> Vec<ReferenceRow> {
    let row = |method, loss, psnr_db, ssim, mos| ReferenceRow { method, loss, psnr_db, ssim, mos: Some(mos) };
    alloc::vec![
        row("SRResNet", "MSE", 32.05, 0.9019, 3.37),
        row("SRResNet", "VGG22", 30.51, 0.8803, 3.46),
        row("SRGAN", "MSE", 30.64, 0.8701, 3.77),
        row("SRGAN", "VGG22", 29.84, 0.8468, 3.478),
        row("Our method", "MSE", 29.56, 0.9109, 3.64),
        row("Our method", "VGG22", 28.12, 0.8881, 3.49),
    ]
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

const RULE: &str = "--------------------------------  ------  ---------  ------  -----";

fn header(out: &mut String) {
    let _ = writeln!(out, "{:<32}  {:>6}  {:>9}  {:>6}  {:>5}", "method", "images", "PSNR (dB)", "SSIM", "MOS");
    let _ = writeln!(out, "{RULE}");
}

/// Summary table: one row per measured report, then the reference rows.
pub fn format_comparison(reports: &[MetricReport], reference: &[ReferenceRow]) -> String {
    let mut out = String::new();
    header(&mut out);
    for r in reports {
        let _ = writeln!(
            out,
            "{:<32}  {:>6}  {:>9}  {:>6.4}  {:>5}",
            r.label,
            r.aggregate.count,
            fmt_psnr(r.aggregate.psnr_db),
            r.aggregate.ssim,
            "-"
        );
    }
    if !reference.is_empty() {
        let _ = writeln!(out, "{RULE}");
        for row in reference {
            let name = format!("{} / {}", row.method, row.loss);
            let mos = row.mos.map_or_else(|| String::from("-"), |m| format!("{m}"));
            let _ = writeln!(
                out,
                "{:<32}  {:>6}  {:>9}  {:>6}  {:>5}",
                name,
                "-",
                format!("{}", row.psnr_db),
                format!("{}", row.ssim),
                mos
            );
        }
    }
    out
}

/// Per-image listing of one report followed by its summary table.
pub fn format_report(report: &MetricReport, reference: &[ReferenceRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<32}  {:>9}  {:>6}", "image", "PSNR (dB)", "SSIM");
    let _ = writeln!(out, "--------------------------------  ---------  ------");
    for m in &report.images {
        let _ = writeln!(out, "{:<32}  {:>9}  {:>6.4}", m.name, fmt_psnr(m.psnr_db), m.ssim);
    }
    for f in &report.failures {
        let _ = writeln!(out, "{:<32}  failed: {}", f.name, f.reason);
    }
    out.push('\n');
    out.push_str(&format_comparison(core::slice::from_ref(report), reference));
    out
}
