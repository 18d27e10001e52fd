//! Manifest files on disk: parsing, path resolution and image loading.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sisr_core::manifest::{parse_manifest, DatasetManifest};
use sisr_core::patch::ImagePair;
use sisr_core::{Error as CoreError, SCALE};

use crate::error::{Error, Result};
use crate::io::load_image;

/// One manifest entry with absolute paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    /// The HR path as written in the manifest, used to name results.
    pub name: String,
    pub hr: PathBuf,
    pub lr: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub manifest_path: PathBuf,
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

/// Parses `path` and resolves every entry against the manifest's root,
/// which is itself relative to the manifest's directory. Missing files are
/// reported before any image is decoded.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let manifest = parse_manifest(&text).map_err(Error::in_file(path))?;
    resolve(path, &manifest)
}

pub fn resolve(path: &Path, manifest: &DatasetManifest) -> Result<Dataset> {
    let base = path.parent().unwrap_or(Path::new("."));
    let root = base.join(&manifest.root);
    let missing = |what: &str, p: &Path, i: usize| {
        Error::InFile {
            path: path.to_path_buf(),
            source: CoreError::ManifestInvalid(format!("entry {i}: {what} file {} not found", p.display())),
        }
    };
    let mut entries = Vec::with_capacity(manifest.len());
    for (i, e) in manifest.entries.iter().enumerate() {
        let hr = root.join(&e.hr);
        if !hr.is_file() {
            return Err(missing("HR", &hr, i));
        }
        let lr = match &e.lr {
            Some(l) => {
                let lr = root.join(l);
                if !lr.is_file() {
                    return Err(missing("LR", &lr, i));
                }
                Some(lr)
            }
            None => None,
        };
        entries.push(DatasetEntry { name: e.hr.clone(), hr, lr });
    }
    Ok(Dataset { manifest_path: path.to_path_buf(), root, entries })
}

impl DatasetEntry {
    /// Decodes the pair, checking the 4x size relation.
    pub fn load(&self) -> Result<ImagePair> {
        let hr = load_image(&self.hr)?;
        let lr = match &self.lr {
            Some(p) => {
                let lr = load_image(p)?;
                if lr.width() * SCALE != hr.width() || lr.height() * SCALE != hr.height() {
                    return Err(Error::Image {
                        path: p.clone(),
                        reason: format!(
                            "LR is {}x{} but HR {} is {}x{}",
                            lr.width(),
                            lr.height(),
                            self.hr.display(),
                            hr.width(),
                            hr.height()
                        ),
                    });
                }
                Some(lr)
            }
            None => {
                if hr.width() % SCALE != 0 || hr.height() % SCALE != 0 {
                    return Err(Error::Image {
                        path: self.hr.clone(),
                        reason: format!("{}x{} is not divisible by {SCALE}", hr.width(), hr.height()),
                    });
                }
                None
            }
        };
        Ok(ImagePair { hr, lr })
    }
}

impl Dataset {
    /// Decodes every entry; any failure is fatal.
    pub fn load_all(&self) -> Result<Vec<ImagePair>> {
        self.entries.iter().map(DatasetEntry::load).collect()
    }
}

/// Manifest text for `(hr, lr)` path pairs under `root`.
pub fn manifest_text(root: &str, entries: &[(String, Option<String>)]) -> Result<String> {
    let mut out = String::from("scale 4\n");
    let check = |p: &str| {
        if p.chars().any(char::is_whitespace) || p.contains('#') {
            Err(Error::Failed(format!("path `{p}` contains whitespace or `#`, which manifests cannot express")))
        } else {
            Ok(())
        }
    };
    check(root)?;
    let _ = writeln!(out, "root {root}");
    for (hr, lr) in entries {
        check(hr)?;
        match lr {
            Some(lr) => {
                check(lr)?;
                let _ = writeln!(out, "entry {hr} {lr}");
            }
            None => {
                let _ = writeln!(out, "entry {hr}");
            }
        }
    }
    Ok(out)
}
