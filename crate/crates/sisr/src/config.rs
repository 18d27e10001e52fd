//! Run configuration files.
//!
//! A run is described by a TOML file with a `[paths]` table and a `[train]`
//! table whose nested tables hold the loss weights, generator architecture,
//! discriminator and feature network:
//!
//! ```toml
//! [paths]
//! manifest = "data/manifest.txt"   # relative to this file
//! out_dir = "runs/tiny"            # relative to this file
//! # feature_weights = "vgg.srwt"   # optional; otherwise seeded
//!
//! [train]
//! seed = 7
//! batch_size = 4
//! hr_crop = 64
//! phase1_steps = 1000
//! phase2_steps = 0
//!
//! [train.arch]
//! num_rrdb = 2
//! num_features = 16
//! ```
//!
//! Omitted keys take their defaults; unknown keys are rejected. Every run
//! writes `resolved_config.toml` into its output directory with all values
//! filled in and absolute paths, so re-running that file repeats the run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sisr_core::train::TrainConfig;

use crate::error::{Error, Result};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// Archive of externally trained feature-network weights matching
    /// `[train.features]`. Without it the network is drawn from its seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_weights: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub phase1_steps: Option<u64>,
    pub phase2_steps: Option<u64>,
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(Error::io(p))
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config { path: origin.to_path_buf(), reason: e.message().to_string() })
    }

    /// Reads a config file, resolving its relative paths against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config { path: path.to_path_buf(), reason: e.to_string() })?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.manifest = absolute(&base.join(&cfg.paths.manifest))?;
        cfg.paths.out_dir = absolute(&base.join(&cfg.paths.out_dir))?;
        if let Some(p) = &cfg.paths.feature_weights {
            cfg.paths.feature_weights = Some(absolute(&base.join(p))?);
        }
        Ok(cfg)
    }

    /// Applies overrides; override paths are taken relative to the working
    /// directory.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.train.seed = s;
        }
        if let Some(n) = o.phase1_steps {
            self.train.phase1_steps = n;
        }
        if let Some(n) = o.phase2_steps {
            self.train.phase2_steps = n;
        }
        if let Some(p) = &o.manifest {
            self.paths.manifest = absolute(p)?;
        }
        if let Some(p) = &o.out_dir {
            self.paths.out_dir = absolute(p)?;
        }
        Ok(())
    }

    /// Checks everything that can be checked without running: training
    /// hyperparameters, a representable seed and an existing manifest.
    pub fn validate(&self, origin: &Path) -> Result<()> {
        let fail = |reason: String| Error::Config { path: origin.to_path_buf(), reason };
        self.train.validate().map_err(|e| fail(e.to_string()))?;
        if self.train.seed > i64::MAX as u64 {
            return Err(fail(format!("seed {} exceeds {}", self.train.seed, i64::MAX)));
        }
        if !self.paths.manifest.is_file() {
            return Err(fail(format!("manifest {} does not exist", self.paths.manifest.display())));
        }
        if let Some(p) = self.paths.feature_weights.as_ref().filter(|p| !p.is_file()) {
            return Err(fail(format!("feature weights {} do not exist", p.display())));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Failed(format!("cannot serialize config: {e}")))
    }
}
