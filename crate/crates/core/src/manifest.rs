//! Dataset manifests.
//!
//! A manifest is a UTF-8 text file with one directive per line:
//!
//! ```text
//! # comments and blank lines are ignored
//! scale 4
//! root images
//! entry hr/0001.png
//! entry hr/0002.png lr/0002.png
//! ```
//!
//! `scale` is required and must be 4. `root` is optional (default `.`) and
//! is resolved against the manifest's own directory; entry paths are
//! resolved against the root. Each `entry` names an HR image and optionally
//! a matching LR image; without one, the LR side is synthesized by bicubic
//! downscaling. Fields are whitespace separated, so paths cannot contain
//! whitespace.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::SCALE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub hr: String,
    pub lr: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub scale: usize,
    pub root: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<String>, entries: Vec<ManifestEntry>) -> Self {
        Self { scale: SCALE, root: root.into(), entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let mut scale = None;
    let mut root = None;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let keyword = fields.next().expect("non-empty line");
        let args: Vec<&str> = fields.collect();
        let err = |reason: String| Error::ManifestParse { line, reason };
        match keyword {
            "scale" => {
                if scale.is_some() {
                    return Err(err("duplicate `scale`".into()));
                }
                let [value] = args.as_slice() else {
                    return Err(err(format!("`scale` takes one value, got {}", args.len())));
                };
                scale = Some(value.parse::<usize>().map_err(|_| err(format!("invalid scale `{value}`")))?);
            }
            "root" => {
                if root.is_some() {
                    return Err(err("duplicate `root`".into()));
                }
                let [value] = args.as_slice() else {
                    return Err(err(format!("`root` takes one path, got {}", args.len())));
                };
                root = Some(value.to_string());
            }
            "entry" => match args.as_slice() {
                [hr] => entries.push(ManifestEntry { hr: hr.to_string(), lr: None }),
                [hr, lr] => entries.push(ManifestEntry { hr: hr.to_string(), lr: Some(lr.to_string()) }),
                _ => return Err(err(format!("`entry` takes an HR path and an optional LR path, got {} fields", args.len()))),
            },
            other => return Err(err(format!("unknown directive `{other}`"))),
        }
    }
    let scale = scale.ok_or_else(|| Error::ManifestInvalid("missing `scale` directive".into()))?;
    if scale != SCALE {
        return Err(Error::ManifestInvalid(format!("scale must be {SCALE}, got {scale}")));
    }
    Ok(DatasetManifest { scale, root: root.unwrap_or_else(|| ".".into()), entries })
}

impl fmt::Display for DatasetManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scale {}", self.scale)?;
        writeln!(f, "root {}", self.root)?;
        for e in &self.entries {
            match &e.lr {
                Some(lr) => writeln!(f, "entry {} {}", e.hr, lr)?,
                None => writeln!(f, "entry {}", e.hr)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_comments() {
        let m = parse_manifest("# set\nscale 4\nroot data\n\nentry a.png\nentry b.png b_lr.png # paired\n").unwrap();
        assert_eq!(m.root, "data");
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[1].lr.as_deref(), Some("b_lr.png"));
        assert_eq!(parse_manifest(&m.to_string()).unwrap(), m);
    }

    #[test]
    fn empty_entry_list_is_allowed() {
        let m = parse_manifest("scale 4\n").unwrap();
        assert!(m.is_empty());
        assert_eq!(m.root, ".");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_manifest("scale 4\n\nentry a b c\n").unwrap_err();
        assert_eq!(e, Error::ManifestParse { line: 3, reason: "`entry` takes an HR path and an optional LR path, got 3 fields".into() });
        assert!(matches!(parse_manifest("scale four"), Err(Error::ManifestParse { line: 1, .. })));
        assert!(matches!(parse_manifest("scale 4\nfoo bar"), Err(Error::ManifestParse { line: 2, .. })));
    }

    #[test]
    fn scale_must_be_four() {
        assert!(matches!(parse_manifest("scale 2\nentry a.png"), Err(Error::ManifestInvalid(_))));
        assert!(matches!(parse_manifest("entry a.png"), Err(Error::ManifestInvalid(_))));
    }
}
