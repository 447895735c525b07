//! JSONL dataset manifests: one image per line with point and/or GT-mask
//! targets. Image ids are file stems and must be unique.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAnnotation {
    /// Clicked point `[x, y]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[i64; 2]>,
    /// Path of a GT mask (PNG or RLE JSON).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image: PathBuf,
    #[serde(default)]
    pub targets: Vec<TargetAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl ManifestRecord {
    pub fn id(&self) -> Result<String> {
        image_id(&self.image)
    }
}

pub fn image_id(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .ok_or_else(|| Error::Manifest(format!("no usable file name in {}", path.display())))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    /// Parses JSONL; relative paths resolve against `base`. Blank lines are skipped.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut r: ManifestRecord =
                serde_json::from_str(line).map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1)))?;
            r.image = base.join(&r.image);
            for t in &mut r.targets {
                if t.point.is_none() && t.gt.is_none() {
                    return Err(Error::Manifest(format!("line {}: target needs a point or a gt mask", i + 1)));
                }
                if let Some(g) = &t.gt {
                    t.gt = Some(base.join(g));
                }
            }
            if !ids.insert(r.id()?) {
                return Err(Error::Manifest(format!("line {}: duplicate image id {:?}", i + 1, r.id()?)));
            }
            records.push(r);
        }
        Ok(Self { records })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Every `.png`/`.pgm` directly inside `dir`, sorted by file name, no targets.
    pub fn scan(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if p.is_file() && matches!(ext.as_deref(), Some("png" | "pgm")) {
                paths.push(p);
            }
        }
        paths.sort();
        let mut text = String::new();
        for p in paths {
            text.push_str(&serde_json::to_string(&ManifestRecord {
                image: p,
                targets: Vec::new(),
                split: None,
            })?);
            text.push('\n');
        }
        Self::parse(&text, dir)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Loads a GT mask stored either as PNG or as an RLE text file.
pub fn read_mask(path: &Path) -> Result<crate::mask::Mask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        crate::mask::Mask::from_png_bytes(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::MalformedRle("not utf-8".into()))?;
        crate::mask::Mask::decode_rle(text.trim())
    }
}
