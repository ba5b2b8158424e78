//! JSON-lines dataset manifest.
//!
//! One object per line:
//! `{"video_id": "v0", "frame_feature_path": "frames/v0.tgf", "duration_frames": 80,
//!   "annotations": [{"query_feature_path": "queries/v0_0.tgf", "t_s": 4, "t_e": 10}]}`
//!
//! Relative paths are resolved against the manifest's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::feature_file::read_header;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub query_feature_path: PathBuf,
    pub t_s: usize,
    pub t_e: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub frame_feature_path: PathBuf,
    pub duration_frames: usize,
    pub annotations: Vec<Annotation>,
}

impl ManifestEntry {
    /// Checks annotation bounds against the duration.
    pub fn validate_bounds(&self) -> Result<()> {
        for (k, a) in self.annotations.iter().enumerate() {
            if a.t_e < a.t_s || a.t_e >= self.duration_frames {
                return Err(Error::Validation {
                    entry: format!("{}#{k}", self.video_id),
                    reason: format!(
                        "interval [{}, {}] outside 0..{}",
                        a.t_s, a.t_e, self.duration_frames
                    ),
                });
            }
        }
        Ok(())
    }

    fn resolve(&mut self, root: &Path) {
        if self.frame_feature_path.is_relative() {
            self.frame_feature_path = root.join(&self.frame_feature_path);
        }
        for a in &mut self.annotations {
            if a.query_feature_path.is_relative() {
                a.query_feature_path = root.join(&a.query_feature_path);
            }
        }
    }

    fn validate_files(&self) -> Result<()> {
        let invalid = |reason: String| Error::Validation {
            entry: self.video_id.clone(),
            reason,
        };
        let (count, _) = read_header(&self.frame_feature_path)
            .map_err(|e| invalid(format!("frame features: {e}")))?;
        if count != self.duration_frames {
            return Err(invalid(format!(
                "frame file has {count} rows, duration is {}",
                self.duration_frames
            )));
        }
        for a in &self.annotations {
            let (tokens, _) = read_header(&a.query_feature_path)
                .map_err(|e| invalid(format!("query features: {e}")))?;
            if tokens == 0 {
                return Err(invalid(format!(
                    "{} holds no tokens",
                    a.query_feature_path.display()
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str, root: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| Error::Validation {
                entry: format!("line {}", line_no + 1),
                reason: e.to_string(),
            })?;
        entry.validate_bounds()?;
        entry.resolve(root);
        entries.push(entry);
    }
    Ok(entries)
}

/// Loads and fully validates a manifest, including referenced files.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, root)?;
    for e in &entries {
        e.validate_files()?;
    }
    Ok(entries)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n").expect("writing to a Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
