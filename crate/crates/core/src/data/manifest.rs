use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

/// Relative manifest paths resolve against this directory when it is set,
/// and against the manifest's own directory otherwise.
pub const DATA_ROOT_ENV: &str = "SHARPBLUR_DATA_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurScenario {
    CameraShake,
    ObjectMotion,
    LowLight,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blur_scenario: Option<BlurScenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<PathBuf>,
}

impl ManifestEntry {
    pub fn new(id: impl Into<String>, path: impl Into<PathBuf>, label: Label, source: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            label,
            source: source.into(),
            blur_scenario: None,
            severity_b: None,
            mask_path: None,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.severity_b.is_some() != self.blur_scenario.is_some() {
            return Err("severity_b and blur_scenario must be given together".into());
        }
        if let Some(b) = self.severity_b {
            if !(0.0..=1.0).contains(&b) {
                return Err(format!("severity_b {b} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// A parsed manifest with paths resolved to absolute locations.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }
}

fn base_dir(manifest: &Path) -> PathBuf {
    if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
        return PathBuf::from(root);
    }
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Parses a JSON-lines manifest. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<Vec<ManifestEntry>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| Error::Manifest {
            path: origin.to_path_buf(),
            line: line_no,
            reason,
        };
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| {
            // serde's own position is relative to the line, not the file
            let msg = e.to_string();
            err(msg.rsplit_once(" at line ").map_or(msg.clone(), |(head, _)| head.to_string()))
        })?;
        entry.check().map_err(err)?;
        if !seen.insert(entry.id.clone()) {
            return Err(err(format!("duplicate id `{}`", entry.id)));
        }
        out.push(entry);
    }
    Ok(out)
}

/// Loads and validates a manifest; every referenced file must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = parse_manifest(&text, path)?;
    let base = base_dir(path);
    let line_nos: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i + 1)
        .collect();
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    for (e, &line) in entries.iter_mut().zip(&line_nos) {
        e.path = resolve(&e.path);
        e.mask_path = e.mask_path.as_deref().map(resolve);
        for p in std::iter::once(&e.path).chain(e.mask_path.as_ref()) {
            if !p.exists() {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("missing file {}", p.display()),
                });
            }
        }
    }
    Ok(Manifest {
        path: path.to_path_buf(),
        entries,
    })
}

pub fn manifest_to_string(entries: &[ManifestEntry]) -> Result<String> {
    let mut s = String::new();
    for e in entries {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    super::write_atomic(path.as_ref(), manifest_to_string(entries)?.as_bytes())
}
