//! Input discovery and output bookkeeping.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::errors::InputError;

const MANIFEST: &str = "manifest.json";

fn collect_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .with_context(|| format!("cannot list {}", dir.display()))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_manifests(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == MANIFEST) {
            out.push(p);
        }
    }
    Ok(())
}

/// Manifest files named directly, or found under the given directories, in
/// sorted order per argument.
pub fn discover_manifests(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_file() {
            out.push(p.clone());
        } else if p.is_dir() {
            collect_manifests(p, &mut out)?;
        } else {
            return Err(InputError(format!("input {} does not exist", p.display())).into());
        }
    }
    if out.is_empty() {
        return Err(InputError("no ensemble manifests found".into()).into());
    }
    Ok(out)
}

/// PNG files directly inside `dir`, sorted.
pub fn list_pngs(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(InputError(format!("{} is not a directory", dir.display())).into());
    }
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    v.sort();
    Ok(v)
}

pub fn require_file(p: &Path) -> anyhow::Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(InputError(format!("missing input file {}", p.display())).into())
    }
}

/// Records every file a command writes and deletes them again unless the
/// command finishes successfully.
#[derive(Debug, Default)]
pub struct Outputs {
    files: BTreeSet<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates `dir` (and parents), remembering what did not exist before.
    pub fn dir(&mut self, dir: &Path) -> anyhow::Result<PathBuf> {
        if dir.as_os_str().is_empty() {
            return Ok(dir.to_path_buf());
        }
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        self.dirs.extend(missing.into_iter().rev());
        Ok(dir.to_path_buf())
    }

    pub fn track(&mut self, path: impl Into<PathBuf>) {
        self.files.insert(path.into());
    }

    pub fn extend(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(paths);
    }

    pub fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        self.track(path);
        fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}
