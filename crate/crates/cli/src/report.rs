//! Summaries of run directories found on disk.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::execute::{parse_manifest, RunManifest, MANIFEST_FILE};

#[derive(Debug, Clone)]
pub struct ManifestReport {
    pub path: PathBuf,
    pub manifest: RunManifest,
    /// Files whose size or digest no longer match.
    pub mismatched: Vec<String>,
    /// Files in the run directory that the manifest does not list.
    pub orphans: Vec<String>,
}

impl ManifestReport {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty() && self.orphans.is_empty() && self.manifest.all_passed()
    }

    pub fn line(&self) -> String {
        let s = &self.manifest.summary;
        format!(
            "run name={} dir={} outputs={} t1={} checks={}/{} skipped={} files={} orphans={}",
            self.manifest.name,
            self.path.parent().unwrap_or(Path::new(".")).display(),
            s.outputs,
            s.t1,
            s.checks_passed,
            s.checks_passed + s.checks_failed,
            s.checks_skipped,
            if self.mismatched.is_empty() { "ok".to_string() } else { self.mismatched.join("+") },
            self.orphans.len(),
        )
    }
}

/// Every `manifest.json` below `root`, in sorted order.
pub fn find_manifests(root: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| CliError::io(&dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(&dir, err)))
            .collect::<CliResult<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == MANIFEST_FILE) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn inspect(path: &Path) -> CliResult<ManifestReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let manifest = parse_manifest(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut mismatched = Vec::new();
    for f in &manifest.files {
        let p = dir.join(&f.name);
        match fs::read(&p) {
            Ok(bytes) if bytes.len() as u64 == f.bytes && hex::encode(Sha256::digest(&bytes)) == f.sha256 => {}
            _ => mismatched.push(f.name.clone()),
        }
    }
    let mut orphans = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let e = e.map_err(|err| CliError::io(dir, err))?;
        if !e.path().is_file() {
            continue;
        }
        let name = e.file_name().to_string_lossy().into_owned();
        if name != MANIFEST_FILE && !manifest.files.iter().any(|f| f.name == name) {
            orphans.push(name);
        }
    }
    orphans.sort();
    Ok(ManifestReport {
        path: path.to_path_buf(),
        manifest,
        mismatched,
        orphans,
    })
}
