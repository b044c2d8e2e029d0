//! Report bundles: artifacts are written to a staging directory that is
//! renamed into place only when every stage succeeded.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Format;

pub const MANIFEST: &str = "manifest.json";
pub const RUN_LOG: &str = "run.log";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0} exists and is not a previous report bundle; refusing to replace it")]
    Occupied(PathBuf),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug)]
pub struct BundleWriter {
    target: PathBuf,
    staging: PathBuf,
    formats: BTreeSet<Format>,
    artifacts: Vec<Artifact>,
}

impl BundleWriter {
    pub fn create(target: &Path, formats: &[Format]) -> Result<Self, BundleError> {
        check_replaceable(target)?;
        let name = target.file_name().map_or_else(|| "bundle".into(), |n| n.to_string_lossy().into_owned());
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(io_at(&parent))?;
        let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io_at(&staging))?;
        }
        fs::create_dir_all(&staging).map_err(io_at(&staging))?;
        Ok(Self { target: target.to_path_buf(), staging, formats: formats.iter().copied().collect(), artifacts: Vec::new() })
    }

    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Writes `bytes` at `rel` (forward slashes) inside the bundle.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), BundleError> {
        let path = self.staging.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_at(dir))?;
        }
        fs::write(&path, bytes).map_err(io_at(&path))?;
        self.artifacts.push(Artifact { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn artifacts(&self) -> Vec<Artifact> {
        let mut list = self.artifacts.clone();
        list.sort_by(|a, b| a.path.cmp(&b.path));
        list
    }

    /// Adds the manifest and log, then moves the bundle into place.
    pub fn commit(self, manifest: &[u8], log: &str) -> Result<PathBuf, BundleError> {
        write_plain(&self.staging.join(MANIFEST), manifest)?;
        write_plain(&self.staging.join(RUN_LOG), log.as_bytes())?;
        replace_with(&self.staging, &self.target)?;
        Ok(self.target)
    }

    /// Drops every artifact and leaves a bundle holding only the manifest and log.
    pub fn abort(self, manifest: &[u8], log: &str) -> Result<PathBuf, BundleError> {
        fs::remove_dir_all(&self.staging).map_err(io_at(&self.staging))?;
        fs::create_dir_all(&self.staging).map_err(io_at(&self.staging))?;
        write_plain(&self.staging.join(MANIFEST), manifest)?;
        write_plain(&self.staging.join(RUN_LOG), log.as_bytes())?;
        replace_with(&self.staging, &self.target)?;
        Ok(self.target)
    }
}

fn write_plain(path: &Path, bytes: &[u8]) -> Result<(), BundleError> {
    fs::write(path, bytes).map_err(io_at(path))
}

/// An existing target may only be an empty directory or an earlier bundle.
fn check_replaceable(target: &Path) -> Result<(), BundleError> {
    if !target.exists() {
        return Ok(());
    }
    if !target.is_dir() {
        return Err(BundleError::Occupied(target.to_path_buf()));
    }
    let mut entries = fs::read_dir(target).map_err(io_at(target))?;
    if entries.next().is_none() || target.join(MANIFEST).is_file() {
        Ok(())
    } else {
        Err(BundleError::Occupied(target.to_path_buf()))
    }
}

fn replace_with(staging: &Path, target: &Path) -> Result<(), BundleError> {
    check_replaceable(target)?;
    if target.exists() {
        fs::remove_dir_all(target).map_err(io_at(target))?;
    }
    fs::rename(staging, target).map_err(io_at(target))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_moves_staged_files_into_place() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        let mut w = BundleWriter::create(&target, &[Format::Csv]).unwrap();
        w.write("a/b.csv", b"x\n1\n").unwrap();
        assert!(!target.exists());
        w.commit(b"{}\n", "log\n").unwrap();
        assert_eq!(fs::read(target.join("a/b.csv")).unwrap(), b"x\n1\n");
        assert!(target.join(MANIFEST).is_file());
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn abort_keeps_only_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        let mut w = BundleWriter::create(&target, &[Format::Csv]).unwrap();
        w.write("partial.csv", b"1\n").unwrap();
        w.abort(b"{\"status\": \"failed\"}\n", "").unwrap();
        let mut names: Vec<_> = fs::read_dir(&target).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names, vec![MANIFEST, RUN_LOG]);
    }

    #[test]
    fn refuses_to_replace_foreign_directories() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("notes.txt"), "keep").unwrap();
        assert!(matches!(BundleWriter::create(dir.path(), &[]), Err(BundleError::Occupied(_))));
    }

    #[test]
    fn digest_matches_a_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
