//! Configuration-file updates from removable drives, simulated as
//! subdirectories of a mount root.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::atomic::write_atomic;
use crate::bus::{Bus, BusError};
use crate::service::{fault, parse_args};

pub const DB_NODE: &str = "database";
pub const LIST_DRIVES: &str = "/db/list_drives";
pub const LIST_FILES: &str = "/db/list_files";
pub const OVERWRITE: &str = "/db/overwrite";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DbError {
    #[error("{0:?} is not in the list of replaceable files")]
    NotWhitelisted(String),
    #[error("{source_file:?} and {target:?} have different extensions")]
    ExtensionMismatch { source_file: String, target: String },
    #[error("no drive named {0:?}")]
    UnknownDrive(String),
    #[error("no file named {0:?} on the drive")]
    UnknownFile(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverwriteOutcome {
    pub target: String,
    pub backup: Option<String>,
    pub bytes: u64,
}

/// A single path component without separators or dot segments.
fn plain_name(name: &str) -> bool {
    let mut comps = Path::new(name).components();
    matches!(
        (comps.next(), comps.next()),
        (Some(Component::Normal(_)), None)
    ) && !name.contains('\\')
        && !name.contains('/')
}

/// A relative path made only of normal components.
fn safe_relative(name: &str) -> bool {
    !name.is_empty()
        && !name.contains('\\')
        && Path::new(name)
            .components()
            .all(|c| matches!(c, Component::Normal(_)))
}

pub struct Database {
    dir: PathBuf,
    mount_root: PathBuf,
    whitelist: Vec<String>,
}

impl Database {
    /// Whitelist entries are paths relative to `dir`; entries that could
    /// escape it are ignored.
    pub fn new(dir: &Path, mount_root: &Path, whitelist: &[String]) -> Self {
        Self {
            dir: dir.to_path_buf(),
            mount_root: mount_root.to_path_buf(),
            whitelist: whitelist
                .iter()
                .filter(|w| safe_relative(w))
                .cloned()
                .collect(),
        }
    }

    pub fn whitelist(&self) -> &[String] {
        &self.whitelist
    }

    pub fn start(self: &Arc<Self>, bus: &Arc<Bus>) -> Result<(), BusError> {
        bus.register_node(DB_NODE)?;
        let me = self.clone();
        bus.register_service(DB_NODE, LIST_DRIVES, move |_| {
            Ok(json!({ "drives": me.list_drives() }))
        })?;
        let me = self.clone();
        bus.register_service(DB_NODE, LIST_FILES, move |args| {
            #[derive(Deserialize)]
            struct A {
                drive: String,
            }
            let a: A = parse_args(args)?;
            Ok(json!({ "drive": a.drive, "files": me.list_files(&a.drive).map_err(fault)? }))
        })?;
        let me = self.clone();
        bus.register_service(DB_NODE, OVERWRITE, move |args| {
            #[derive(Deserialize)]
            struct A {
                drive: String,
                source_file: String,
                target_file: String,
            }
            let a: A = parse_args(args)?;
            let out = me
                .overwrite(&a.drive, &a.source_file, &a.target_file)
                .map_err(fault)?;
            Ok(json!(out))
        })?;
        Ok(())
    }

    pub fn list_drives(&self) -> Vec<String> {
        let mut drives: Vec<String> = std::fs::read_dir(&self.mount_root)
            .into_iter()
            .flatten()
            .flatten()
            .filter(|e| e.file_type().is_ok_and(|t| t.is_dir()))
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        drives.sort();
        drives
    }

    fn drive_path(&self, drive: &str) -> Result<PathBuf, DbError> {
        let path = self.mount_root.join(drive);
        if plain_name(drive) && path.is_dir() {
            Ok(path)
        } else {
            Err(DbError::UnknownDrive(drive.into()))
        }
    }

    pub fn list_files(&self, drive: &str) -> Result<Vec<String>, DbError> {
        let path = self.drive_path(drive)?;
        let mut files: Vec<String> = std::fs::read_dir(path)
            .map_err(|e| DbError::Io(e.to_string()))?
            .flatten()
            .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        files.sort();
        Ok(files)
    }

    /// Replaces a whitelisted file with one from a drive, keeping the
    /// previous version as `<target>.bak`.
    pub fn overwrite(
        &self,
        drive: &str,
        source: &str,
        target: &str,
    ) -> Result<OverwriteOutcome, DbError> {
        if !safe_relative(target) || !self.whitelist.iter().any(|w| w == target) {
            return Err(DbError::NotWhitelisted(target.into()));
        }
        let drive_dir = self.drive_path(drive)?;
        let source_path = drive_dir.join(source);
        if !plain_name(source) || !source_path.is_file() {
            return Err(DbError::UnknownFile(source.into()));
        }
        let ext = |s: &str| Path::new(s).extension().map(|e| e.to_ascii_lowercase());
        if ext(source) != ext(target) {
            return Err(DbError::ExtensionMismatch {
                source_file: source.into(),
                target: target.into(),
            });
        }
        let target_path = self.dir.join(target);
        self.ensure_inside(&target_path)?;
        let bytes = std::fs::read(&source_path).map_err(|e| DbError::Io(e.to_string()))?;
        let backup = if target_path.is_file() {
            let bak = PathBuf::from(format!("{}.bak", target_path.display()));
            std::fs::copy(&target_path, &bak).map_err(|e| DbError::Io(e.to_string()))?;
            Some(bak.display().to_string())
        } else {
            None
        };
        write_atomic(&target_path, &bytes).map_err(|e| DbError::Io(e.to_string()))?;
        Ok(OverwriteOutcome {
            target: target_path.display().to_string(),
            backup,
            bytes: bytes.len() as u64,
        })
    }

    /// Guards against symlinked directories inside the database pointing
    /// elsewhere.
    fn ensure_inside(&self, target: &Path) -> Result<(), DbError> {
        let root = std::fs::canonicalize(&self.dir).map_err(|e| DbError::Io(e.to_string()))?;
        let parent = target.parent().unwrap_or(&self.dir);
        std::fs::create_dir_all(parent).map_err(|e| DbError::Io(e.to_string()))?;
        let parent = std::fs::canonicalize(parent).map_err(|e| DbError::Io(e.to_string()))?;
        if parent.starts_with(&root) {
            Ok(())
        } else {
            Err(DbError::NotWhitelisted(target.display().to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn name_checks() {
        assert!(plain_name("usb0"));
        assert!(!plain_name("../usb0"));
        assert!(!plain_name("a/b"));
        assert!(!plain_name(".."));
        assert!(!plain_name(""));
        assert!(safe_relative("cfg/wires.csv"));
        assert!(!safe_relative("../wires.csv"));
        assert!(!safe_relative("/etc/passwd"));
        assert!(!safe_relative("./wires.csv"));
    }
}
