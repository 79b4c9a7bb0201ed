//! Crash-safe file replacement: write a temp file beside the target, then
//! rename it over the target.

use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

/// Called between the temp-file write and the rename. Returning an error
/// aborts the replacement; tests use it to inject faults.
pub type FaultHook = Arc<dyn Fn(&Path) -> io::Result<()> + Send + Sync>;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    write_atomic_with(path, bytes, None)
}

pub fn write_atomic_with(path: &Path, bytes: &[u8], hook: Option<&FaultHook>) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    if let Some(hook) = hook {
        hook(tmp.path())?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
