//! On-disk formats: NetPBM images, IRSG checkpoints, filter-bank text files
//! and corpus manifests.

pub mod bankfile;
pub mod checkpoint;
pub mod manifest;
pub mod netpbm;

use std::path::Path;

/// Reads a whole file, naming the path on failure.
pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes a whole file, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), String> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}
