//! File formats and atomic output.

mod game_file;
mod obs_csv;
mod reports;

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

pub use game_file::{BasisEntry, GameFile, GameModel, KnownEntry, PlayerEntry};
pub use obs_csv::{parse_observations, read_observations, write_observations, write_predictions, read_predictions};
pub use reports::{
    labeled,
    bias_variance_csv, grid_csv, CovarianceReport, DiagnosticsReport, EnsembleReport, EstimateReport,
    LabeledValue, MetricsFile,
};

use crate::{Error, Result};

/// Reads a file, mapping "not found" to [`Error::MissingInput`].
pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingInput(path.to_path_buf()))
    }
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::parse("json output", e))?;
    s.push('\n');
    Ok(s)
}

/// Writes every file or none: all contents go to temporary files in the
/// target directories first, which are renamed into place only once all
/// writes have succeeded.
pub fn write_all_atomic(files: &[(PathBuf, String)]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, content) in files {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
        tmp.write_all(content.as_bytes())
            .and_then(|_| tmp.flush())
            .map_err(|e| Error::io(path, e))?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    }
    Ok(())
}
