//! Where results go: stdout, or a file replaced atomically.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Runs `write` against stdout or a temp file next to `path`, renamed over
/// `path` only after the whole body was written.
pub fn emit<F>(path: Option<&Path>, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match path {
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
        Some(path) => write_atomic(path, write),
    }
}

pub fn write_atomic<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    write(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

pub fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    emit(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(moealloc::Error::from)?;
        writeln!(w)?;
        Ok(())
    })
}
