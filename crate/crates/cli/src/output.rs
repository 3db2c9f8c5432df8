use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use felb_core::io::{read_factor, read_matrix_market, write_factor, write_matrix_market};
use felb_core::{BinaryMatrix, FactorMatrix};
use tempfile::NamedTempFile;

use crate::error::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut BufWriter<&mut File>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| io_err(path, e)))
}

pub fn write_mtx(path: &Path, m: &BinaryMatrix) -> Result<(), CliError> {
    write_atomic(path, |w| write_matrix_market(m, w).map_err(|e| io_err(path, e)))
}

pub fn write_bin(path: &Path, m: &FactorMatrix) -> Result<(), CliError> {
    write_atomic(path, |w| write_factor(m, w).map_err(|e| io_err(path, e)))
}

pub fn read_mtx(path: &Path) -> Result<BinaryMatrix, CliError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_matrix_market(BufReader::new(f)).map_err(|e| io_err(path, e))
}

pub fn read_bin(path: &Path) -> Result<FactorMatrix, CliError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_factor(BufReader::new(f)).map_err(|e| io_err(path, e))
}
