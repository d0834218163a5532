//! Reading and writing intermediate artifacts.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use scriptorium_core::VoteMatrix;

use crate::error::{Error, Result};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    json.push('\n');
    write_text(path, &json)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_votes(path: &Path, matrix: &VoteMatrix) -> Result<()> {
    write_text(path, &matrix.to_text())
}

pub fn read_votes(path: &Path) -> Result<VoteMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    VoteMatrix::from_text(&text).map_err(|e| Error::format(path, e))
}
