//! Line-delimited JSON helpers shared by the file formats.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

impl JsonlError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        JsonlError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Reads every non-blank line of `path` as a `T`. Errors carry the 1-based line.
pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(|e| JsonlError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| JsonlError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Writes one compact JSON record per line.
pub fn write_all<'a, T, I>(path: &Path, records: I) -> Result<(), JsonlError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(|e| JsonlError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| JsonlError::Io {
            path: path.display().to_string(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(|e| JsonlError::io(path, e))?;
    }
    w.flush().map_err(|e| JsonlError::io(path, e))
}
