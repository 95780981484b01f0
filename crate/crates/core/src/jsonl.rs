//! Line-delimited JSON helpers shared by the task store and dataset exports.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("failed to serialize record: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> JsonlError + '_ {
    move |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes one record as a single line (no trailing newline).
pub fn to_line<T: Serialize>(record: &T) -> Result<String, JsonlError> {
    Ok(serde_json::to_string(record)?)
}

/// Writes `records` to `out`, one JSON object per line.
pub fn write_records<T: Serialize, W: Write>(out: &mut W, records: &[T]) -> Result<(), JsonlError> {
    for record in records {
        let line = to_line(record)?;
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|source| JsonlError::Io {
                path: "<writer>".into(),
                source,
            })?;
    }
    Ok(())
}

/// Replaces `path` with exactly `records`. An empty slice yields an empty file.
pub fn write_file<T: Serialize>(path: &Path, records: &[T]) -> Result<(), JsonlError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    write_records(&mut out, records)?;
    out.flush().map_err(io_err(path))
}

/// Appends one record to `path`, creating it if needed.
pub fn append_record<T: Serialize>(path: &Path, record: &T) -> Result<(), JsonlError> {
    let mut line = to_line(record)?;
    line.push('\n');
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    file.write_all(line.as_bytes()).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}

/// Reads every non-blank line of `path` as a `T`. Parse failures carry the
/// 1-based line number.
pub fn read_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_records(BufReader::new(file), &path.display().to_string())
}

pub fn read_records<T: DeserializeOwned, R: BufRead>(reader: R, label: &str) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: label.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            path: label.to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_record_set_writes_nothing() {
        let mut out = Vec::new();
        write_records::<serde_json::Value, _>(&mut out, &[]).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "{\"a\":1}\n\nnot json\n";
        let err = read_records::<serde_json::Value, _>(text.as_bytes(), "mem").unwrap_err();
        match err {
            JsonlError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn records_round_trip() {
        let records = vec![json!({"q": "a"}), json!({"q": "b"})];
        let mut out = Vec::new();
        write_records(&mut out, &records).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), "{\"q\":\"a\"}\n{\"q\":\"b\"}\n");
        let back: Vec<serde_json::Value> = read_records(out.as_slice(), "mem").unwrap();
        assert_eq!(back, records);
    }
}
