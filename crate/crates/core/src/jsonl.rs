//! Line-delimited JSON reading and writing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rejected input line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

/// Records parsed from a line-delimited file, plus the lines that were skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            records: Vec::new(),
            errors: Vec::new(),
        }
    }
}

/// Parses each non-blank line with `parse`; failures are collected, not fatal.
pub fn parse_lines<R, T, F>(reader: R, mut parse: F) -> std::io::Result<Parsed<T>>
where
    R: Read,
    F: FnMut(&str) -> std::result::Result<T, String>,
{
    let mut parsed = Parsed::default();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse(&line) {
            Ok(record) => parsed.records.push(record),
            Err(message) => parsed.errors.push(LineError {
                line: idx + 1,
                message,
            }),
        }
    }
    Ok(parsed)
}

pub fn read_file<T, F>(path: &Path, parse: F) -> Result<Parsed<T>>
where
    F: FnMut(&str) -> std::result::Result<T, String>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lines(file, parse).map_err(|e| Error::io(path, e))
}

/// Reads every line as `T`, failing on the first malformed line.
pub fn read_strict<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let parsed = read_file(path, |line| {
        serde_json::from_str::<T>(line).map_err(|e| e.to_string())
    })?;
    if let Some(err) = parsed.errors.first() {
        return Err(Error::invalid(
            "jsonl",
            format!("{}:{}: {}", path.display(), err.line, err.message),
        ));
    }
    Ok(parsed.records)
}

pub fn write_records<W: Write, T: Serialize>(writer: W, records: &[T]) -> Result<()> {
    let mut writer = BufWriter::new(writer);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<writer>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn write_file<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(file, records)
}
