//! Newline-delimited JSON record files.
//!
//! Every record is one UTF-8 JSON object on its own LF-terminated line. Lines
//! starting with `#` carry provenance or metadata and are skipped by readers;
//! blank lines are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A line that could not be turned into a record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

/// Records parsed from a file, plus the lines that failed.
#[derive(Debug)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub comments: Vec<(usize, String)>,
    pub rejects: Vec<Reject>,
}

pub fn parse_lines<T: DeserializeOwned>(reader: impl BufRead) -> Result<Parsed<T>> {
    let mut out = Parsed {
        records: Vec::new(),
        comments: Vec::new(),
        rejects: Vec::new(),
    };
    for (idx, line) in reader.split(b'\n').enumerate() {
        let lineno = idx + 1;
        let bytes = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let Ok(text) = String::from_utf8(bytes) else {
            out.rejects.push(Reject {
                line: lineno,
                reason: "invalid UTF-8".into(),
                raw: String::new(),
            });
            continue;
        };
        let text = text.strip_suffix('\r').unwrap_or(&text);
        if text.trim().is_empty() {
            continue;
        }
        if let Some(comment) = text.strip_prefix('#') {
            out.comments.push((lineno, comment.to_string()));
            continue;
        }
        match serde_json::from_str(text) {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.rejects.push(Reject {
                line: lineno,
                reason: e.to_string(),
                raw: text.to_string(),
            }),
        }
    }
    Ok(out)
}

pub fn read_file<T: DeserializeOwned>(path: &Path) -> Result<Parsed<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lines(BufReader::new(file))
}

/// Writes `header` lines (each prefixed with `#`) followed by one record per line.
pub fn write_records<T: Serialize>(
    mut writer: impl Write,
    header: &[String],
    records: impl IntoIterator<Item = T>,
) -> Result<()> {
    let io = |e| Error::io("<record stream>", e);
    for h in header {
        writeln!(writer, "#{h}").map_err(io)?;
    }
    for rec in records {
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n").map_err(io)?;
    }
    writer.flush().map_err(io)
}

pub fn write_file<T: Serialize>(
    path: &Path,
    header: &[String],
    records: impl IntoIterator<Item = T>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(BufWriter::new(file), header, records)
}
