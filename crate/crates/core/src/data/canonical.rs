//! Canonical tab-separated dataset files.
//!
//! ```text
//! #fields:<TAB>user<TAB>item<TAB>weather
//! 1<TAB>u7<TAB>i12<TAB>sunny
//! 0<TAB>u7<TAB>i3<TAB>rainy
//! ```
//!
//! The first column is the label (`0` or `1`); the remaining columns are raw
//! categorical tokens. Lines starting with `#` are comments, except for an
//! optional `#fields:` header on the first line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

const HEADER_PREFIX: &str = "#fields:";

/// One labeled record of raw tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub label: u8,
    pub tokens: Vec<String>,
    /// 1-based source line, or the 1-based record position for in-memory data.
    pub line: usize,
}

impl RawRecord {
    pub fn new(label: u8, tokens: Vec<String>, line: usize) -> Self {
        Self { label, tokens, line }
    }

    pub fn field_count(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CanonicalFile {
    pub field_names: Option<Vec<String>>,
    pub records: Vec<RawRecord>,
}

impl CanonicalFile {
    /// N, taken from the header when present, otherwise from the records.
    pub fn field_count(&self) -> usize {
        self.field_names
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.records.first().map(RawRecord::field_count))
            .unwrap_or(0)
    }
}

pub fn load_canonical_file(path: impl AsRef<Path>) -> Result<CanonicalFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_canonical(&text)
}

pub fn parse_canonical(text: &str) -> Result<CanonicalFile> {
    let mut file = CanonicalFile::default();
    let mut expected: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if idx == 0 {
            if let Some(rest) = line.strip_prefix(HEADER_PREFIX) {
                let names: Vec<String> = rest
                    .split('\t')
                    .skip_while(|s| s.is_empty())
                    .map(str::to_string)
                    .collect();
                if names.is_empty() {
                    return Err(Error::Format {
                        line: line_no,
                        message: "header names no fields".into(),
                    });
                }
                expected = Some(names.len());
                file.field_names = Some(names);
                continue;
            }
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }

        let mut cols = line.split('\t');
        let label = match cols.next() {
            Some("1") => 1,
            Some("0") => 0,
            other => {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("label must be 0 or 1, got {:?}", other.unwrap_or("")),
                })
            }
        };
        let tokens: Vec<String> = cols.map(str::to_string).collect();
        let n = *expected.get_or_insert(tokens.len());
        if tokens.len() != n {
            return Err(Error::Format {
                line: line_no,
                message: format!("expected {n} fields, found {}", tokens.len()),
            });
        }
        if n == 0 {
            return Err(Error::Format {
                line: line_no,
                message: "record has no fields".into(),
            });
        }
        file.records.push(RawRecord::new(label, tokens, line_no));
    }

    if file.records.is_empty() {
        return Err(Error::Format {
            line: 0,
            message: "file contains no records".into(),
        });
    }
    Ok(file)
}

/// Writes records in canonical form, with a `#fields:` header when names are given.
pub fn write_canonical<'a, I>(path: impl AsRef<Path>, field_names: Option<&[String]>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (u8, Vec<&'a str>)>,
{
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if let Some(names) = field_names {
        writeln!(w, "{HEADER_PREFIX}\t{}", names.join("\t")).map_err(io)?;
    }
    for (label, tokens) in rows {
        writeln!(w, "{label}\t{}", tokens.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}
