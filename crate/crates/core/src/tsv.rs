//! Tab-separated table helpers shared by the file readers and writers.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One data row with its 1-based line number in the source.
pub struct Row {
    pub line: usize,
    pub fields: Vec<String>,
}

pub struct Table {
    pub source: String,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn parse_err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn field<T: FromStr>(&self, row: &Row, col: usize, name: &str) -> Result<T> {
        let raw = &row.fields[col];
        raw.parse()
            .map_err(|_| self.parse_err(row.line, format!("invalid {name} '{raw}'")))
    }
}

pub fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parse a TSV whose header must start with `expected` (extra trailing
/// columns are allowed and ignored). Lines starting with `#` are comments.
pub fn parse(text: &str, source: &str, expected: &[&str]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quoting(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut rows = Vec::new();
    let mut header_seen = false;
    let mut width = expected.len();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: source.to_owned(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let fields: Vec<String> = record.iter().map(|f| f.trim().to_owned()).collect();
        if !header_seen {
            if fields.len() < expected.len()
                || fields.iter().zip(expected).any(|(got, want)| got != want)
            {
                return Err(Error::Parse {
                    path: source.to_owned(),
                    line,
                    message: format!(
                        "expected header '{}', found '{}'",
                        expected.join("\t"),
                        fields.join("\t")
                    ),
                });
            }
            width = fields.len();
            header_seen = true;
            continue;
        }
        if fields.len() != width {
            return Err(Error::Parse {
                path: source.to_owned(),
                line,
                message: format!("expected {width} columns, found {}", fields.len()),
            });
        }
        rows.push(Row { line, fields });
    }
    if !header_seen {
        return Err(Error::Parse {
            path: source.to_owned(),
            line: 1,
            message: format!("missing header '{}'", expected.join("\t")),
        });
    }
    Ok(Table {
        source: source.to_owned(),
        rows,
    })
}

pub fn read(path: &Path, expected: &[&str]) -> Result<Table> {
    let text = read_file(path)?;
    parse(&text, &path.display().to_string(), expected)
}

/// Write via a temporary file in the same directory and rename into place,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Format a float with `digits` significant digits, trimming trailing zeros
/// (the behaviour of C's `%g` without switching to exponent notation for
/// ordinary magnitudes).
pub fn format_sig(value: f64, digits: usize) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    if value == 0.0 {
        return "0".to_owned();
    }
    // exponent after rounding, so 999999.7 becomes 1e6 rather than "1000000"
    let sci = format!("{:.*e}", digits.saturating_sub(1), value);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exponent: i32 = exp.parse().unwrap();
    if exponent < -5 || exponent >= digits as i32 {
        return format!("{}e{exponent}", trim_zeros(mantissa));
    }
    let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
    trim_zeros(&format!("{value:.decimals$}"))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s.to_owned()
    }
}
