//! Plain-text and CSV signal ingestion.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Signal;

/// How to pick the sample from each row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadOptions {
    /// Skip the first column (a sample index or timestamp) and read the second.
    pub first_column_is_index: bool,
}

/// Reads one sample per line from `path`.
///
/// Blank lines and lines starting with `#` are skipped. Fields may be
/// separated by commas, semicolons, tabs or spaces; the first numeric
/// field (or the second, see [`LoadOptions`]) is the sample.
pub fn load_signal(path: &Path, opts: LoadOptions) -> Result<Signal> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_signal(&text, opts).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse_signal(text: &str, opts: LoadOptions) -> std::result::Result<Signal, String> {
    let column = usize::from(opts.first_column_is_index);
    let mut samples = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .nth(column)
            .ok_or_else(|| format!("line {}: missing column {}", lineno + 1, column + 1))?;
        let value: f64 = field
            .trim_matches('"')
            .parse()
            .map_err(|_| format!("line {}: {field:?} is not a number", lineno + 1))?;
        if !value.is_finite() {
            return Err(format!("line {}: sample {value} is not finite", lineno + 1));
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err("no samples found".into());
    }
    Signal::new(samples).map_err(|e| e.to_string())
}

/// Writes one sample per line with full round-trip precision.
pub fn write_signal(path: &Path, signal: &Signal) -> Result<()> {
    let mut out = String::with_capacity(signal.len() * 24);
    for v in signal.iter() {
        out.push_str(&format!("{v:.17e}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
