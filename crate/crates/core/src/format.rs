//! Shared helpers for the line-oriented text formats.
//!
//! Every writer in this crate emits reals with Rust's shortest round-trip
//! representation, so `write -> read -> write` is byte-identical.

use std::fmt;
use std::str::FromStr;

/// A file-format violation, with the 1-based line number where it was found.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

impl FormatError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Formats a real so that parsing it back yields the same bits.
pub(crate) fn real(x: f64) -> impl fmt::Display {
    struct Real(f64);
    impl fmt::Display for Real {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            // Display for f64 is shortest-round-trip; normalise -0 so output is canonical.
            if self.0 == 0.0 {
                f.write_str("0")
            } else {
                write!(f, "{}", self.0)
            }
        }
    }
    Real(x)
}

pub(crate) fn parse_field<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T, FormatError> {
    tok.parse::<T>()
        .map_err(|_| FormatError::new(line, format!("invalid {what}: {tok:?}")))
}

pub(crate) fn parse_finite(tok: &str, line: usize, what: &str) -> Result<f64, FormatError> {
    let x: f64 = parse_field(tok, line, what)?;
    if !x.is_finite() {
        return Err(FormatError::new(line, format!("{what} must be finite, got {tok}")));
    }
    Ok(x)
}

/// Iterates over the meaningful lines of a text file: trimmed, with `#`
/// comments and blank lines skipped. Yields `(line_number, content)`.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        (!content.is_empty()).then_some((i + 1, content))
    })
}

/// Splits a line into exactly `N` whitespace-separated fields.
pub(crate) fn fields<const N: usize>(content: &str, line: usize) -> Result<[&str; N], FormatError> {
    let toks: Vec<&str> = content.split_whitespace().collect();
    toks.try_into().map_err(|toks: Vec<&str>| {
        FormatError::new(line, format!("expected {N} fields, found {}", toks.len()))
    })
}
