//! Minimal CSV helpers shared by the module-level (de)serializers.
//!
//! All files in the toolkit are plain UTF-8, comma-separated, `\n`-terminated,
//! with a header row and no quoting (no field ever contains a comma). Floats
//! are written with Rust's shortest round-trip formatting so that
//! parse -> write reproduces the input byte for byte.

use crate::error::{Error, Result};
use std::str::FromStr;

/// Checks the header line and returns the remaining data lines, paired with
/// their 1-based line numbers.
pub(crate) fn data_lines<'a>(
    text: &'a str,
    expected_header: &str,
) -> Result<Vec<(usize, &'a str)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == expected_header => {}
        Some((_, header)) => {
            return Err(Error::csv(
                1,
                format!("expected header `{expected_header}`, found `{header}`"),
            ))
        }
        None => return Err(Error::csv(1, "empty file")),
    }
    Ok(lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect())
}

/// Splits a data line into exactly `n` fields.
pub(crate) fn fields(line_no: usize, line: &str, n: usize) -> Result<Vec<&str>> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != n {
        return Err(Error::csv(
            line_no,
            format!("expected {n} fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

/// Parses one field, reporting the line number and field name on failure.
pub(crate) fn parse_field<T>(line_no: usize, name: &str, raw: &str) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| {
        Error::csv(
            line_no,
            format!("field `{name}`: cannot parse `{raw}`: {e}"),
        )
    })
}
