//! Plain-text tableau files.
//!
//! ```text
//! # comment
//! s = 2
//! a
//! 0 0
//! 0.5 0.5
//! alpha
//! 0.5 0.5
//! ```
//!
//! A line holding a single word opens a block; following numeric lines are its
//! rows. Matrices have s rows of s numbers, vectors a single row.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableauParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing header `s = <int>`")]
    MissingHeader,
    #[error("missing block `{0}`")]
    MissingBlock(String),
    #[error("block `{label}` has shape {rows}x{cols}, expected {expected}")]
    Shape { label: String, rows: usize, cols: usize, expected: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTableau {
    pub s: usize,
    blocks: BTreeMap<String, Vec<Vec<f64>>>,
}

impl RawTableau {
    pub fn parse(text: &str) -> Result<Self, TableauParseError> {
        let mut s = None;
        let mut blocks: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                if key.trim() != "s" || s.is_some() {
                    return Err(TableauParseError::Syntax { line: line_no, msg: format!("unexpected `{line}`") });
                }
                let v = value.trim().parse::<usize>().map_err(|_| TableauParseError::Syntax {
                    line: line_no,
                    msg: format!("stage count `{}` is not a positive integer", value.trim()),
                })?;
                if v == 0 {
                    return Err(TableauParseError::Syntax { line: line_no, msg: "stage count must be positive".into() });
                }
                s = Some(v);
                continue;
            }
            let first = line.split_whitespace().next().unwrap_or("");
            if first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                if line.split_whitespace().count() != 1 {
                    return Err(TableauParseError::Syntax { line: line_no, msg: format!("bad block label `{line}`") });
                }
                if blocks.contains_key(line) {
                    return Err(TableauParseError::Syntax { line: line_no, msg: format!("duplicate block `{line}`") });
                }
                blocks.insert(line.to_string(), Vec::new());
                current = Some(line.to_string());
                continue;
            }
            let Some(label) = &current else {
                return Err(TableauParseError::Syntax { line: line_no, msg: "numbers before any block label".into() });
            };
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| TableauParseError::Syntax {
                        line: line_no,
                        msg: format!("`{tok}` is not a finite number"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            blocks.get_mut(label).expect("current block exists").push(row);
        }
        let s = s.ok_or(TableauParseError::MissingHeader)?;
        Ok(Self { s, blocks })
    }

    pub fn has(&self, label: &str) -> bool {
        self.blocks.contains_key(label)
    }

    /// Row-major s x s matrix.
    pub fn matrix(&self, label: &str) -> Result<Vec<f64>, TableauParseError> {
        let rows = self.blocks.get(label).ok_or_else(|| TableauParseError::MissingBlock(label.into()))?;
        if rows.len() != self.s || rows.iter().any(|r| r.len() != self.s) {
            return Err(TableauParseError::Shape {
                label: label.into(),
                rows: rows.len(),
                cols: rows.first().map_or(0, Vec::len),
                expected: format!("{0}x{0}", self.s),
            });
        }
        Ok(rows.concat())
    }

    pub fn vector(&self, label: &str) -> Result<Vec<f64>, TableauParseError> {
        let rows = self.blocks.get(label).ok_or_else(|| TableauParseError::MissingBlock(label.into()))?;
        if rows.len() != 1 || rows[0].len() != self.s {
            return Err(TableauParseError::Shape {
                label: label.into(),
                rows: rows.len(),
                cols: rows.first().map_or(0, Vec::len),
                expected: format!("1x{}", self.s),
            });
        }
        Ok(rows[0].clone())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.blocks.keys().map(String::as_str)
    }
}

pub(crate) fn write_header(out: &mut String, name: &str, s: usize) {
    let _ = writeln!(out, "# {name}");
    let _ = writeln!(out, "s = {s}");
}

pub(crate) fn write_matrix(out: &mut String, label: &str, s: usize, m: &[f64]) {
    let _ = writeln!(out, "{label}");
    for row in m.chunks(s) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

pub(crate) fn write_vector(out: &mut String, label: &str, v: &[f64]) {
    let _ = writeln!(out, "{label}");
    let line: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    let _ = writeln!(out, "{}", line.join(" "));
}
