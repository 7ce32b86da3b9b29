//! Plain-text matrix and vector formats.
//!
//! Matrix: first line `rows cols`, then `rows` lines of `cols`
//! whitespace-separated values. Vector: first line `length`, then one value
//! per line. Values are written with Rust's shortest round-trip formatting,
//! which reproduces every `f64` exactly on reload.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 24);
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format_value(*v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn format_vector(v: &[f64]) -> String {
    let mut out = String::with_capacity(v.len() * 24);
    let _ = writeln!(out, "{}", v.len());
    for x in v {
        out.push_str(&format_value(*x));
        out.push('\n');
    }
    out
}

fn format_value(v: f64) -> String {
    // `{:?}` is shortest round-trip and always includes a decimal point or exponent
    format!("{v:?}")
}

fn parse_f64(tok: &str, what: &str) -> Result<f64> {
    tok.parse::<f64>().map_err(|e| Error::Parse {
        what: what.to_string(),
        msg: format!("bad number {tok:?}: {e}"),
    })
}

fn parse_usize(tok: Option<&str>, what: &str, field: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::Parse {
        what: what.to_string(),
        msg: format!("missing {field}"),
    })?;
    tok.parse::<usize>().map_err(|e| Error::Parse {
        what: what.to_string(),
        msg: format!("bad {field} {tok:?}: {e}"),
    })
}

pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let what = "matrix";
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse {
        what: what.into(),
        msg: "empty input".into(),
    })?;
    let mut head = header.split_whitespace();
    let rows = parse_usize(head.next(), what, "row count")?;
    let cols = parse_usize(head.next(), what, "column count")?;
    let mut data = Vec::with_capacity(rows * cols);
    for (r, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(parse_f64(tok, what)?);
        }
        if data.len() - before != cols {
            return Err(Error::Parse {
                what: what.into(),
                msg: format!("row {r} has {} values, expected {cols}", data.len() - before),
            });
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Parse {
            what: what.into(),
            msg: format!("expected {rows} rows, got {}", data.len() / cols.max(1)),
        });
    }
    DenseMatrix::new(rows, cols, data)
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let what = "vector";
    let mut toks = text.split_whitespace();
    let n = parse_usize(toks.next(), what, "length")?;
    let v = toks.map(|t| parse_f64(t, what)).collect::<Result<Vec<_>>>()?;
    if v.len() != n {
        return Err(Error::Parse {
            what: what.into(),
            msg: format!("declared length {n}, found {} values", v.len()),
        });
    }
    super::matrix::check_finite(&v, what)?;
    Ok(v)
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    fs::write(path, format_vector(v)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vector(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matrix_text_roundtrip(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            let mut s = crate::numkit::RngStream::new(seed, 0).sampler();
            let m = DenseMatrix::from_fn(rows, cols, |_, _| s.normal() * 1e3_f64.powf(s.uniform() * 4.0 - 2.0));
            let back = parse_matrix(&format_matrix(&m)).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn vector_text_roundtrip(v in proptest::collection::vec(-1e300f64..1e300, 1..20)) {
            prop_assert_eq!(parse_vector(&format_vector(&v)).unwrap(), v);
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2 2\n1 2\n3\n").is_err());
        assert!(parse_matrix("1 2\n1 x\n").is_err());
        assert!(parse_vector("3\n1\n2\n").is_err());
        assert!(parse_vector("1\nNaN\n").is_err());
    }
}
