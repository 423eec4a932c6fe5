//! Matrix files for the `factorize` subcommand.
//!
//! Two containers are understood:
//!
//! * CSV, one row per line, entries either plain reals or complex tokens of
//!   the form `a+bi`, `a-bi`, `bi` (no spaces inside a token). A file with at
//!   least one complex token is read as complex.
//! * `RLFMAT01` binary: the 8-byte magic `RLFMAT01`, a `u8` dtype tag
//!   (0 = f64, 1 = complex f64), `u64` rows, `u64` columns, then the entries
//!   row-major. Everything little-endian; a complex entry is its real part
//!   followed by its imaginary part.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"RLFMAT01";

#[derive(Debug, Error)]
pub enum MatrixIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}, column {column}: cannot parse {token:?}")]
    Token { line: usize, column: usize, token: String },
    #[error("line {line}: expected {expected} entries, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("bad magic, not an RLFMAT01 file")]
    Magic,
    #[error("unknown dtype tag {0}")]
    Dtype(u8),
    #[error("matrix is empty")]
    Empty,
    #[error("{0} x {1} matrix is too large")]
    TooLarge(u64, u64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixData {
    Real(Array2<f64>),
    Complex(Array2<Complex64>),
}

impl MatrixData {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixData::Real(a) => a.dim(),
            MatrixData::Complex(a) => a.dim(),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, MatrixData::Complex(_))
    }
}

/// Parses a real or complex token; `None` if malformed.
pub fn parse_token(tok: &str) -> Option<Complex64> {
    let t = tok.trim();
    if t.is_empty() {
        return None;
    }
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return t.parse::<f64>().ok().map(|x| Complex64::new(x, 0.0));
    };
    // Split at the last sign that is not part of an exponent or the leading sign.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (body[..k].parse::<f64>().ok()?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        s => s.parse::<f64>().ok()?,
    };
    Some(Complex64::new(re, im))
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn format_token(z: Complex64) -> String {
    if z.im == 0.0 {
        format_real(z.re)
    } else if z.im.is_sign_negative() {
        format!("{}-{}i", format_real(z.re), format_real(-z.im))
    } else {
        format!("{}+{}i", format_real(z.re), format_real(z.im))
    }
}

pub fn read_csv<R: Read>(r: R) -> Result<MatrixData, MatrixIoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    let mut complex = false;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(std::io::Error::other)?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let expected = *cols.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(MatrixIoError::Ragged {
                line: line + 1,
                expected,
                found: rec.len(),
            });
        }
        for (column, tok) in rec.iter().enumerate() {
            let z = parse_token(tok).ok_or_else(|| MatrixIoError::Token {
                line: line + 1,
                column: column + 1,
                token: tok.to_string(),
            })?;
            complex |= tok.ends_with(['i', 'j']);
            values.push(z);
        }
        rows += 1;
    }
    let cols = cols.ok_or(MatrixIoError::Empty)?;
    let a = Array2::from_shape_vec((rows, cols), values).expect("rows checked");
    Ok(if complex {
        MatrixData::Complex(a)
    } else {
        MatrixData::Real(a.mapv(|z| z.re))
    })
}

pub fn write_csv<W: Write>(mut w: W, m: &MatrixData) -> std::io::Result<()> {
    match m {
        MatrixData::Real(a) => {
            for row in a.rows() {
                let line: Vec<String> = row.iter().map(|x| format_real(*x)).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        }
        MatrixData::Complex(a) => {
            for row in a.rows() {
                let line: Vec<String> = row.iter().map(|z| format_token(*z)).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<MatrixData, MatrixIoError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MatrixIoError::Magic);
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let m = u64::from_le_bytes(word);
    r.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word);
    let count = m
        .checked_mul(n)
        .filter(|c| *c <= (1 << 32))
        .ok_or(MatrixIoError::TooLarge(m, n))? as usize;
    let (m, n) = (m as usize, n as usize);
    let mut next = || -> std::io::Result<f64> {
        r.read_exact(&mut word)?;
        Ok(f64::from_le_bytes(word))
    };
    match tag[0] {
        0 => {
            let v = (0..count).map(|_| next()).collect::<std::io::Result<Vec<_>>>()?;
            Ok(MatrixData::Real(
                Array2::from_shape_vec((m, n), v).expect("count checked"),
            ))
        }
        1 => {
            let v = (0..count)
                .map(|_| Ok(Complex64::new(next()?, next()?)))
                .collect::<std::io::Result<Vec<_>>>()?;
            Ok(MatrixData::Complex(
                Array2::from_shape_vec((m, n), v).expect("count checked"),
            ))
        }
        t => Err(MatrixIoError::Dtype(t)),
    }
}

pub fn write_binary<W: Write>(mut w: W, m: &MatrixData) -> std::io::Result<()> {
    let (rows, cols) = m.shape();
    w.write_all(MAGIC)?;
    w.write_all(&[m.is_complex() as u8])?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    match m {
        MatrixData::Real(a) => {
            for x in a.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        MatrixData::Complex(a) => {
            for z in a.iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads either container, sniffing the magic.
pub fn read_path(path: &Path) -> Result<MatrixData, MatrixIoError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_binary(bytes.as_slice())
    } else {
        read_csv(bytes.as_slice())
    }
}
