//! Plain-text matrix files.
//!
//! ```text
//! 3
//! 16 8 4
//! 8 4 2
//! 4 2 1
//! ```
//!
//! The first non-blank line is the dimension `n`, followed by `n` rows of
//! `n` whitespace-separated decimals. Lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::{MatrixError, SymMatrix};

/// Inputs whose asymmetry exceeds `ASYMMETRY_TOL * ||A||_F` are rejected.
pub const ASYMMETRY_TOL: f64 = 1e-6;

pub fn parse_matrix(text: &str) -> Result<SymMatrix, MatrixError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line_no, header) = lines.next().ok_or(MatrixError::Parse {
        line: 1,
        msg: "empty input".into(),
    })?;
    let n: usize = header.parse().map_err(|_| MatrixError::Parse {
        line: line_no,
        msg: format!("expected dimension, found {header:?}"),
    })?;
    if n == 0 {
        return Err(MatrixError::Parse {
            line: line_no,
            msg: "dimension must be positive".into(),
        });
    }

    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let (line_no, row) = lines.next().ok_or(MatrixError::Parse {
            line: line_no + i + 1,
            msg: format!("expected {n} rows, found {i}"),
        })?;
        let values: Vec<&str> = row.split_whitespace().collect();
        if values.len() != n {
            return Err(MatrixError::Parse {
                line: line_no,
                msg: format!("expected {n} values, found {}", values.len()),
            });
        }
        for (j, tok) in values.iter().enumerate() {
            m[(i, j)] = tok.parse::<f64>().map_err(|_| MatrixError::Parse {
                line: line_no,
                msg: format!("invalid number {tok:?}"),
            })?;
            if !m[(i, j)].is_finite() {
                return Err(MatrixError::Parse {
                    line: line_no,
                    msg: format!("non-finite value {tok:?}"),
                });
            }
        }
    }
    if let Some((line_no, extra)) = lines.next() {
        return Err(MatrixError::Parse {
            line: line_no,
            msg: format!("unexpected trailing content {extra:?}"),
        });
    }

    let asymmetry = (&m - m.transpose()).amax();
    let tolerance = ASYMMETRY_TOL * m.norm();
    if asymmetry > tolerance {
        return Err(MatrixError::Asymmetric {
            asymmetry,
            tolerance,
        });
    }
    SymMatrix::new(m)
}

/// Shortest round-trip decimal representation, so that
/// `parse_matrix(&format_matrix(a)) == a` exactly.
pub fn format_matrix(a: &SymMatrix) -> String {
    let n = a.n();
    let mut out = format!("{n}\n");
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{}", a.get(i, j)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<SymMatrix, MatrixError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MatrixError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_matrix(&text)
}

pub fn write_matrix(path: impl AsRef<Path>, a: &SymMatrix) -> Result<(), MatrixError> {
    let path = path.as_ref();
    std::fs::write(path, format_matrix(a)).map_err(|source| MatrixError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_case_study() {
        let a = parse_matrix("3\n16 8 4\n8 4 2\n4 2 1\n").unwrap();
        assert_eq!(a, SymMatrix::outer(&[4.0, 2.0, 1.0]));
    }

    #[test]
    fn symmetrizes_tiny_asymmetry() {
        let a = parse_matrix("2\n1 0.5\n0.5000000001 1\n").unwrap();
        assert_eq!(a.get(0, 1), a.get(1, 0));
    }

    #[test]
    fn rejects_asymmetric() {
        let err = parse_matrix("2\n1 0.5\n0.1 1\n").unwrap_err();
        match err {
            MatrixError::Asymmetric { asymmetry, .. } => assert!((asymmetry - 0.4).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2\n1 2\n").is_err());
        assert!(parse_matrix("2\n1 2 3\n2 1\n").is_err());
        assert!(parse_matrix("2\n1 x\nx 1\n").is_err());
        assert!(parse_matrix("1\n1\n1\n").is_err());
        assert!(parse_matrix("0\n").is_err());
    }

    #[test]
    fn format_round_trips_exactly() {
        let a = SymMatrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![1.0 / 3.0, -2e-17]]).unwrap();
        assert_eq!(parse_matrix(&format_matrix(&a)).unwrap(), a);
    }
}
