//! MatrixMarket coordinate files for binary matrices and a raw little-endian
//! dump for real factors.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, FactorMatrix};

pub const MM_HEADER: &str = "%%MatrixMarket matrix coordinate pattern general";

/// Magic prefix of the factor dump format.
pub const FACTOR_MAGIC: &[u8; 8] = b"FELBFAC1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Pattern,
    Numeric,
}

/// Reads a coordinate MatrixMarket file. `pattern` files are taken as-is;
/// `integer`/`real` files keep the coordinates whose value is nonzero.
/// `symmetric` storage is expanded.
pub fn read_matrix_market<R: Read>(reader: R) -> Result<BinaryMatrix> {
    let reader = BufReader::new(reader);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("not a MatrixMarket header: {header:?}"),
        });
    }
    if tokens[2] != "coordinate" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unsupported format {:?}", tokens[2]),
        });
    }
    let field = match tokens[3].as_str() {
        "pattern" => Field::Pattern,
        "integer" | "real" => Field::Numeric,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported field {other:?}"),
            })
        }
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported symmetry {other:?}"),
            })
        }
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut coords = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        let parse = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("expected an integer, got {s:?}"),
            })
        };
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "expected `rows cols nnz`".into(),
                    });
                }
                let s = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
                coords.reserve(s.2);
                size = Some(s);
            }
            Some((rows, cols, _)) => {
                let want = if field == Field::Pattern { 2 } else { 3 };
                if parts.len() != want {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected {want} fields, got {}", parts.len()),
                    });
                }
                let (r, c) = (parse(parts[0])?, parse(parts[1])?);
                if r == 0 || c == 0 || r > rows || c > cols {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("index ({r}, {c}) outside {rows}x{cols}"),
                    });
                }
                if field == Field::Numeric {
                    let v: f64 = parts[2].parse().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("bad value {:?}", parts[2]),
                    })?;
                    if v == 0.0 {
                        continue;
                    }
                }
                coords.push((r - 1, c - 1));
                if symmetric && r != c {
                    coords.push((c - 1, r - 1));
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or(Error::Parse {
        line: 0,
        msg: "missing size line".into(),
    })?;
    if field == Field::Pattern && !symmetric && coords.len() != nnz {
        return Err(Error::Parse {
            line: 0,
            msg: format!("size line declares {nnz} entries, found {}", coords.len()),
        });
    }
    BinaryMatrix::from_coords(rows, cols, coords)
}

pub fn write_matrix_market<W: Write>(m: &BinaryMatrix, mut w: W) -> Result<()> {
    writeln!(w, "{MM_HEADER}")?;
    writeln!(w, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for &(r, c) in m.entries() {
        writeln!(w, "{} {}", r + 1, c + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `FELBFAC1`, rows and cols as little-endian u64, then the values
/// row-major as little-endian f64.
pub fn write_factor<W: Write>(m: &FactorMatrix, mut w: W) -> Result<()> {
    w.write_all(FACTOR_MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_factor<R: Read>(mut r: R) -> Result<FactorMatrix> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FACTOR_MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: "bad factor dump magic".into(),
        });
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows.checked_mul(cols).ok_or(Error::Parse {
        line: 0,
        msg: "factor dump dimensions overflow".into(),
    })?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Parse {
            line: 0,
            msg: "trailing bytes after factor dump".into(),
        });
    }
    FactorMatrix::from_vec(rows, cols, data)
}
