use super::{CodeError, ParityCheckMatrix};
use crate::gf2::BitMatrix;
use std::fmt::Write as _;
use std::path::Path;

fn err(line: usize, msg: impl Into<String>) -> CodeError {
    CodeError::Parse {
        line,
        msg: msg.into(),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-blank line as `(1-based line number, integers)`.
    fn next_ints(&mut self, what: &str) -> Result<(usize, Vec<usize>), CodeError> {
        for (i, raw) in self.inner.by_ref() {
            let line = i + 1;
            self.last = line;
            if raw.trim().is_empty() {
                continue;
            }
            let ints = raw
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| err(line, format!("bad integer `{t}` in {what}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Ok((line, ints));
        }
        Err(err(self.last + 1, format!("unexpected end of file, expected {what}")))
    }
}

/// Parses the alist text format (1-based indices; zero entries pad short lists).
pub fn parse_alist(text: &str) -> Result<ParityCheckMatrix, CodeError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (l, dims) = lines.next_ints("header")?;
    let [n, m] = dims[..] else {
        return Err(err(l, "header must be `n m`"));
    };
    if n == 0 || m == 0 {
        return Err(err(l, "empty matrix"));
    }
    let (l, maxd) = lines.next_ints("max degrees")?;
    let [max_col, max_row] = maxd[..] else {
        return Err(err(l, "expected two max-degree values"));
    };
    let (l, col_deg) = lines.next_ints("column degrees")?;
    if col_deg.len() != n {
        return Err(err(l, format!("expected {n} column degrees, got {}", col_deg.len())));
    }
    if col_deg.iter().any(|&d| d > max_col) {
        return Err(err(l, "column degree exceeds declared maximum"));
    }
    let (l, row_deg) = lines.next_ints("row degrees")?;
    if row_deg.len() != m {
        return Err(err(l, format!("expected {m} row degrees, got {}", row_deg.len())));
    }
    if row_deg.iter().any(|&d| d > max_row) {
        return Err(err(l, "row degree exceeds declared maximum"));
    }

    let mut bits = BitMatrix::zeros(m, n);
    for (c, &deg) in col_deg.iter().enumerate() {
        let (l, idx) = lines.next_ints("column index list")?;
        let listed: Vec<usize> = idx.into_iter().filter(|&i| i != 0).collect();
        if listed.len() != deg {
            return Err(err(
                l,
                format!("column {} declares degree {deg} but lists {}", c + 1, listed.len()),
            ));
        }
        for r in listed {
            if r > m {
                return Err(err(l, format!("row index {r} out of range 1..={m}")));
            }
            if bits.get(r - 1, c) {
                return Err(err(l, format!("duplicate row index {r}")));
            }
            bits.set(r - 1, c, true);
        }
    }
    for (r, &deg) in row_deg.iter().enumerate() {
        let (l, idx) = lines.next_ints("row index list")?;
        let listed: Vec<usize> = idx.into_iter().filter(|&i| i != 0).collect();
        if listed.len() != deg {
            return Err(err(
                l,
                format!("row {} declares degree {deg} but lists {}", r + 1, listed.len()),
            ));
        }
        for c in listed {
            if c > n {
                return Err(err(l, format!("column index {c} out of range 1..={n}")));
            }
            if !bits.get(r, c - 1) {
                return Err(err(l, format!("row {} lists column {c} missing from column lists", r + 1)));
            }
        }
    }
    ParityCheckMatrix::new(bits)
}

pub fn load_alist(path: impl AsRef<Path>) -> Result<ParityCheckMatrix, CodeError> {
    parse_alist(&std::fs::read_to_string(path)?)
}

/// Serialises `H` in alist format without zero padding.
pub fn to_alist(h: &ParityCheckMatrix) -> String {
    let bits = h.bits();
    let t = bits.transpose();
    let cols: Vec<Vec<usize>> = (0..h.cols()).map(|c| t.row_support(c)).collect();
    let rows: Vec<Vec<usize>> = (0..h.rows()).map(|r| bits.row_support(r)).collect();
    let join = |v: &[usize]| {
        v.iter()
            .map(|x| (x + 1).to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let degs = |v: &[Vec<usize>]| {
        v.iter()
            .map(|x| x.len().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", h.cols(), h.rows());
    let _ = writeln!(
        out,
        "{} {}",
        cols.iter().map(Vec::len).max().unwrap_or(0),
        rows.iter().map(Vec::len).max().unwrap_or(0)
    );
    let _ = writeln!(out, "{}", degs(&cols));
    let _ = writeln!(out, "{}", degs(&rows));
    for c in &cols {
        let _ = writeln!(out, "{}", join(c));
    }
    for r in &rows {
        let _ = writeln!(out, "{}", join(r));
    }
    out
}
