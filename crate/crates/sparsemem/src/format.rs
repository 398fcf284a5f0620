//! Plain-text matrix and vector files.
//!
//! ```text
//! dense <rows> <cols>        sparse <m> <n> <d>        vec <n>
//! 1 0 -2                     0 0 3                     1.5
//! 0 4 1                      2 0 -1                    -2
//! ```
//!
//! Dense files hold one whitespace-separated row per line. Sparse files
//! hold one `row col weight` line per stored entry, zero-indexed. Blank
//! lines and lines starting with `#` are ignored everywhere.

use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sparsemem_core::{DenseMatrix, SparseConstraintMatrix};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Model(#[from] sparsemem_core::Error),
}

impl FormatError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            line,
            message: message.into(),
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

type Result<T> = std::result::Result<T, FormatError>;

/// Content lines with their 1-based line numbers.
fn content_lines(reader: impl BufRead) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(k, line)| match line {
            Err(e) => Some(Err(FormatError::Parse {
                line: k + 1,
                message: e.to_string(),
            })),
            Ok(l) => {
                let t = l.trim();
                (!t.is_empty() && !t.starts_with('#')).then(|| Ok((k + 1, t.to_string())))
            }
        })
}

fn field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T>
where
    T::Err: Display,
{
    let tok = tok.ok_or_else(|| FormatError::parse(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|e| FormatError::parse(line, format!("bad {what} {tok:?}: {e}")))
}

fn header(
    lines: &mut impl Iterator<Item = Result<(usize, String)>>,
    tag: &str,
    arity: usize,
) -> Result<Vec<usize>> {
    let (line, text) = lines
        .next()
        .ok_or_else(|| FormatError::parse(1, format!("missing \"{tag}\" header")))??;
    let mut toks = text.split_whitespace();
    if toks.next() != Some(tag) {
        return Err(FormatError::parse(line, format!("expected \"{tag}\" header")));
    }
    let dims = (0..arity)
        .map(|_| field(toks.next(), line, "dimension"))
        .collect::<Result<Vec<usize>>>()?;
    if toks.next().is_some() {
        return Err(FormatError::parse(line, "trailing tokens in header"));
    }
    Ok(dims)
}

pub fn read_dense(reader: impl BufRead) -> Result<DenseMatrix> {
    let mut lines = content_lines(reader);
    let dims = header(&mut lines, "dense", 2)?;
    let (rows, cols) = (dims[0], dims[1]);
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for item in lines {
        let (line, text) = item?;
        let row: Vec<f64> = text
            .split_whitespace()
            .map(|t| field(Some(t), line, "entry"))
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(FormatError::parse(line, format!("expected {cols} entries, found {}", row.len())));
        }
        seen += 1;
        if seen > rows {
            return Err(FormatError::parse(line, format!("more than {rows} rows")));
        }
        data.extend(row);
    }
    if seen != rows {
        return Err(FormatError::parse(0, format!("expected {rows} rows, found {seen}")));
    }
    Ok(DenseMatrix::from_vec(rows, cols, data)?)
}

pub fn write_dense(mut w: impl Write, m: &DenseMatrix) -> io::Result<()> {
    writeln!(w, "dense {} {}", m.rows(), m.cols())?;
    for row in m.row_iter() {
        write_joined(&mut w, row)?;
    }
    Ok(())
}

pub fn read_sparse(reader: impl BufRead) -> Result<SparseConstraintMatrix> {
    let mut lines = content_lines(reader);
    let dims = header(&mut lines, "sparse", 3)?;
    let (m, n, d) = (dims[0], dims[1], dims[2]);
    let mut entries = Vec::new();
    for item in lines {
        let (line, text) = item?;
        let mut toks = text.split_whitespace();
        let i: usize = field(toks.next(), line, "row")?;
        let j: usize = field(toks.next(), line, "column")?;
        let w: f64 = field(toks.next(), line, "weight")?;
        if toks.next().is_some() {
            return Err(FormatError::parse(line, "trailing tokens"));
        }
        if i >= m || j >= n {
            return Err(FormatError::parse(line, format!("entry ({i}, {j}) outside {m} x {n}")));
        }
        entries.push((i, j, w));
    }
    Ok(SparseConstraintMatrix::from_triplets(m, n, d, entries)?)
}

pub fn write_sparse(mut w: impl Write, b: &SparseConstraintMatrix) -> io::Result<()> {
    writeln!(w, "sparse {} {} {}", b.m(), b.n(), b.d())?;
    for (i, j, x) in b.triplets() {
        writeln!(w, "{i} {j} {x}")?;
    }
    Ok(())
}

pub fn read_vector(reader: impl BufRead) -> Result<Vec<f64>> {
    let mut lines = content_lines(reader);
    let n = header(&mut lines, "vec", 1)?[0];
    let mut v = Vec::with_capacity(n);
    for item in lines {
        let (line, text) = item?;
        for t in text.split_whitespace() {
            v.push(field::<f64>(Some(t), line, "value")?);
            if !v[v.len() - 1].is_finite() {
                return Err(FormatError::parse(line, "non-finite value"));
            }
        }
    }
    if v.len() != n {
        return Err(FormatError::parse(0, format!("expected {n} values, found {}", v.len())));
    }
    Ok(v)
}

pub fn write_vector(mut w: impl Write, v: &[f64]) -> io::Result<()> {
    writeln!(w, "vec {}", v.len())?;
    for x in v {
        writeln!(w, "{x}")?;
    }
    Ok(())
}

fn write_joined(w: &mut impl Write, row: &[f64]) -> io::Result<()> {
    let mut first = true;
    for x in row {
        if !first {
            w.write_all(b" ")?;
        }
        write!(w, "{x}")?;
        first = false;
    }
    w.write_all(b"\n")
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| FormatError::io(path, e))
}

fn save(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| FormatError::io(path, e))
}

pub fn load_dense(path: &Path) -> Result<DenseMatrix> {
    read_dense(open(path)?)
}

pub fn load_sparse(path: &Path) -> Result<SparseConstraintMatrix> {
    read_sparse(open(path)?)
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    read_vector(open(path)?)
}

pub fn save_dense(path: &Path, m: &DenseMatrix) -> Result<()> {
    save(path, |w| write_dense(w, m))
}

pub fn save_sparse(path: &Path, b: &SparseConstraintMatrix) -> Result<()> {
    save(path, |w| write_sparse(w, b))
}

pub fn save_vector(path: &Path, v: &[f64]) -> Result<()> {
    save(path, |w| write_vector(w, v))
}
