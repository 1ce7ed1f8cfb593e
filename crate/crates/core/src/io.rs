//! Readers for Matrix Market coordinate files and plain edge lists.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Result, TraceError};
use crate::linop::CsrMatrix;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Reads a real, integer or pattern coordinate Matrix Market file. Symmetric files store one
/// triangle and are mirrored.
pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    parse_matrix_market(open(path)?, path)
}

/// Parses Matrix Market text from `reader`; `path` only labels errors.
pub fn parse_matrix_market(reader: impl BufRead, path: &Path) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_error(path, 1, "empty file"))?;
    let header = header.map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_error(path, 1, "missing %%MatrixMarket matrix header"));
    }
    if fields[2] != "coordinate" {
        return Err(parse_error(path, 1, format!("unsupported storage '{}'", fields[2])));
    }
    let pattern = match fields[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" => true,
        other => return Err(parse_error(path, 1, format!("unsupported field '{other}'"))),
    };
    let symmetry = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_error(path, 1, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let int = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| parse_error(path, lineno, format!("expected an integer, found '{t}'")))
        };
        match size {
            None => {
                if tokens.len() != 3 {
                    return Err(parse_error(path, lineno, "size line needs rows, columns and entries"));
                }
                size = Some((int(tokens[0])?, int(tokens[1])?, int(tokens[2])?));
                triplets.reserve(size.map_or(0, |s| 2 * s.2));
            }
            Some((rows, cols, _)) => {
                let need = if pattern { 2 } else { 3 };
                if tokens.len() < need {
                    return Err(parse_error(path, lineno, format!("entry needs {need} fields")));
                }
                let (i, j) = (int(tokens[0])?, int(tokens[1])?);
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(parse_error(path, lineno, format!("index ({i}, {j}) out of range")));
                }
                let v = if pattern {
                    1.0
                } else {
                    tokens[2]
                        .parse::<f64>()
                        .map_err(|_| parse_error(path, lineno, format!("bad value '{}'", tokens[2])))?
                };
                triplets.push((i - 1, j - 1, v));
                if symmetry == Symmetry::Symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| parse_error(path, 1, "missing size line"))?;
    let stored = match symmetry {
        Symmetry::General => triplets.len(),
        Symmetry::Symmetric => triplets.iter().filter(|&&(i, j, _)| i <= j).count(),
    };
    if stored != nnz {
        return Err(parse_error(
            path,
            1,
            format!("header announces {nnz} entries, found {stored}"),
        ));
    }
    CsrMatrix::from_triplets(rows, cols, triplets)
}

/// Reads an undirected edge list (`u v` per line, `#` or `%` comments) into a symmetric 0/1
/// adjacency matrix. Indices are 0-based when the smallest index is 0 and 1-based otherwise;
/// duplicate edges and self-loops are dropped.
pub fn read_edge_list(path: &Path) -> Result<CsrMatrix> {
    parse_edge_list(open(path)?, path)
}

pub fn parse_edge_list(reader: impl BufRead, path: &Path) -> Result<CsrMatrix> {
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut next = || -> Result<usize> {
            let t = tokens
                .next()
                .ok_or_else(|| parse_error(path, lineno, "edge needs two node indices"))?;
            t.parse::<usize>()
                .map_err(|_| parse_error(path, lineno, format!("expected a node index, found '{t}'")))
        };
        let (u, v) = (next()?, next()?);
        edges.push((u, v));
    }
    let Some(min) = edges.iter().map(|&(u, v)| u.min(v)).min() else {
        return Err(parse_error(path, 1, "no edges"));
    };
    let offset = if min == 0 { 0 } else { 1 };
    let mut unique = BTreeSet::new();
    for (u, v) in edges {
        let (u, v) = (u - offset, v - offset);
        if u != v {
            unique.insert((u.min(v), u.max(v)));
        }
    }
    let n = unique.iter().map(|&(_, v)| v + 1).max().unwrap_or(0).max(1);
    let triplets = unique.into_iter().flat_map(|(u, v)| [(u, v, 1.0), (v, u, 1.0)]);
    CsrMatrix::from_triplets(n, n, triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn p() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn symmetric_matrix_market() {
        let text =
            "%%MatrixMarket matrix coordinate real symmetric\n% comment\n3 3 4\n1 1 2.0\n2 1 -1\n3 2 -1\n3 3 2.5\n";
        let m = parse_matrix_market(Cursor::new(text), p()).unwrap();
        let d = m.to_dense();
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(0, 1)], -1.0);
        assert_eq!(d[(1, 0)], -1.0);
        assert_eq!(d[(1, 2)], -1.0);
        assert_eq!(d[(2, 2)], 2.5);
        assert_eq!(m.nnz(), 6);
    }

    #[test]
    fn pattern_general() {
        let text = "%%MatrixMarket matrix coordinate pattern general\n2 2 2\n1 2\n2 1\n";
        let m = parse_matrix_market(Cursor::new(text), p()).unwrap();
        assert_eq!(m.to_dense()[(0, 1)], 1.0);
    }

    #[test]
    fn matrix_market_errors_carry_line() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        match parse_matrix_market(Cursor::new(text), p()).unwrap_err() {
            TraceError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_matrix_market(Cursor::new("garbage\n"), p()).is_err());
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(parse_matrix_market(Cursor::new(short), p()).is_err());
    }

    #[test]
    fn edge_list_one_based_with_cleanup() {
        let text = "# K3 plus noise\n1 2\n2 3\n3 1\n2 1\n3 3\n";
        let m = parse_edge_list(Cursor::new(text), p()).unwrap();
        let d = m.to_dense();
        assert_eq!(d.nrows(), 3);
        assert_eq!(d.sum(), 6.0);
        assert_eq!(d.trace(), 0.0);
        assert_eq!(d, d.transpose());
    }

    #[test]
    fn edge_list_zero_based() {
        let m = parse_edge_list(Cursor::new("0 1\n1 2\n"), p()).unwrap();
        assert_eq!(m.nrows(), 3);
        assert_eq!(m.to_dense()[(0, 1)], 1.0);
    }

    #[test]
    fn edge_list_errors() {
        assert!(parse_edge_list(Cursor::new("1\n"), p()).is_err());
        assert!(parse_edge_list(Cursor::new("a b\n"), p()).is_err());
        assert!(parse_edge_list(Cursor::new("# only comments\n"), p()).is_err());
        assert!(matches!(
            read_edge_list(Path::new("/nonexistent/edges.txt")),
            Err(TraceError::Io { .. })
        ));
    }
}
