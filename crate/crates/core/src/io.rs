//! Plain-text graph formats.
//!
//! * edge list: one `u<TAB>v` pair per line, 0-indexed, `#` comments ignored
//!   (any whitespace separator is accepted on input)
//! * features: headerless CSV, one node per row
//! * labels: one integer per line

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, IngestStats};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Raw endpoint pairs exactly as listed (orientation and duplicates preserved).
pub fn read_edge_pairs(path: &Path) -> Result<Vec<Edge>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (line, l) in content_lines(&text) {
        let mut it = l.split_whitespace();
        let mut field = |name: &str| -> Result<usize> {
            let tok = it
                .next()
                .ok_or_else(|| parse_err(path, line, format!("missing {name} endpoint")))?;
            tok.parse()
                .map_err(|_| parse_err(path, line, format!("invalid node id {tok:?}")))
        };
        let u = field("first")?;
        let v = field("second")?;
        if it.next().is_some() {
            return Err(parse_err(path, line, "expected exactly two columns"));
        }
        out.push((u, v));
    }
    Ok(out)
}

pub fn read_features<T: Scalar>(path: &Path) -> Result<Matrix<T>> {
    let text = read(path)?;
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (line, l) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if l.is_empty() {
            continue;
        }
        let row = l
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                cell.parse::<T>()
                    .map_err(|_| parse_err(path, line, format!("non-numeric feature {cell:?}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    content_lines(&text)
        .map(|(line, l)| {
            l.parse()
                .map_err(|_| parse_err(path, line, format!("invalid label {l:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub stats: IngestStats,
}

/// Loads a graph; the node count comes from the feature file.
pub fn load_graph<T: Scalar>(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<(Graph<T>, LoadReport)> {
    let features = read_features::<T>(feature_path)?;
    let pairs = read_edge_pairs(edge_path)?;
    let labels = label_path.map(read_labels).transpose()?;
    let (g, stats) = Graph::from_edge_list(features, pairs, labels)?;
    if stats.duplicate_edges > 0 {
        warn!(
            "{}: {} duplicate edge(s) ignored",
            edge_path.display(),
            stats.duplicate_edges
        );
    }
    if stats.self_loops_dropped > 0 {
        warn!(
            "{}: {} self-loop(s) dropped (self-loops are implicit)",
            edge_path.display(),
            stats.self_loops_dropped
        );
    }
    Ok((g, LoadReport { stats }))
}

pub fn format_edges<'a>(edges: impl IntoIterator<Item = &'a Edge>) -> String {
    let mut s = String::new();
    for (u, v) in edges {
        let _ = writeln!(s, "{u}\t{v}");
    }
    s
}

pub fn format_features<T: Scalar>(x: &Matrix<T>) -> String {
    let mut s = String::new();
    for i in 0..x.rows() {
        for (j, v) in x.row(i).iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn format_labels(labels: &[usize]) -> String {
    let mut s = String::new();
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    s
}

/// Writes edges, features and (when present) labels of `g`.
pub fn save_graph<T: Scalar>(
    g: &Graph<T>,
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<()> {
    write_text(edge_path, &format_edges(g.edges()))?;
    write_text(feature_path, &format_features(g.features()))?;
    if let (Some(p), Some(l)) = (label_path, g.labels()) {
        write_text(p, &format_labels(l))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_carries_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "1,2\n3,abc\n").unwrap();
        let err = read_features::<f64>(&p).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn comments_and_spaces_in_edge_files() {
        let dir = tempfile::tempdir().unwrap();
        let e = dir.path().join("e.tsv");
        let x = dir.path().join("x.csv");
        fs::write(&e, "# header\n0 1\n0\t1\n\n2\t0\n1 1\n").unwrap();
        fs::write(&x, "1,0\n0,1\n1,1\n").unwrap();
        let (g, rep) = load_graph::<f64>(&e, &x, None).unwrap();
        assert_eq!(g.n_edges(), 2);
        assert_eq!(rep.stats.duplicate_edges, 1);
        assert_eq!(rep.stats.self_loops_dropped, 1);
        assert!(g.has_edge(0, 2));
    }

    #[test]
    fn out_of_range_in_file() {
        let dir = tempfile::tempdir().unwrap();
        let e = dir.path().join("e.tsv");
        let x = dir.path().join("x.csv");
        fs::write(&e, "0\t5\n").unwrap();
        fs::write(&x, "1\n2\n").unwrap();
        assert!(matches!(
            load_graph::<f64>(&e, &x, None),
            Err(Error::NodeOutOfRange { index: 5, .. })
        ));
    }
}
