use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::LabeledGraph;
use crate::error::{GuideError, Result};

pub(crate) fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> GuideError {
    GuideError::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parses an edge list: `u v` or `u v w` per line, `#` comments, blank lines ignored.
pub(crate) fn parse_edges(text: &str, path: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut edges = Vec::new();
    for (idx, raw) in normalize_newlines(text).lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 || tokens.len() > 3 {
            return Err(parse_err(path, idx + 1, format!("expected `u v [w]`, got `{line}`")));
        }
        let u = tokens[0]
            .parse::<usize>()
            .map_err(|e| parse_err(path, idx + 1, format!("bad node id `{}`: {e}", tokens[0])))?;
        let v = tokens[1]
            .parse::<usize>()
            .map_err(|e| parse_err(path, idx + 1, format!("bad node id `{}`: {e}", tokens[1])))?;
        let w = match tokens.get(2) {
            Some(t) => {
                let w = t
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, idx + 1, format!("bad weight `{t}`: {e}")))?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(parse_err(path, idx + 1, format!("weight must be positive, got {w}")));
                }
                w
            }
            None => 1.0,
        };
        edges.push((u, v, w));
    }
    Ok(edges)
}

/// Parses a header-less CSV of reals, one row per node.
pub(crate) fn parse_features(text: &str, path: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in normalize_newlines(text).lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, idx + 1, format!("bad value `{}`: {e}", t.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("expected {} columns, got {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let d = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

pub(crate) fn parse_labels(text: &str, path: &str) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (idx, raw) in normalize_newlines(text).lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(
            line.parse::<usize>()
                .map_err(|e| parse_err(path, idx + 1, format!("bad label `{line}`: {e}")))?,
        );
    }
    Ok(labels)
}

pub(crate) fn format_edges(edges: &[(usize, usize, f64)]) -> String {
    let mut out = String::new();
    for &(u, v, w) in edges {
        if w == 1.0 {
            let _ = writeln!(out, "{u} {v}");
        } else {
            let _ = writeln!(out, "{u} {v} {w}");
        }
    }
    out
}

pub(crate) fn format_features(x: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in x.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub(crate) fn format_labels(labels: &[usize]) -> String {
    let mut out = String::new();
    for y in labels {
        let _ = writeln!(out, "{y}");
    }
    out
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        GuideError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Reads a graph from an edge list, a feature CSV and a label file.
pub fn load_graph(edge_path: &Path, feature_path: &Path, label_path: &Path) -> Result<LabeledGraph> {
    let edges = parse_edges(&read_text(edge_path)?, &edge_path.display().to_string())?;
    let features = parse_features(&read_text(feature_path)?, &feature_path.display().to_string())?;
    let labels = parse_labels(&read_text(label_path)?, &label_path.display().to_string())?;
    LabeledGraph::new(edges, features, labels, None)
}

pub fn save_graph(
    g: &LabeledGraph,
    edge_path: &Path,
    feature_path: &Path,
    label_path: &Path,
) -> Result<()> {
    fs::write(edge_path, format_edges(&g.adjacency().edges()))?;
    fs::write(feature_path, format_features(g.features()))?;
    fs::write(label_path, format_labels(g.labels()))?;
    Ok(())
}
