//! Top-k partner networks from reduced matrices and their serialization.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rank::write_lines;

/// Which reduction the matrix comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    /// Direct reduction: column `c` lists the importers supplied by `c`.
    Import,
    /// Inverted reduction: column `c` lists the exporters supplying `c`.
    Export,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::Import => "import",
            View::Export => "export",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeEdge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeEdgeList {
    pub view: View,
    pub k: usize,
    pub edges: Vec<TradeEdge>,
}

/// For every column keeps the `k` largest positive off-diagonal entries, ties
/// by ascending row. Edges point along the trade flow: exporter to importer.
pub fn top_links(m: &DMatrix<f64>, labels: &[String], k: usize, view: View) -> Result<TradeEdgeList> {
    let n = m.nrows();
    if m.ncols() != n || labels.len() != n {
        return Err(Error::Argument(format!(
            "need a square matrix with one label per node ({}x{}, {} labels)",
            m.nrows(),
            m.ncols(),
            labels.len()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::Argument(format!("k must be in 1..{n}, got {k}")));
    }
    let mut edges = Vec::new();
    for c in 0..n {
        let mut partners: Vec<usize> = (0..n).filter(|&i| i != c && m[(i, c)] > 0.0).collect();
        partners.sort_by(|&a, &b| m[(b, c)].total_cmp(&m[(a, c)]).then(a.cmp(&b)));
        for &i in partners.iter().take(k) {
            let (from, to) = match view {
                View::Import => (c, i),
                View::Export => (i, c),
            };
            edges.push(TradeEdge {
                from: labels[from].clone(),
                to: labels[to].clone(),
                weight: m[(i, c)],
            });
        }
    }
    Ok(TradeEdgeList { view, k, edges })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    EdgeCsv,
}

impl GraphFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GraphFormat::Dot => "dot",
            GraphFormat::EdgeCsv => "csv",
        }
    }
}

pub fn serialize_graph(edges: &TradeEdgeList, format: GraphFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format {
        GraphFormat::EdgeCsv => write_lines(path, "from,to,weight", |out| {
            for e in &edges.edges {
                writeln!(out, "{},{},{:e}", e.from, e.to, e.weight)?;
            }
            Ok(())
        }),
        GraphFormat::Dot => {
            let mut nodes: Vec<&str> = Vec::new();
            for e in &edges.edges {
                for n in [e.from.as_str(), e.to.as_str()] {
                    if !nodes.contains(&n) {
                        nodes.push(n);
                    }
                }
            }
            let mut out = format!(
                "digraph trade_{} {{\n  // top {} partners per node\n",
                edges.view.name(),
                edges.k
            );
            for n in nodes {
                out.push_str(&format!("  \"{n}\";\n"));
            }
            for e in &edges.edges {
                out.push_str(&format!(
                    "  \"{}\" -> \"{}\" [label=\"{:.4e}\", weight={:e}];\n",
                    e.from, e.to, e.weight, e.weight
                ));
            }
            out.push_str("}\n");
            fs::write(path, out).map_err(|e| Error::io(path, e))
        }
    }
}

/// Reads an edge CSV written by [`serialize_graph`].
pub fn read_edge_csv(path: impl AsRef<Path>) -> Result<Vec<TradeEdge>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "from,to,weight")) => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected header `from,to,weight`".into(),
            })
        }
    }
    lines
        .map(|(i, line)| {
            let bad = || Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: format!("malformed edge {line:?}"),
            };
            let mut f = line.split(',');
            let (from, to, w) = (f.next().ok_or_else(bad)?, f.next().ok_or_else(bad)?, f.next().ok_or_else(bad)?);
            if f.next().is_some() {
                return Err(bad());
            }
            Ok(TradeEdge {
                from: from.to_string(),
                to: to.to_string(),
                weight: w.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
