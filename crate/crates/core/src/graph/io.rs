use std::fs;
use std::io::Write;
use std::path::Path;

use super::WeightedGraph;
use crate::error::{Error, Result};

/// Reads an edge list: one `i j w` triple per line, 0-based indices,
/// blank lines and `#` comments ignored. The node count is `n` when given,
/// otherwise one past the largest index seen.
pub fn read_edge_list(path: &Path, n: Option<usize>) -> Result<WeightedGraph> {
    let text = fs::read_to_string(path)?;
    parse_edge_list(&text, &path.display().to_string(), n)
}

pub(crate) fn parse_edge_list(text: &str, source: &str, n: Option<usize>) -> Result<WeightedGraph> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(lineno + 1, format!("expected 'i j w', got '{line}'")));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno + 1, format!("bad node index '{}'", fields[0])))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno + 1, format!("bad node index '{}'", fields[1])))?;
        let w: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno + 1, format!("bad weight '{}'", fields[2])))?;
        edges.push((i, j, w));
    }
    let n = n.unwrap_or_else(|| edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0));
    WeightedGraph::from_edges(n, edges)
}

/// Writes the graph in the edge-list format. Weights use the shortest
/// representation that parses back to the same `f64`.
pub fn write_edge_list(graph: &WeightedGraph, mut out: impl Write) -> Result<()> {
    writeln!(out, "# n={} m={}", graph.n(), graph.m())?;
    for e in graph.edges() {
        writeln!(out, "{} {} {}", e.i, e.j, e.w)?;
    }
    Ok(())
}

/// Reads a numeric CSV without header, one row per node.
pub fn read_features(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line,
                    message: format!("non-numeric field '{field}'"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{kind:?}"),
        },
    }
}
