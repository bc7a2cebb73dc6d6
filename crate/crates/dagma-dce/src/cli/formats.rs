//! On-disk formats: graph JSON, dataset CSV, trace JSON-lines, and the
//! result summary. Floats print in shortest round-trip form and parse
//! back bit-exactly, so re-reading an emitted file reproduces the values
//! that were written.

use crate::graphs::{BinaryDag, WeightedAdjacency};
use crate::solver::TraceRecord;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.display().to_string(), source }
    }

    pub fn parse(path: &Path, message: impl Into<String>) -> Self {
        FormatError::Parse { path: path.display().to_string(), message: message.into() }
    }
}

/// Binary-graph wire format: `{"d": n, "edges": [[i, j], ...]}` with
/// edges sorted ascending.
#[derive(Debug, Serialize, Deserialize)]
struct BinaryGraphWire {
    d: usize,
    edges: Vec<(usize, usize)>,
}

pub fn write_binary_graph(path: &Path, graph: &BinaryDag) -> Result<(), FormatError> {
    let wire = BinaryGraphWire {
        d: graph.d,
        edges: graph.edges.iter().copied().collect(), // BTreeSet iterates sorted
    };
    write_json(path, &wire)
}

pub fn read_binary_graph(path: &Path) -> Result<BinaryDag, FormatError> {
    let wire: BinaryGraphWire = read_json(path)?;
    let edges: BTreeSet<(usize, usize)> = wire.edges.into_iter().collect();
    for &(i, j) in &edges {
        if i >= wire.d || j >= wire.d {
            return Err(FormatError::parse(path, format!("edge ({i}, {j}) out of range")));
        }
    }
    Ok(BinaryDag { d: wire.d, edges })
}

/// Weighted-graph wire format: `{"d": n, "weights": [[row 0], [row 1], ...]}`
/// in row-major order.
#[derive(Debug, Serialize, Deserialize)]
struct WeightedGraphWire {
    d: usize,
    weights: Vec<Vec<f64>>,
}

pub fn write_weighted_adjacency(path: &Path, a: &WeightedAdjacency) -> Result<(), FormatError> {
    let wire = WeightedGraphWire {
        d: a.d(),
        weights: a.values.rows().into_iter().map(|r| r.to_vec()).collect(),
    };
    write_json(path, &wire)
}

pub fn read_weighted_adjacency(path: &Path) -> Result<WeightedAdjacency, FormatError> {
    let wire: WeightedGraphWire = read_json(path)?;
    if wire.weights.len() != wire.d || wire.weights.iter().any(|r| r.len() != wire.d) {
        return Err(FormatError::parse(path, "weights are not a d×d matrix"));
    }
    let values = Array2::from_shape_vec(
        (wire.d, wire.d),
        wire.weights.into_iter().flatten().collect(),
    )
    .expect("shape checked");
    Ok(WeightedAdjacency::new(values))
}

/// Dataset CSV: header `x0,...,x{d-1}`, one sample per line, shortest
/// round-trip float formatting.
pub fn write_dataset_csv(path: &Path, x: &Array2<f64>) -> Result<(), FormatError> {
    let (n, d) = x.dim();
    let mut out = String::new();
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "x{j}");
    }
    out.push('\n');
    for s in 0..n {
        for j in 0..d {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", x[(s, j)]);
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| FormatError::io(path, e))
}

pub fn read_dataset_csv(path: &Path) -> Result<Array2<f64>, FormatError> {
    let file = std::fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| FormatError::parse(path, "empty file"))?
        .map_err(|e| FormatError::io(path, e))?;
    let d = header.split(',').count();
    let mut values: Vec<f64> = Vec::new();
    let mut n = 0;
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(FormatError::parse(
                path,
                format!("line {}: expected {d} fields, got {}", lineno + 2, fields.len()),
            ));
        }
        for f in fields {
            let v: f64 = f.parse().map_err(|e| {
                FormatError::parse(path, format!("line {}: bad float {f:?}: {e}", lineno + 2))
            })?;
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(FormatError::parse(path, "no data rows"));
    }
    Ok(Array2::from_shape_vec((n, d), values).expect("row arity checked"))
}

/// Trace log: one JSON record per accepted iteration.
pub fn write_trace_jsonl(path: &Path, trace: &[TraceRecord]) -> Result<(), FormatError> {
    let file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for record in trace {
        let line = serde_json::to_string(record)
            .map_err(|e| FormatError::parse(path, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| FormatError::io(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn read_trace_jsonl(path: &Path) -> Result<Vec<TraceRecord>, FormatError> {
    let file = std::fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.is_empty()))
        .map(|line| {
            let line = line.map_err(|e| FormatError::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| FormatError::parse(path, e.to_string()))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| FormatError::parse(path, e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| FormatError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::parse(path, e.to_string()))
}
