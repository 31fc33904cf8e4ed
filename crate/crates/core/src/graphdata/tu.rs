//! TU benchmark text format.
//!
//! A dataset `DS` is a directory holding
//!
//! - `DS_A.txt`: one edge `i, j` per line over 1-indexed global node ids,
//! - `DS_graph_indicator.txt`: the 1-indexed graph id of node `i` on line `i`,
//! - `DS_graph_labels.txt`: the label of graph `g` on line `g`,
//! - optionally `DS_node_labels.txt` (one integer per node) and
//!   `DS_node_attributes.txt` (comma-separated reals per node).
//!
//! Lines may end in LF or CRLF; tokens may carry surrounding whitespace;
//! blank lines are skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::diffmath::Tensor;
use crate::error::{Error, Result};

use super::Graph;

#[derive(Clone, Debug)]
pub struct TuDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    /// Sorted original graph labels; index `c` is remapped class `c`.
    pub class_values: Vec<i64>,
    pub self_loops_dropped: usize,
}

struct Lines {
    path: PathBuf,
    rows: Vec<(usize, String)>,
}

impl Lines {
    fn read(path: PathBuf) -> Result<Self> {
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingFile(path));
            }
            Err(e) => return Err(Error::io(path, e)),
        };
        let rows = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Ok(Self { path, rows })
    }

    fn optional(path: PathBuf) -> Result<Option<Self>> {
        match Self::read(path) {
            Ok(l) => Ok(Some(l)),
            Err(Error::MissingFile(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            file: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn parse<T: FromStr>(&self, line: usize, token: &str) -> Result<T> {
        token
            .trim()
            .parse()
            .map_err(|_| self.err(line, format!("invalid number {:?}", token.trim())))
    }
}

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Reads dataset `name` from `dir`.
///
/// Edges are symmetrized and deduplicated, self-loops are dropped and
/// counted. Node labels become one-hot columns appended after any node
/// attributes; with neither file present every node gets a single constant
/// feature 1. Graph labels are remapped to `0..C` in sorted order.
pub fn parse_tu_dataset(dir: impl AsRef<Path>, name: &str) -> Result<TuDataset> {
    let dir = dir.as_ref();
    let indicator = Lines::read(file(dir, name, "graph_indicator"))?;
    let edges = Lines::read(file(dir, name, "A"))?;
    let labels = Lines::read(file(dir, name, "graph_labels"))?;
    let node_labels = Lines::optional(file(dir, name, "node_labels"))?;
    let node_attrs = Lines::optional(file(dir, name, "node_attributes"))?;

    // node -> (graph, local index)
    let mut node_graph = Vec::with_capacity(indicator.rows.len());
    let mut graph_sizes: Vec<usize> = Vec::new();
    let mut local = Vec::with_capacity(indicator.rows.len());
    for (line, text) in &indicator.rows {
        let g: usize = indicator.parse(*line, text)?;
        if g == 0 {
            return Err(indicator.err(*line, "graph ids are 1-indexed, found 0"));
        }
        if graph_sizes.len() < g {
            graph_sizes.resize(g, 0);
        }
        local.push(graph_sizes[g - 1]);
        graph_sizes[g - 1] += 1;
        node_graph.push(g - 1);
    }
    let num_nodes = node_graph.len();
    let num_graphs = graph_sizes.len();
    if let Some(empty) = graph_sizes.iter().position(|&s| s == 0) {
        return Err(indicator.err(0, format!("graph {} has no nodes", empty + 1)));
    }

    if labels.rows.len() != num_graphs {
        return Err(labels.err(
            labels.rows.last().map_or(0, |r| r.0),
            format!("expected {num_graphs} graph labels, found {}", labels.rows.len()),
        ));
    }
    let raw_labels = labels
        .rows
        .iter()
        .map(|(line, text)| labels.parse::<i64>(*line, text))
        .collect::<Result<Vec<_>>>()?;
    let class_values: Vec<i64> = raw_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let class_of: BTreeMap<i64, usize> = class_values.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let attrs = match &node_attrs {
        Some(file) => Some(parse_attributes(file, num_nodes)?),
        None => None,
    };
    let onehot = match &node_labels {
        Some(file) => Some(parse_node_labels(file, num_nodes)?),
        None => None,
    };

    let mut adjacency: Vec<Tensor> = graph_sizes.iter().map(|&n| Tensor::zeros(vec![n, n])).collect();
    let mut self_loops_dropped = 0;
    for (line, text) in &edges.rows {
        let mut parts = text.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(edges.err(*line, format!("expected \"i, j\", got {text:?}")));
        };
        let u: usize = edges.parse(*line, a)?;
        let v: usize = edges.parse(*line, b)?;
        for id in [u, v] {
            if id == 0 || id > num_nodes {
                return Err(edges.err(*line, format!("node id {id} outside 1..={num_nodes}")));
            }
        }
        let (u, v) = (u - 1, v - 1);
        if node_graph[u] != node_graph[v] {
            return Err(edges.err(
                *line,
                format!("edge joins graph {} and graph {}", node_graph[u] + 1, node_graph[v] + 1),
            ));
        }
        if u == v {
            self_loops_dropped += 1;
            continue;
        }
        let a = &mut adjacency[node_graph[u]];
        a.set(local[u], local[v], 1.0);
        a.set(local[v], local[u], 1.0);
    }

    let attr_dim = attrs.as_ref().map_or(0, |(d, _)| *d);
    let label_dim = onehot.as_ref().map_or(0, |(d, _)| *d);
    let dim = if attr_dim + label_dim == 0 {
        1
    } else {
        attr_dim + label_dim
    };

    let mut features: Vec<Tensor> = graph_sizes.iter().map(|&n| Tensor::zeros(vec![n, dim])).collect();
    for node in 0..num_nodes {
        let x = &mut features[node_graph[node]];
        let row = local[node];
        if attr_dim + label_dim == 0 {
            x.set(row, 0, 1.0);
            continue;
        }
        if let Some((d, values)) = &attrs {
            for k in 0..*d {
                x.set(row, k, values[node * d + k]);
            }
        }
        if let Some((_, classes)) = &onehot {
            x.set(row, attr_dim + classes[node], 1.0);
        }
    }

    let graphs = features
        .into_iter()
        .zip(adjacency)
        .zip(&raw_labels)
        .map(|((x, a), raw)| Ok(Graph::new(x, a)?.with_label(class_of[raw])))
        .collect::<Result<Vec<_>>>()?;

    Ok(TuDataset {
        name: name.to_string(),
        graphs,
        num_classes: class_values.len(),
        class_values,
        self_loops_dropped,
    })
}

fn parse_node_labels(file: &Lines, num_nodes: usize) -> Result<(usize, Vec<usize>)> {
    if file.rows.len() != num_nodes {
        return Err(file.err(
            0,
            format!("expected {num_nodes} node labels, found {}", file.rows.len()),
        ));
    }
    let raw = file
        .rows
        .iter()
        .map(|(line, text)| file.parse::<i64>(*line, text))
        .collect::<Result<Vec<_>>>()?;
    let vocab: BTreeMap<i64, usize> = raw
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    Ok((vocab.len(), raw.iter().map(|v| vocab[v]).collect()))
}

fn parse_attributes(file: &Lines, num_nodes: usize) -> Result<(usize, Vec<f64>)> {
    if file.rows.len() != num_nodes {
        return Err(file.err(
            0,
            format!("expected {num_nodes} attribute rows, found {}", file.rows.len()),
        ));
    }
    let mut width = None;
    let mut values = Vec::new();
    for (line, text) in &file.rows {
        let row = text
            .split(',')
            .map(|t| file.parse::<f64>(*line, t))
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(file.err(*line, format!("expected {w} attributes, found {}", row.len())));
            }
            _ => {}
        }
        values.extend(row);
    }
    Ok((width.unwrap_or(0), values))
}

fn is_constant_feature(graphs: &[Graph]) -> bool {
    graphs
        .iter()
        .all(|g| g.feature_dim() == 1 && g.features().data().iter().all(|&v| v == 1.0))
}

/// Writes `graphs` as dataset `name` under `dir`, creating the directory.
///
/// Both directions of every edge are listed. Features are written verbatim
/// as node attributes unless every graph carries the constant single
/// feature, in which case no node file is written. Unlabeled graphs get
/// label 0.
pub fn write_tu_dataset(dir: impl AsRef<Path>, name: &str, graphs: &[Graph]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let (mut a, mut ind, mut lab, mut attrs) = (String::new(), String::new(), String::new(), String::new());
    let constant = is_constant_feature(graphs);
    let mut offset = 0;
    for (gi, g) in graphs.iter().enumerate() {
        for (u, v) in g.edges() {
            let _ = writeln!(a, "{}, {}", offset + u + 1, offset + v + 1);
            let _ = writeln!(a, "{}, {}", offset + v + 1, offset + u + 1);
        }
        for node in 0..g.num_nodes() {
            let _ = writeln!(ind, "{}", gi + 1);
            if !constant {
                let row: Vec<String> = g.features().row(node).iter().map(|v| v.to_string()).collect();
                let _ = writeln!(attrs, "{}", row.join(", "));
            }
        }
        let _ = writeln!(lab, "{}", g.label.unwrap_or(0));
        offset += g.num_nodes();
    }

    let mut outputs = vec![("A", a), ("graph_indicator", ind), ("graph_labels", lab)];
    if !constant {
        outputs.push(("node_attributes", attrs));
    }
    for (suffix, text) in outputs {
        let path = file(dir, name, suffix);
        fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Finds the dataset name in `dir` from its single `*_A.txt` file.
pub fn detect_dataset_name(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|f| f.strip_suffix("_A.txt"))
                .map(str::to_string)
        })
        .collect();
    names.sort();
    match names.len() {
        1 => Ok(names.remove(0)),
        0 => Err(Error::MissingFile(dir.join("<DS>_A.txt"))),
        _ => Err(Error::Usage(format!(
            "{} holds several datasets ({}); name one explicitly",
            dir.display(),
            names.join(", ")
        ))),
    }
}
