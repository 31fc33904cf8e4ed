//! Per-graph learnable masks.
//!
//! A [`GraphMask`] holds feature logits `L_X` (`n × d`) and edge logits
//! `L_A` (`n × n`). They materialize as `M_X = sigmoid(L_X)` and
//! `M_A = sigmoid((L_A + L_Aᵀ) / 2)`, and split the graph into the subgraph
//! `Z = (X ⊙ M_X, A ⊙ M_A)` and the remainder `Z' = G - Z`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{sigmoid, Parameter, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graphdata::Graph;

pub const DEFAULT_INIT_LOGIT: f64 = 1.0;
const INIT_NOISE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphMask {
    pub graph_index: usize,
    pub feature_logits: Parameter,
    pub edge_logits: Parameter,
}

/// One mask per graph, every logit `init_logit + U(-0.01, 0.01)`.
pub fn init_masks(graphs: &[Graph], init_logit: f64, seed: u64) -> Vec<GraphMask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logits = |shape: Vec<usize>| {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| init_logit + rng.gen_range(-INIT_NOISE..=INIT_NOISE))
            .collect();
        Parameter::new(Tensor::new(shape, data).expect("shape matches length"))
    };
    graphs
        .iter()
        .enumerate()
        .map(|(graph_index, g)| {
            let (n, d) = (g.num_nodes(), g.feature_dim());
            GraphMask {
                graph_index,
                feature_logits: logits(vec![n, d]),
                edge_logits: logits(vec![n, n]),
            }
        })
        .collect()
}

/// Mask logits recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct BoundMask {
    pub feature_logits: Var,
    pub edge_logits: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct MaterializedMask {
    pub features: Var,
    pub edges: Var,
}

/// `Z` and `Z'` as tape values.
#[derive(Clone, Copy, Debug)]
pub struct MaskedPair {
    pub subgraph_x: Var,
    pub subgraph_a: Var,
    pub remainder_x: Var,
    pub remainder_a: Var,
}

impl GraphMask {
    pub fn check_shape(&self, graph: &Graph) -> Result<()> {
        let (n, d) = (graph.num_nodes(), graph.feature_dim());
        let fx = self.feature_logits.value.shape();
        let fa = self.edge_logits.value.shape();
        if fx != [n, d] || fa != [n, n] {
            return Err(Error::contract(format!(
                "mask shapes {fx:?}/{fa:?} do not fit a graph with {n} nodes and {d} features"
            )));
        }
        Ok(())
    }

    /// Records the logits; `trainable` makes them tape parameters.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMask {
        let mut leaf = |p: &Parameter| {
            if trainable {
                p.bind(tape)
            } else {
                tape.constant(p.value.clone())
            }
        };
        BoundMask {
            feature_logits: leaf(&self.feature_logits),
            edge_logits: leaf(&self.edge_logits),
        }
    }

    /// `(M_X, M_A)` as plain tensors.
    pub fn materialized(&self) -> (Tensor, Tensor) {
        let mx = self.feature_logits.value.map(sigmoid);
        let la = &self.edge_logits.value;
        let n = la.rows();
        let mut ma = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            for j in 0..n {
                ma.set(i, j, sigmoid((la.at(i, j) + la.at(j, i)) * 0.5));
            }
        }
        (mx, ma)
    }

    /// Sum over every nonzero entry of `X` and every edge of `A` of
    /// `min(m, 1 - m)`. Zero exactly when the mask is binary on the
    /// graph's support.
    pub fn overlap_size(&self, graph: &Graph) -> f64 {
        let (mx, ma) = self.materialized();
        let soft = |m: f64| m.min(1.0 - m);
        let features: f64 = graph
            .features()
            .data()
            .iter()
            .zip(mx.data())
            .filter(|(x, _)| **x != 0.0)
            .map(|(_, &m)| soft(m))
            .sum();
        let edges: f64 = graph
            .adjacency()
            .data()
            .iter()
            .zip(ma.data())
            .filter(|(a, _)| **a != 0.0)
            .map(|(_, &m)| soft(m))
            .sum();
        features + edges
    }
}

/// Differentiable squashing and symmetrization of bound logits.
pub fn materialize(tape: &mut Tape, mask: BoundMask) -> Result<MaterializedMask> {
    let features = tape.sigmoid(mask.feature_logits);
    let lt = tape.transpose(mask.edge_logits)?;
    let sym = tape.add(mask.edge_logits, lt)?;
    let half = tape.scale(sym, 0.5);
    let edges = tape.sigmoid(half);
    Ok(MaterializedMask { features, edges })
}

/// `Z = G ⊙ M`, `Z' = G - Z` on tape values of the graph.
pub fn apply_mask(tape: &mut Tape, x: Var, a: Var, mask: MaterializedMask) -> Result<MaskedPair> {
    let subgraph_x = tape.hadamard(x, mask.features)?;
    let subgraph_a = tape.hadamard(a, mask.edges)?;
    let remainder_x = tape.sub(x, subgraph_x)?;
    let remainder_a = tape.sub(a, subgraph_a)?;
    Ok(MaskedPair {
        subgraph_x,
        subgraph_a,
        remainder_x,
        remainder_a,
    })
}

/// Records `graph` as constants, binds and materializes `mask`, and splits
/// the graph.
pub fn mask_graph(
    tape: &mut Tape,
    graph: &Graph,
    mask: &GraphMask,
    trainable: bool,
) -> Result<(BoundMask, MaskedPair)> {
    mask.check_shape(graph)?;
    let x = tape.constant(graph.features().clone());
    let a = tape.constant(graph.adjacency().clone());
    let bound = mask.bind(tape, trainable);
    let m = materialize(tape, bound)?;
    Ok((bound, apply_mask(tape, x, a, m)?))
}

/// Plain-tensor split, `((X_Z, A_Z), (X_Z', A_Z'))`.
pub fn split_graph(graph: &Graph, mask: &GraphMask) -> Result<((Tensor, Tensor), (Tensor, Tensor))> {
    let mut tape = Tape::new();
    let (_, pair) = mask_graph(&mut tape, graph, mask, false)?;
    let v = |var| tape.value(var).clone();
    Ok((
        (v(pair.subgraph_x), v(pair.subgraph_a)),
        (v(pair.remainder_x), v(pair.remainder_a)),
    ))
}

/// Text dump of materialized masks: a `graph <index> <n> <d>` header, then
/// `M_X` and `M_A` as one row per line with round-trippable numbers.
pub fn write_mask_dump(path: impl AsRef<Path>, masks: &[GraphMask]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for mask in masks {
        let (mx, ma) = mask.materialized();
        let _ = writeln!(out, "graph {} {} {}", mask.graph_index, mx.rows(), mx.cols());
        for (label, t) in [("M_X", &mx), ("M_A", &ma)] {
            let _ = writeln!(out, "{label}");
            for r in 0..t.rows() {
                let row: Vec<String> = t.row(r).iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
