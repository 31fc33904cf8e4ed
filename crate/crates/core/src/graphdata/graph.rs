use crate::diffmath::Tensor;
use crate::error::{Error, Result};

/// Undirected graph with dense node features and a binary adjacency matrix.
///
/// `ood_flag` is ground truth for evaluation only. Training and scoring code
/// never reads it.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    features: Tensor,
    adjacency: Tensor,
    pub label: Option<usize>,
    pub ood_flag: Option<bool>,
}

impl Graph {
    /// Checks the adjacency is symmetric, binary and loop-free and that
    /// `features` has one row per node.
    pub fn new(features: Tensor, adjacency: Tensor) -> Result<Self> {
        let n = adjacency.rows();
        if !adjacency.is_matrix() || adjacency.cols() != n {
            return Err(Error::Dimension {
                op: "graph adjacency",
                left: adjacency.shape().to_vec(),
                right: vec![n, n],
            });
        }
        if !features.is_matrix() || features.rows() != n {
            return Err(Error::Dimension {
                op: "graph features",
                left: features.shape().to_vec(),
                right: adjacency.shape().to_vec(),
            });
        }
        for i in 0..n {
            if adjacency.at(i, i) != 0.0 {
                return Err(Error::contract(format!("self-loop at node {i}")));
            }
            for j in 0..n {
                let a = adjacency.at(i, j);
                if a != 0.0 && a != 1.0 {
                    return Err(Error::contract(format!("adjacency entry ({i},{j}) = {a}")));
                }
                if a != adjacency.at(j, i) {
                    return Err(Error::contract(format!("asymmetric edge ({i},{j})")));
                }
            }
        }
        Ok(Self {
            features,
            adjacency,
            label: None,
            ood_flag: None,
        })
    }

    /// Builds a graph from an undirected edge list over `n` nodes.
    /// Duplicates collapse; self-loops are rejected.
    pub fn from_edges(features: Tensor, n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = Tensor::zeros(vec![n, n]);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Index {
                    what: "nodes",
                    index: u.max(v),
                    len: n,
                });
            }
            if u == v {
                return Err(Error::contract(format!("self-loop at node {u}")));
            }
            adjacency.set(u, v, 1.0);
            adjacency.set(v, u, 1.0);
        }
        Self::new(features, adjacency)
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_ood_flag(mut self, flag: bool) -> Self {
        self.ood_flag = Some(flag);
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    /// Undirected edges with `u < v`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if self.adjacency.at(u, v) != 0.0 {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    /// Fraction of possible undirected edges present.
    pub fn density(&self) -> f64 {
        let n = self.num_nodes();
        if n < 2 {
            return 0.0;
        }
        self.num_edges() as f64 / (n * (n - 1) / 2) as f64
    }

    /// Pads the feature matrix with zero columns up to `dim`.
    pub fn pad_features(&mut self, dim: usize) {
        let d = self.feature_dim();
        if dim > d {
            self.features = self.features.pad_cols(dim - d);
        }
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::contract("not a permutation of the node set"));
        }
        let d = self.feature_dim();
        let mut x = Tensor::zeros(vec![n, d]);
        let mut a = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            for k in 0..d {
                x.set(i, k, self.features.at(perm[i], k));
            }
            for j in 0..n {
                a.set(i, j, self.adjacency.at(perm[i], perm[j]));
            }
        }
        Ok(Graph {
            features: x,
            adjacency: a,
            label: self.label,
            ood_flag: self.ood_flag,
        })
    }

    /// Disjoint union of `self` and `other`, keeping `self`'s label and flag.
    pub fn disjoint_union(&self, other: &Graph) -> Result<Graph> {
        if self.feature_dim() != other.feature_dim() {
            return Err(Error::Dimension {
                op: "disjoint_union",
                left: self.features.shape().to_vec(),
                right: other.features.shape().to_vec(),
            });
        }
        let (n1, n2, d) = (self.num_nodes(), other.num_nodes(), self.feature_dim());
        let n = n1 + n2;
        let mut x = Tensor::zeros(vec![n, d]);
        let mut a = Tensor::zeros(vec![n, n]);
        for (offset, g) in [(0, self), (n1, other)] {
            for i in 0..g.num_nodes() {
                for k in 0..d {
                    x.set(offset + i, k, g.features.at(i, k));
                }
                for j in 0..g.num_nodes() {
                    a.set(offset + i, offset + j, g.adjacency.at(i, j));
                }
            }
        }
        Ok(Graph {
            features: x,
            adjacency: a,
            label: self.label,
            ood_flag: self.ood_flag,
        })
    }
}

/// Zero-pads the narrower side so both graph sets share one feature width.
/// Returns the common width.
pub fn feature_align(a: &mut [Graph], b: &mut [Graph]) -> usize {
    let width = |gs: &[Graph]| gs.iter().map(Graph::feature_dim).max().unwrap_or(0);
    let dim = width(a).max(width(b));
    for g in a.iter_mut().chain(b.iter_mut()) {
        g.pad_features(dim);
    }
    dim
}
