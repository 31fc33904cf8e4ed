//! Define-by-run computation record.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. Nodes are only ever appended, so index order is already a
//! topological order and [`Tape::backward`] walks it in reverse.

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to one value recorded on a [`Tape`].
///
/// A `Var` is only meaningful for the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise function with a caller-supplied derivative, see [`Tape::map`].
#[derive(Clone, Copy)]
pub struct ElementwiseFn {
    pub name: &'static str,
    pub value: fn(f64) -> f64,
    pub derivative: fn(f64) -> f64,
}

impl std::fmt::Debug for ElementwiseFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ElementwiseFn({})", self.name)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulScalar { scalar: Var, tensor: Var },
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Sqrt(Var),
    ReduceSum(Var),
    ReduceMean(Var),
    Clamp { input: Var, lo: f64, hi: f64 },
    CrossEntropy { logits: Var, target: usize },
    Map(Var, ElementwiseFn),
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Hadamard(..) => "hadamard",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::MulScalar { .. } => "mul_scalar",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Sqrt(_) => "sqrt",
            Op::ReduceSum(_) => "reduce_sum",
            Op::ReduceMean(_) => "reduce_mean",
            Op::Clamp { .. } => "clamp",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Map(_, f) => f.name,
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Computation record. Not shared between threads while being built; a
/// finished tape can be moved to another thread.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf; its gradient is kept after [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient, present once a backward pass reached `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.tag()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        self.push(value, op, &[a, b])
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op, &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.rows() {
            return Err(Error::Dimension {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if !ta.is_matrix() {
            return Err(Error::Dimension {
                op: "transpose",
                left: ta.shape().to_vec(),
                right: vec![],
            });
        }
        let value = ta.transpose();
        Ok(self.push(value, Op::Transpose(a), &[a]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        Ok(self.zip(a, b, Op::Hadamard(a, b), |x, y| x * y))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        Ok(self.zip(a, b, Op::Div(a, b), |x, y| x / y))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, Op::Scale(a, factor), |x| x * factor)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddConst(a), |x| x + c)
    }

    /// `s · t` where `s` holds a single element.
    pub fn mul_scalar(&mut self, scalar: Var, tensor: Var) -> Result<Var> {
        let ts = self.value(scalar);
        if !ts.is_scalar() {
            return Err(Error::Dimension {
                op: "mul_scalar",
                left: ts.shape().to_vec(),
                right: self.shape(tensor).to_vec(),
            });
        }
        let s = ts.data()[0];
        let value = self.value(tensor).map(|x| s * x);
        Ok(self.push(value, Op::MulScalar { scalar, tensor }, &[scalar, tensor]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.hadamard(a, a).expect("identical operands")
    }

    pub fn reduce_sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::ReduceSum(a), &[a])
    }

    pub fn reduce_mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.numel() as f64);
        self.push(value, Op::ReduceMean(a), &[a])
    }

    /// Elementwise clamp into `[lo, hi]`. The gradient is zero wherever the
    /// input lies strictly outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp { input: a, lo, hi }, |x| x.clamp(lo, hi))
    }

    pub fn min_const(&mut self, a: Var, hi: f64) -> Var {
        self.clamp(a, f64::NEG_INFINITY, hi)
    }

    pub fn max_const(&mut self, a: Var, lo: f64) -> Var {
        self.clamp(a, lo, f64::INFINITY)
    }

    /// Elementwise application of `f.value` whose backward multiplies by
    /// `f.derivative` evaluated at the input.
    pub fn map(&mut self, a: Var, f: ElementwiseFn) -> Var {
        self.unary(a, Op::Map(a, f), f.value)
    }

    /// `-log softmax(logits)[target]` over all elements of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if target >= t.numel() {
            return Err(Error::Index {
                what: "logits",
                index: target,
                len: t.numel(),
            });
        }
        let value = Tensor::scalar(cross_entropy_value(t.data(), target));
        Ok(self.push(value, Op::CrossEntropy { logits, target }, &[logits]))
    }

    /// Reverse pass from a scalar root.
    ///
    /// Adjoints are computed fresh for this call and then added into the
    /// stored gradient of every reachable node that requires one, so two
    /// calls without [`Tape::zero_grads`] in between double every gradient.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut adj);
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.requires_grad(a) {
                    // g · bᵀ
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &tb.data()[p * n..(p + 1) * n];
                            ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    accumulate(adj, a, ga);
                }
                if self.requires_grad(b) {
                    // aᵀ · g
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = ta.data()[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let grow = &g[i * n..(i + 1) * n];
                            let dst = &mut gb[p * n..(p + 1) * n];
                            for (d, &gv) in dst.iter_mut().zip(grow) {
                                *d += aip * gv;
                            }
                        }
                    }
                    accumulate(adj, b, gb);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (node.value.rows(), node.value.cols());
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] = g[i * c + j];
                    }
                }
                accumulate(adj, a, ga);
            }
            Op::Add(a, b) => {
                self.route(adj, a, g.to_vec());
                self.route(adj, b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.route(adj, a, g.to_vec());
                self.route(adj, b, g.iter().map(|x| -x).collect());
            }
            Op::Hadamard(a, b) => {
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                self.route(adj, a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                self.route(adj, b, g.iter().zip(va).map(|(g, x)| g * x).collect());
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                self.route(adj, a, g.iter().zip(vb).map(|(g, y)| g / y).collect());
                let gb = g
                    .iter()
                    .zip(va.iter().zip(vb))
                    .map(|(g, (x, y))| -g * x / (y * y))
                    .collect();
                self.route(adj, b, gb);
            }
            Op::Scale(a, c) => self.route(adj, a, g.iter().map(|x| x * c).collect()),
            Op::AddConst(a) => self.route(adj, a, g.to_vec()),
            Op::MulScalar { scalar, tensor } => {
                let s = self.scalar(scalar);
                let vt = self.value(tensor).data();
                let gs: f64 = g.iter().zip(vt).map(|(g, x)| g * x).sum();
                self.route(adj, scalar, vec![gs]);
                self.route(adj, tensor, g.iter().map(|x| x * s).collect());
            }
            Op::Sigmoid(a) => {
                let ga = g.iter().zip(out).map(|(g, s)| g * s * (1.0 - s)).collect();
                self.route(adj, a, ga);
            }
            Op::Relu(a) => {
                let va = self.value(a).data();
                let ga = g.iter().zip(va).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect();
                self.route(adj, a, ga);
            }
            Op::Exp(a) => {
                self.route(adj, a, g.iter().zip(out).map(|(g, e)| g * e).collect());
            }
            Op::Sqrt(a) => {
                // zero at the origin instead of an infinite slope
                let ga = g
                    .iter()
                    .zip(out)
                    .map(|(g, &r)| if r > 0.0 { g / (2.0 * r) } else { 0.0 })
                    .collect();
                self.route(adj, a, ga);
            }
            Op::ReduceSum(a) => {
                let n = self.value(a).numel();
                self.route(adj, a, vec![g[0]; n]);
            }
            Op::ReduceMean(a) => {
                let n = self.value(a).numel();
                self.route(adj, a, vec![g[0] / n as f64; n]);
            }
            Op::Clamp { input, lo, hi } => {
                let va = self.value(input).data();
                let ga = g
                    .iter()
                    .zip(va)
                    .map(|(g, &x)| if x < lo || x > hi { 0.0 } else { *g })
                    .collect();
                self.route(adj, input, ga);
            }
            Op::CrossEntropy { logits, target } => {
                let mut p = softmax(self.value(logits).data());
                p[target] -= 1.0;
                self.route(adj, logits, p.into_iter().map(|x| x * g[0]).collect());
            }
            Op::Map(a, f) => {
                let va = self.value(a).data();
                let ga = g.iter().zip(va).map(|(g, &x)| g * (f.derivative)(x)).collect();
                self.route(adj, a, ga);
            }
        }
    }

    fn route(&self, adj: &mut [Option<Vec<f64>>], target: Var, g: Vec<f64>) {
        if self.requires_grad(target) {
            accumulate(adj, target, g);
        }
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], target: Var, g: Vec<f64>) {
    match &mut adj[target.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Max-shifted `logsumexp(logits) - logits[target]`, evaluated as
/// `(max - logits[target]) + ln(1 + rest)` so a confident correct class
/// keeps full relative precision.
pub fn cross_entropy_value(logits: &[f64], target: usize) -> f64 {
    let (arg, max) =
        logits.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(bi, bm), (i, l)| {
                if l > bm {
                    (i, l)
                } else {
                    (bi, bm)
                }
            },
        );
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, &l)| (l - max).exp())
        .sum();
    (max - logits[target]) + rest.ln_1p()
}
