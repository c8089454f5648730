//! Reverse-mode automatic differentiation over rank-2 arrays.
//!
//! A [`Graph`] is built once and evaluated many times: inputs are
//! overwritten between steps, [`Graph::forward`] evaluates the ancestors of
//! one node, and [`Graph::backward`] accumulates gradients into every
//! ancestor that depends on a parameter.

mod nn;
mod weights;

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::Circuit;
use crate::scalar::Scalar;
use crate::semloss::{self, SemLossError, TRAINING_WMC_FLOOR};

pub use nn::{glorot, Activation, Adam, AdamConfig, Mlp};
pub use weights::{read_weights, write_weights, WeightFile};

/// Probability clamp used by [`Graph::bce`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward needs a scalar output, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("backward called before forward")]
    NotEvaluated,
    #[error("input node has no value")]
    MissingInput,
    #[error(transparent)]
    SemLoss(#[from] SemLossError),
    #[error("weight file: {0}")]
    Weights(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Dense row-major array of rank at most two.
#[derive(Clone, Debug, PartialEq)]
pub struct Array<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Array<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Array<T> {
        assert_eq!(rows * cols, data.len(), "array data does not match its shape");
        Array { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Array<T> {
        Array::new(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn scalar(v: T) -> Array<T> {
        Array::new(1, 1, vec![v])
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Clone)]
enum Op<T> {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, T),
    Sigmoid(NodeId),
    GroupSoftmax(NodeId, usize),
    Log(NodeId),
    Mean(NodeId),
    Mul(NodeId, NodeId),
    Affine(Vec<(NodeId, T)>, T),
    Bce(NodeId, NodeId),
    BceLogits(NodeId, NodeId),
    SelectCols(NodeId, Vec<usize>),
    ConcatCols(NodeId, NodeId),
    SemanticLoss {
        x: NodeId,
        circuit: Arc<Circuit>,
        /// Code input (rows × k, entries 0/1) and the circuit variables the
        /// code bits clamp.
        codes: Option<(NodeId, Vec<usize>)>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::GroupSoftmax(..) => "group_softmax",
            Op::Log(_) => "log",
            Op::Mean(_) => "mean",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::Bce(..) => "bce",
            Op::BceLogits(..) => "bce_with_logits",
            Op::SelectCols(..) => "select_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::SemanticLoss { .. } => "semantic_loss",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Input | Op::Param => vec![],
            Op::Tanh(a)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::Sigmoid(a)
            | Op::GroupSoftmax(a, _)
            | Op::Log(a)
            | Op::Mean(a)
            | Op::SelectCols(a, _) => vec![*a],
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Mul(a, b)
            | Op::Bce(a, b)
            | Op::BceLogits(a, b)
            | Op::ConcatCols(a, b) => vec![*a, *b],
            Op::Affine(terms, _) => terms.iter().map(|t| t.0).collect(),
            Op::SemanticLoss { x, codes, .. } => {
                let mut p = vec![*x];
                if let Some((c, _)) = codes {
                    p.push(*c);
                }
                p
            }
        }
    }
}

struct Node<T> {
    op: Op<T>,
    value: Option<Array<T>>,
    grad: Vec<T>,
    /// Per-op cache filled by forward (semantic-loss gradients).
    aux: Vec<T>,
    needs_grad: bool,
    computed: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Graph::new()
    }
}

fn shape_err<T>(op: &Op<T>, detail: String) -> AutodiffError {
    AutodiffError::Shape {
        op: op.name(),
        detail,
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Graph<T> {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op<T>, value: Option<Array<T>>) -> NodeId {
        let needs_grad =
            matches!(op, Op::Param) || op.parents().iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            grad: Vec::new(),
            aux: Vec::new(),
            needs_grad,
            computed: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self) -> NodeId {
        self.push(Op::Input, None)
    }

    pub fn param(&mut self, value: Array<T>) -> NodeId {
        self.push(Op::Param, Some(value))
    }

    pub fn set_input(&mut self, id: NodeId, value: Array<T>) {
        assert!(matches!(self.nodes[id.0].op, Op::Input), "node is not an input");
        self.nodes[id.0].value = Some(value);
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b), None)
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddBias(x, bias), None)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Tanh(x), None)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu(x), None)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: T) -> NodeId {
        self.push(Op::LeakyRelu(x, slope), None)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sigmoid(x), None)
    }

    /// Softmax over consecutive column groups of `group` entries in each row.
    pub fn group_softmax(&mut self, x: NodeId, group: usize) -> NodeId {
        self.push(Op::GroupSoftmax(x, group), None)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Log(x), None)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x), None)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b), None)
    }

    /// `Σ coef_i · x_i + offset` over same-shaped nodes.
    pub fn affine(&mut self, terms: &[(NodeId, T)], offset: T) -> NodeId {
        self.push(Op::Affine(terms.to_vec(), offset), None)
    }

    /// Mean binary cross-entropy of probabilities `p` against `target`,
    /// with `p` clamped to `[BCE_EPS, 1 − BCE_EPS]`.
    pub fn bce(&mut self, p: NodeId, target: NodeId) -> NodeId {
        self.push(Op::Bce(p, target), None)
    }

    pub fn bce_with_logits(&mut self, z: NodeId, target: NodeId) -> NodeId {
        self.push(Op::BceLogits(z, target), None)
    }

    pub fn select_cols(&mut self, x: NodeId, cols: Vec<usize>) -> NodeId {
        self.push(Op::SelectCols(x, cols), None)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::ConcatCols(a, b), None)
    }

    /// Per-row semantic loss of the marginals in `x` (rows × vars); output
    /// is a column. WMC is floored at `TRAINING_WMC_FLOOR`.
    pub fn semantic_loss(&mut self, x: NodeId, circuit: Arc<Circuit>) -> NodeId {
        self.push(
            Op::SemanticLoss {
                x,
                circuit,
                codes: None,
            },
            None,
        )
    }

    /// As [`Graph::semantic_loss`] with the circuit variables `code_vars`
    /// clamped per row to the bits in `codes`; `x` holds the marginals of
    /// the remaining variables in table order.
    pub fn conditional_semantic_loss(
        &mut self,
        x: NodeId,
        codes: NodeId,
        circuit: Arc<Circuit>,
        code_vars: Vec<usize>,
    ) -> NodeId {
        self.push(
            Op::SemanticLoss {
                x,
                circuit,
                codes: Some((codes, code_vars)),
            },
            None,
        )
    }

    pub fn value(&self, id: NodeId) -> Option<&Array<T>> {
        self.nodes[id.0].value.as_ref()
    }

    pub fn scalar(&self, id: NodeId) -> Option<T> {
        self.value(id).map(|a| a.data[0])
    }

    pub fn value_mut(&mut self, id: NodeId) -> &mut Array<T> {
        assert!(matches!(self.nodes[id.0].op, Op::Param), "only parameters are mutable");
        self.nodes[id.0].value.as_mut().expect("parameters always hold a value")
    }

    /// Gradient from the last [`Graph::backward`]. Empty when the output
    /// does not depend on the node, which stands for an all-zero gradient.
    pub fn grad(&self, id: NodeId) -> &[T] {
        &self.nodes[id.0].grad
    }

    pub fn params(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].op, Op::Param))
            .map(NodeId)
            .collect()
    }

    fn ancestors(&self, out: NodeId) -> Vec<usize> {
        let mut mark = vec![false; out.0 + 1];
        let mut stack = vec![out.0];
        mark[out.0] = true;
        while let Some(i) = stack.pop() {
            for p in self.nodes[i].op.parents() {
                if !mark[p.0] {
                    mark[p.0] = true;
                    stack.push(p.0);
                }
            }
        }
        (0..=out.0).filter(|&i| mark[i]).collect()
    }

    /// Evaluates `out` and its ancestors.
    pub fn forward(&mut self, out: NodeId) -> Result<&Array<T>, AutodiffError> {
        for n in &mut self.nodes {
            n.computed = false;
        }
        for i in self.ancestors(out) {
            let (value, aux) = self.eval(i)?;
            let n = &mut self.nodes[i];
            if let Some(v) = value {
                n.value = Some(v);
            }
            n.aux = aux;
            n.computed = true;
        }
        Ok(self.nodes[out.0].value.as_ref().expect("just computed"))
    }

    fn val(&self, id: NodeId) -> &Array<T> {
        self.nodes[id.0].value.as_ref().expect("parent evaluated first")
    }

    fn eval(&self, i: usize) -> Result<(Option<Array<T>>, Vec<T>), AutodiffError> {
        let op = &self.nodes[i].op;
        let unary = |a: NodeId, f: &dyn Fn(T) -> T| {
            let x = self.val(a);
            Array::new(x.rows, x.cols, x.data.iter().map(|&v| f(v)).collect())
        };
        let one = T::one();
        let v = match op {
            Op::Input => {
                if self.nodes[i].value.is_none() {
                    return Err(AutodiffError::MissingInput);
                }
                return Ok((None, Vec::new()));
            }
            Op::Param => return Ok((None, Vec::new())),
            Op::MatMul(a, b) => {
                let (x, y) = (self.val(*a), self.val(*b));
                if x.cols != y.rows {
                    return Err(shape_err(op, format!("{:?} x {:?}", x.shape(), y.shape())));
                }
                matmul(x, y)
            }
            Op::AddBias(a, b) => {
                let (x, bias) = (self.val(*a), self.val(*b));
                if bias.rows != 1 || bias.cols != x.cols {
                    return Err(shape_err(
                        op,
                        format!("bias {:?} for {:?}", bias.shape(), x.shape()),
                    ));
                }
                let mut out = x.clone();
                for r in 0..x.rows {
                    for c in 0..x.cols {
                        out.data[r * x.cols + c] += bias.data[c];
                    }
                }
                out
            }
            Op::Tanh(a) => unary(*a, &|v| v.tanh()),
            Op::Relu(a) => unary(*a, &|v| v.max(T::zero())),
            Op::LeakyRelu(a, s) => unary(*a, &|v| if v > T::zero() { v } else { *s * v }),
            Op::Sigmoid(a) => unary(*a, &sigmoid),
            Op::Log(a) => unary(*a, &|v| v.ln()),
            Op::GroupSoftmax(a, g) => {
                let x = self.val(*a);
                if *g == 0 || x.cols % g != 0 {
                    return Err(shape_err(op, format!("{} columns in groups of {g}", x.cols)));
                }
                let mut out = x.clone();
                for grp in out.data.chunks_mut(*g) {
                    let m = grp.iter().copied().fold(T::neg_infinity(), T::max);
                    let mut s = T::zero();
                    for v in grp.iter_mut() {
                        *v = (*v - m).exp();
                        s += *v;
                    }
                    for v in grp.iter_mut() {
                        *v /= s;
                    }
                }
                out
            }
            Op::Mean(a) => {
                let x = self.val(*a);
                if x.data.is_empty() {
                    return Err(shape_err(op, "empty input".into()));
                }
                Array::scalar(x.data.iter().copied().sum::<T>() / T::lit(x.data.len() as f64))
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.val(*a), self.val(*b));
                if x.shape() != y.shape() {
                    return Err(shape_err(op, format!("{:?} vs {:?}", x.shape(), y.shape())));
                }
                Array::new(
                    x.rows,
                    x.cols,
                    x.data.iter().zip(&y.data).map(|(&p, &q)| p * q).collect(),
                )
            }
            Op::Affine(terms, offset) => {
                let Some(first) = terms.first() else {
                    return Ok((Some(Array::scalar(*offset)), Vec::new()));
                };
                let shape = self.val(first.0).shape();
                let mut out = Array::new(shape.0, shape.1, vec![*offset; shape.0 * shape.1]);
                for (id, k) in terms {
                    let x = self.val(*id);
                    if x.shape() != shape {
                        return Err(shape_err(op, format!("{:?} vs {:?}", x.shape(), shape)));
                    }
                    for (o, &v) in out.data.iter_mut().zip(&x.data) {
                        *o += *k * v;
                    }
                }
                out
            }
            Op::Bce(a, t) | Op::BceLogits(a, t) => {
                let (x, y) = (self.val(*a), self.val(*t));
                if x.shape() != y.shape() || x.data.is_empty() {
                    return Err(shape_err(op, format!("{:?} vs {:?}", x.shape(), y.shape())));
                }
                let n = T::lit(x.data.len() as f64);
                let eps = T::lit(BCE_EPS);
                let s: T = x
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(&v, &t)| {
                        if matches!(op, Op::Bce(..)) {
                            let p = v.max(eps).min(one - eps);
                            -(t * p.ln() + (one - t) * (one - p).ln())
                        } else {
                            v.max(T::zero()) - v * t + (-v.abs()).exp().ln_1p()
                        }
                    })
                    .sum();
                Array::scalar(s / n)
            }
            Op::SelectCols(a, cols) => {
                let x = self.val(*a);
                if let Some(&c) = cols.iter().find(|&&c| c >= x.cols) {
                    return Err(shape_err(op, format!("column {c} of {}", x.cols)));
                }
                let mut data = Vec::with_capacity(x.rows * cols.len());
                for r in 0..x.rows {
                    data.extend(cols.iter().map(|&c| x.data[r * x.cols + c]));
                }
                Array::new(x.rows, cols.len(), data)
            }
            Op::ConcatCols(a, b) => {
                let (x, y) = (self.val(*a), self.val(*b));
                if x.rows != y.rows {
                    return Err(shape_err(op, format!("{:?} vs {:?}", x.shape(), y.shape())));
                }
                let mut data = Vec::with_capacity(x.rows * (x.cols + y.cols));
                for r in 0..x.rows {
                    data.extend_from_slice(x.row(r));
                    data.extend_from_slice(y.row(r));
                }
                Array::new(x.rows, x.cols + y.cols, data)
            }
            Op::SemanticLoss { x, circuit, codes } => {
                let x = self.val(*x);
                let k = codes.as_ref().map_or(0, |(_, v)| v.len());
                if x.cols + k != circuit.num_vars() {
                    return Err(shape_err(
                        op,
                        format!("{} marginals and {k} codes for {} variables", x.cols, circuit.num_vars()),
                    ));
                }
                let code_rows = match codes {
                    Some((c, _)) => {
                        let c = self.val(*c);
                        if c.rows != x.rows || c.cols != k {
                            return Err(shape_err(
                                op,
                                format!("codes {:?} for {} rows", c.shape(), x.rows),
                            ));
                        }
                        Some(c)
                    }
                    None => None,
                };
                let rows: Vec<Result<semloss::LossValue<T>, SemLossError>> = (0..x.rows)
                    .into_par_iter()
                    .map(|r| {
                        let theta = x.row(r);
                        let res = match (codes, code_rows) {
                            (Some((_, vars)), Some(c)) => {
                                let bits: Vec<bool> =
                                    c.row(r).iter().map(|&b| b > T::lit(0.5)).collect();
                                semloss::conditional_semantic_loss(circuit, vars, &bits, theta)
                            }
                            _ => semloss::semantic_loss(circuit, theta),
                        };
                        match res {
                            Err(SemLossError::Infeasible) => Ok(semloss::LossValue {
                                value: -T::lit(TRAINING_WMC_FLOOR).ln(),
                                gradient: vec![T::zero(); theta.len()],
                            }),
                            other => other,
                        }
                    })
                    .collect();
                let mut values = Vec::with_capacity(x.rows);
                let mut aux = Vec::with_capacity(x.rows * x.cols);
                for r in rows {
                    let l = r?;
                    values.push(l.value);
                    aux.extend(l.gradient);
                }
                return Ok((Some(Array::new(x.rows, 1, values)), aux));
            }
        };
        Ok((Some(v), Vec::new()))
    }

    /// Gradients of the scalar `out` with respect to every ancestor that
    /// depends on a parameter. Requires a preceding `forward(out)`.
    pub fn backward(&mut self, out: NodeId) -> Result<(), AutodiffError> {
        let n = &self.nodes[out.0];
        if !n.computed {
            return Err(AutodiffError::NotEvaluated);
        }
        let v = n.value.as_ref().expect("computed");
        if v.data.len() != 1 {
            return Err(AutodiffError::NotScalar {
                rows: v.rows,
                cols: v.cols,
            });
        }
        for n in &mut self.nodes {
            n.grad.clear();
        }
        let order = self.ancestors(out);
        for &i in &order {
            let len = self.nodes[i].value.as_ref().map_or(0, |v| v.data.len());
            let n = &mut self.nodes[i];
            n.grad.clear();
            if n.needs_grad {
                n.grad.resize(len, T::zero());
            }
        }
        if !self.nodes[out.0].needs_grad {
            return Ok(());
        }
        self.nodes[out.0].grad[0] = T::one();
        for &i in order.iter().rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = std::mem::take(&mut self.nodes[i].grad);
            for (p, contrib) in self.local_grads(i, &g) {
                if self.nodes[p.0].needs_grad {
                    for (a, b) in self.nodes[p.0].grad.iter_mut().zip(contrib) {
                        *a += b;
                    }
                }
            }
            self.nodes[i].grad = g;
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &[T]) -> Vec<(NodeId, Vec<T>)> {
        let node = &self.nodes[i];
        let y = node.value.as_ref().expect("computed");
        let wants = |p: &NodeId| self.nodes[p.0].needs_grad;
        let one = T::one();
        let zip = |a: NodeId, f: &dyn Fn(T, T, T) -> T| -> Vec<(NodeId, Vec<T>)> {
            // f(grad, output, input)
            let x = self.val(a);
            vec![(
                a,
                g.iter()
                    .zip(&y.data)
                    .zip(&x.data)
                    .map(|((&g, &y), &x)| f(g, y, x))
                    .collect(),
            )]
        };
        match &node.op {
            Op::Input | Op::Param => vec![],
            Op::MatMul(a, b) => {
                let (x, w) = (self.val(*a), self.val(*b));
                let gy = Array::new(y.rows, y.cols, g.to_vec());
                let mut out = Vec::new();
                if wants(a) {
                    out.push((*a, matmul_bt(&gy, w).data));
                }
                if wants(b) {
                    out.push((*b, matmul_at(x, &gy).data));
                }
                out
            }
            Op::AddBias(a, b) => {
                let mut gb = vec![T::zero(); y.cols];
                for r in 0..y.rows {
                    for c in 0..y.cols {
                        gb[c] += g[r * y.cols + c];
                    }
                }
                vec![(*a, g.to_vec()), (*b, gb)]
            }
            Op::Tanh(a) => zip(*a, &|g, y, _| g * (one - y * y)),
            Op::Relu(a) => zip(*a, &|g, _, x| if x > T::zero() { g } else { T::zero() }),
            Op::LeakyRelu(a, s) => zip(*a, &|g, _, x| if x > T::zero() { g } else { *s * g }),
            Op::Sigmoid(a) => zip(*a, &|g, y, _| g * y * (one - y)),
            Op::Log(a) => zip(*a, &|g, _, x| g / x),
            Op::GroupSoftmax(a, grp) => {
                let mut out = vec![T::zero(); g.len()];
                for ((o, gs), ys) in out
                    .chunks_mut(*grp)
                    .zip(g.chunks(*grp))
                    .zip(y.data.chunks(*grp))
                {
                    let dot: T = gs.iter().zip(ys).map(|(&g, &y)| g * y).sum();
                    for ((o, &g), &y) in o.iter_mut().zip(gs).zip(ys) {
                        *o = y * (g - dot);
                    }
                }
                vec![(*a, out)]
            }
            Op::Mean(a) => {
                let x = self.val(*a);
                let s = g[0] / T::lit(x.data.len() as f64);
                vec![(*a, vec![s; x.data.len()])]
            }
            Op::Mul(a, b) => {
                let (x, z) = (self.val(*a), self.val(*b));
                vec![
                    (*a, g.iter().zip(&z.data).map(|(&g, &z)| g * z).collect()),
                    (*b, g.iter().zip(&x.data).map(|(&g, &x)| g * x).collect()),
                ]
            }
            Op::Affine(terms, _) => terms
                .iter()
                .map(|&(id, k)| (id, g.iter().map(|&g| g * k).collect()))
                .collect(),
            Op::Bce(a, t) | Op::BceLogits(a, t) => {
                let (x, tv) = (self.val(*a), self.val(*t));
                let n = T::lit(x.data.len() as f64);
                let eps = T::lit(BCE_EPS);
                let gx = x
                    .data
                    .iter()
                    .zip(&tv.data)
                    .map(|(&v, &t)| {
                        if matches!(node.op, Op::Bce(..)) {
                            if v < eps || v > one - eps {
                                return T::zero();
                            }
                            g[0] * (-(t / v) + (one - t) / (one - v)) / n
                        } else {
                            g[0] * (sigmoid(v) - t) / n
                        }
                    })
                    .collect();
                vec![(*a, gx)]
            }
            Op::SelectCols(a, cols) => {
                let x = self.val(*a);
                let mut out = vec![T::zero(); x.data.len()];
                for r in 0..x.rows {
                    for (j, &c) in cols.iter().enumerate() {
                        out[r * x.cols + c] += g[r * cols.len() + j];
                    }
                }
                vec![(*a, out)]
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.val(*a).cols, self.val(*b).cols);
                let (mut ga, mut gb) = (Vec::new(), Vec::new());
                for row in g.chunks(ca + cb) {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::SemanticLoss { x, .. } => {
                let cols = self.val(*x).cols;
                let gx = node
                    .aux
                    .chunks(cols)
                    .zip(g)
                    .flat_map(|(row, &gr)| row.iter().map(move |&d| d * gr))
                    .collect();
                vec![(*x, gx)]
            }
        }
    }

    /// Worst relative error between backward and central differences over
    /// every entry of `params`. The error of an entry is
    /// `|a − n| / max(|a|, |n|, 1e-3)`; the floor keeps entries whose true
    /// gradient is zero from dividing round-off by round-off.
    pub fn gradient_check(
        &mut self,
        out: NodeId,
        params: &[NodeId],
        h: T,
    ) -> Result<T, AutodiffError> {
        self.forward(out)?;
        self.backward(out)?;
        let analytic: Vec<Vec<T>> = params.iter().map(|&p| self.grad(p).to_vec()).collect();
        let floor = T::lit(1e-3);
        let mut worst = T::zero();
        for (pi, &p) in params.iter().enumerate() {
            for j in 0..self.value(p).expect("parameter").data.len() {
                let x0 = self.value(p).expect("parameter").data[j];
                let (xp, xm) = (x0 + h, x0 - h);
                self.value_mut(p).data[j] = xp;
                let fp = self.forward(out)?.data[0];
                self.value_mut(p).data[j] = xm;
                let fm = self.forward(out)?.data[0];
                self.value_mut(p).data[j] = x0;
                let num = (fp - fm) / (xp - xm);
                let a = analytic[pi].get(j).copied().unwrap_or(T::zero());
                let err = (a - num).abs() / a.abs().max(num.abs()).max(floor);
                worst = worst.max(err);
            }
        }
        self.forward(out)?;
        Ok(worst)
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn matmul<T: Scalar>(a: &Array<T>, b: &Array<T>) -> Array<T> {
    let mut out = vec![T::zero(); a.rows * b.cols];
    for i in 0..a.rows {
        let o = &mut out[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let x = a.data[i * a.cols + k];
            if x == T::zero() {
                continue;
            }
            for (o, &w) in o.iter_mut().zip(b.row(k)) {
                *o += x * w;
            }
        }
    }
    Array::new(a.rows, b.cols, out)
}

/// `a · bᵀ`
fn matmul_bt<T: Scalar>(a: &Array<T>, b: &Array<T>) -> Array<T> {
    let mut out = vec![T::zero(); a.rows * b.rows];
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out[i * b.rows + j] = ar.iter().zip(b.row(j)).map(|(&x, &y)| x * y).sum();
        }
    }
    Array::new(a.rows, b.rows, out)
}

/// `aᵀ · b`
fn matmul_at<T: Scalar>(a: &Array<T>, b: &Array<T>) -> Array<T> {
    let mut out = vec![T::zero(); a.cols * b.cols];
    for r in 0..a.rows {
        let br = b.row(r);
        for (i, &x) in a.row(r).iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (o, &y) in out[i * b.cols..(i + 1) * b.cols].iter_mut().zip(br) {
                *o += x * y;
            }
        }
    }
    Array::new(a.cols, b.cols, out)
}
