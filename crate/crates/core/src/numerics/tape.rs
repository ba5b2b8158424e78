//! Reverse-mode differentiation over a linear record of primitive calls.
//!
//! Every primitive appends a node holding its output value and enough
//! information to both replay the forward computation and push adjoints back
//! to its inputs. Parameter nodes borrow their values from a [`ParamStore`].

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tensor::{gelu, gelu_grad, sigmoid, Axis, Mask, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Elementwise map with a caller-supplied derivative.
#[derive(Clone, Copy)]
pub struct ElementwiseFn {
    pub name: &'static str,
    pub forward: fn(f64) -> f64,
    pub derivative: fn(f64) -> f64,
}

impl std::fmt::Debug for ElementwiseFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name)
    }
}

/// Constant inputs of the fused binary cross-entropy.
#[derive(Clone, Debug)]
pub struct BceTargets {
    pub targets: Tensor,
    pub weights: Tensor,
    pub clamp: f64,
}

#[derive(Clone, Debug)]
pub enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    MatMulTn(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Matrix times a `1 × 1` node.
    MulScalar(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    Exp(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Gelu(NodeId),
    Map(NodeId, ElementwiseFn),
    Mean(NodeId, Axis),
    Sum(NodeId),
    Softmax(NodeId, Axis),
    MaskedSoftmax(NodeId, Arc<Mask>),
    MaskedFill(NodeId, Arc<Mask>, f64),
    LayerNorm(NodeId, f64),
    /// Sum of `w · BCE(target, sigmoid(logit))`, probabilities clamped.
    BceWithLogits(NodeId, Arc<BceTargets>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::MatMulTn(..) => "matmul_tn",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::MulScalar(..) => "mul_scalar",
            Op::ConcatRows(_) => "concat_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::Exp(_) => "exp",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Gelu(_) => "gelu",
            Op::Map(_, f) => f.name,
            Op::Mean(..) => "mean",
            Op::Sum(_) => "sum",
            Op::Softmax(..) => "softmax",
            Op::MaskedSoftmax(..) => "masked_softmax",
            Op::MaskedFill(..) => "masked_fill",
            Op::LayerNorm(..) => "layer_norm",
            Op::BceWithLogits(..) => "bce_with_logits",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input | Op::Param(_) => vec![],
            Op::MatMul(a, b)
            | Op::MatMulNt(a, b)
            | Op::MatMulTn(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::MulScalar(a, b) => vec![*a, *b],
            Op::ConcatRows(v) | Op::ConcatCols(v) => v.clone(),
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::SliceRows(a, ..)
            | Op::SliceCols(a, ..)
            | Op::Exp(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Gelu(a)
            | Op::Map(a, _)
            | Op::Mean(a, _)
            | Op::Sum(a)
            | Op::Softmax(a, _)
            | Op::MaskedSoftmax(a, _)
            | Op::MaskedFill(a, ..)
            | Op::LayerNorm(a, _)
            | Op::BceWithLogits(a, _) => vec![*a],
        }
    }
}

struct Node {
    op: Op,
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor>,
}

/// One forward pass worth of recorded primitives.
pub struct Tape<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

fn eval<'t>(op: &Op, get: impl Fn(NodeId) -> &'t Tensor) -> Result<Tensor> {
    let v = |id: &NodeId| get(*id);
    Ok(match op {
        Op::Input | Op::Param(_) => {
            return Err(Error::contract("leaves are created with input/param"))
        }
        Op::MatMul(a, b) => v(a).matmul(v(b))?,
        Op::MatMulNt(a, b) => v(a).matmul_nt(v(b))?,
        Op::MatMulTn(a, b) => v(a).matmul_tn(v(b))?,
        Op::Transpose(a) => v(a).transpose(),
        Op::Add(a, b) => v(a).add(v(b))?,
        Op::Sub(a, b) => v(a).sub(v(b))?,
        Op::Mul(a, b) => v(a).mul(v(b))?,
        Op::AddRow(a, b) => v(a).add_row(v(b))?,
        Op::MulRow(a, b) => v(a).mul_row(v(b))?,
        Op::Scale(a, c) => v(a).scale(*c),
        Op::MulScalar(a, s) => {
            let s = v(s);
            if s.shape() != [1, 1] {
                return Err(Error::dim("mul_scalar", &v(a).shape(), &s.shape()));
            }
            v(a).scale(s.item()?)
        }
        Op::ConcatRows(ids) => Tensor::concat_rows(&ids.iter().map(v).collect::<Vec<_>>())?,
        Op::ConcatCols(ids) => Tensor::concat_cols(&ids.iter().map(v).collect::<Vec<_>>())?,
        Op::SliceRows(a, s, l) => v(a).slice_rows(*s, *l)?,
        Op::SliceCols(a, s, l) => v(a).slice_cols(*s, *l)?,
        Op::Exp(a) => v(a).map(f64::exp),
        Op::Tanh(a) => v(a).map(f64::tanh),
        Op::Sigmoid(a) => v(a).map(sigmoid),
        Op::Gelu(a) => v(a).map(gelu),
        Op::Map(a, f) => v(a).map(f.forward),
        Op::Mean(a, axis) => v(a).mean(*axis)?,
        Op::Sum(a) => Tensor::scalar(v(a).sum()),
        Op::Softmax(a, axis) => v(a).softmax(*axis),
        Op::MaskedSoftmax(a, m) => v(a).masked_softmax(m)?,
        Op::MaskedFill(a, m, fill) => v(a).masked_fill(m, *fill)?,
        Op::LayerNorm(a, eps) => v(a).layer_norm(*eps),
        Op::BceWithLogits(a, t) => Tensor::scalar(bce_forward(v(a), t)?),
    })
}

fn clamp_prob(p: f64, clamp: f64) -> f64 {
    p.clamp(clamp, 1.0 - clamp)
}

fn bce_forward(logits: &Tensor, t: &BceTargets) -> Result<f64> {
    logits.same_shape(&t.targets, "bce_with_logits")?;
    logits.same_shape(&t.weights, "bce_with_logits")?;
    let mut total = 0.0;
    for ((&z, &y), &w) in logits.data().iter().zip(t.targets.data()).zip(t.weights.data()) {
        if w == 0.0 {
            continue;
        }
        let p = clamp_prob(sigmoid(z), t.clamp);
        total += -w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    Ok(total)
}

fn bce_backward(logits: &Tensor, t: &BceTargets, upstream: f64) -> Tensor {
    let mut g = Tensor::zeros(logits.rows(), logits.cols());
    for (i, ((&z, &y), &w)) in logits
        .data()
        .iter()
        .zip(t.targets.data())
        .zip(t.weights.data())
        .enumerate()
    {
        if w == 0.0 {
            continue;
        }
        let raw = sigmoid(z);
        let p = clamp_prob(raw, t.clamp);
        // d/dp of the loss, zeroed where the clamp is active.
        let d_p = if p != raw {
            0.0
        } else {
            -w * (y / p - (1.0 - y) / (1.0 - p))
        };
        g.data_mut()[i] = upstream * d_p * raw * (1.0 - raw);
    }
    g
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'a ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0] {
            Node {
                op: Op::Param(p),
                value: None,
            } => self.params.value(*p),
            Node { value: Some(v), .. } => v,
            Node { value: None, .. } => unreachable!("only parameter nodes borrow"),
        }
    }

    pub fn shape(&self, id: NodeId) -> [usize; 2] {
        self.value(id).shape()
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    /// Records a leaf with a constant value.
    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        let value = value.check_finite("input")?;
        self.nodes.push(Node {
            op: Op::Input,
            value: Some(value),
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<NodeId> {
        let value = value.check_finite(op.name())?;
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Evaluates `op` on the current node values and records it.
    pub fn apply(&mut self, op: Op) -> Result<NodeId> {
        if let Some(bad) = op.inputs().into_iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::contract(format!(
                "{} refers to node {} of a tape with {} nodes",
                op.name(),
                bad.0,
                self.nodes.len()
            )));
        }
        let value = eval(&op, |id| self.value(id))?;
        self.push(op, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMulNt(a, b))
    }

    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMulTn(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.apply(Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.apply(Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Op::Scale(a, c))
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        self.apply(Op::MulScalar(a, s))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.apply(Op::SliceRows(a, start, len))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.apply(Op::SliceCols(a, start, len))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Exp(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Sigmoid(a))
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Gelu(a))
    }

    pub fn map(&mut self, a: NodeId, f: ElementwiseFn) -> Result<NodeId> {
        self.apply(Op::Map(a, f))
    }

    pub fn mean(&mut self, a: NodeId, axis: Axis) -> Result<NodeId> {
        self.apply(Op::Mean(a, axis))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum(a))
    }

    pub fn softmax(&mut self, a: NodeId, axis: Axis) -> Result<NodeId> {
        self.apply(Op::Softmax(a, axis))
    }

    pub fn masked_softmax(&mut self, a: NodeId, mask: Arc<Mask>) -> Result<NodeId> {
        self.apply(Op::MaskedSoftmax(a, mask))
    }

    pub fn masked_fill(&mut self, a: NodeId, mask: Arc<Mask>, fill: f64) -> Result<NodeId> {
        self.apply(Op::MaskedFill(a, mask, fill))
    }

    pub fn layer_norm(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        self.apply(Op::LayerNorm(a, eps))
    }

    pub fn bce_with_logits(&mut self, logits: NodeId, targets: BceTargets) -> Result<NodeId> {
        self.apply(Op::BceWithLogits(logits, Arc::new(targets)))
    }

    /// Re-evaluates every recorded primitive from the leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match &node.op {
                Op::Input | Op::Param(_) => self.value(NodeId(i)).clone(),
                op => eval(op, |id| &values[id.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Gradients of the scalar `loss` with respect to every node and
    /// parameter reachable from it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::contract(format!(
                "loss must be scalar, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let contributions = self.vjp(NodeId(i), &g)?;
            grads[i] = Some(g);
            for (input, delta) in contributions {
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&delta)?,
                    slot @ None => *slot = Some(delta),
                }
            }
        }

        let mut params: Vec<Option<Tensor>> = vec![None; self.params.len()];
        for (&pid, &node) in &self.param_nodes {
            if node.0 < grads.len() {
                params[pid.0] = grads[node.0].clone();
            }
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            nodes: grads,
            params,
            shapes: self.params.iter().map(|(_, p)| p.value.shape()).collect(),
        })
    }

    /// Adjoint contributions of node `id` to its inputs.
    fn vjp(&self, id: NodeId, g: &Tensor) -> Result<Vec<(NodeId, Tensor)>> {
        let out = self.value(id);
        let v = |n: &NodeId| self.value(*n);
        Ok(match &self.nodes[id.0].op {
            Op::Input | Op::Param(_) => vec![],
            Op::MatMul(a, b) => vec![
                (*a, g.matmul_nt(v(b))?),
                (*b, v(a).matmul_tn(g)?),
            ],
            Op::MatMulNt(a, b) => vec![
                (*a, g.matmul(v(b))?),
                (*b, g.matmul_tn(v(a))?),
            ],
            Op::MatMulTn(a, b) => vec![
                (*a, v(b).matmul_nt(g)?),
                (*b, v(a).matmul(g)?),
            ],
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
            Op::Mul(a, b) => vec![(*a, g.mul(v(b))?), (*b, g.mul(v(a))?)],
            Op::AddRow(a, b) => vec![(*a, g.clone()), (*b, g.sum_rows())],
            Op::MulRow(a, b) => vec![(*a, g.mul_row(v(b))?), (*b, g.mul(v(a))?.sum_rows())],
            Op::Scale(a, c) => vec![(*a, g.scale(*c))],
            Op::MulScalar(a, s) => {
                let c = v(s).item()?;
                let ds = g.mul(v(a))?.sum();
                vec![(*a, g.scale(c)), (*s, Tensor::scalar(ds))]
            }
            Op::ConcatRows(ids) => {
                let mut start = 0;
                let mut res = Vec::with_capacity(ids.len());
                for n in ids {
                    let rows = v(n).rows();
                    res.push((*n, g.slice_rows(start, rows)?));
                    start += rows;
                }
                res
            }
            Op::ConcatCols(ids) => {
                let mut start = 0;
                let mut res = Vec::with_capacity(ids.len());
                for n in ids {
                    let cols = v(n).cols();
                    res.push((*n, g.slice_cols(start, cols)?));
                    start += cols;
                }
                res
            }
            Op::SliceRows(a, s, _) => {
                let src = v(a);
                let mut d = Tensor::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    d.row_mut(s + r).copy_from_slice(g.row(r));
                }
                vec![(*a, d)]
            }
            Op::SliceCols(a, s, l) => {
                let src = v(a);
                let mut d = Tensor::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    d.row_mut(r)[*s..s + l].copy_from_slice(g.row(r));
                }
                vec![(*a, d)]
            }
            Op::Exp(a) => vec![(*a, g.mul(out)?)],
            Op::Tanh(a) => vec![(*a, g.zip_map(out, "tanh", |g, y| g * (1.0 - y * y))?)],
            Op::Sigmoid(a) => vec![(*a, g.zip_map(out, "sigmoid", |g, y| g * y * (1.0 - y))?)],
            Op::Gelu(a) => vec![(*a, g.zip_map(v(a), "gelu", |g, x| g * gelu_grad(x))?)],
            Op::Map(a, f) => vec![(*a, g.zip_map(v(a), f.name, |g, x| g * (f.derivative)(x))?)],
            Op::Mean(a, axis) => {
                let src = v(a);
                let mut d = Tensor::zeros(src.rows(), src.cols());
                match axis {
                    Axis::Rows => {
                        let inv = 1.0 / src.rows() as f64;
                        for r in 0..src.rows() {
                            for (o, &gv) in d.row_mut(r).iter_mut().zip(g.data()) {
                                *o = gv * inv;
                            }
                        }
                    }
                    Axis::Cols => {
                        let inv = 1.0 / src.cols() as f64;
                        for r in 0..src.rows() {
                            let gv = g.get(r, 0) * inv;
                            d.row_mut(r).iter_mut().for_each(|o| *o = gv);
                        }
                    }
                }
                vec![(*a, d)]
            }
            Op::Sum(a) => {
                let src = v(a);
                vec![(*a, Tensor::filled(src.rows(), src.cols(), g.item()?))]
            }
            Op::Softmax(a, axis) => vec![(*a, softmax_vjp(out, g, *axis))],
            Op::MaskedSoftmax(a, _) => vec![(*a, softmax_vjp(out, g, Axis::Cols))],
            Op::MaskedFill(a, m, _) => vec![(*a, g.masked_fill(m, 0.0)?)],
            Op::LayerNorm(a, eps) => vec![(*a, layer_norm_vjp(v(a), out, g, *eps))],
            Op::BceWithLogits(a, t) => vec![(*a, bce_backward(v(a), t, g.item()?))],
        })
    }
}

fn softmax_vjp(y: &Tensor, g: &Tensor, axis: Axis) -> Tensor {
    match axis {
        Axis::Cols => {
            let mut d = Tensor::zeros(y.rows(), y.cols());
            for r in 0..y.rows() {
                let yr = y.row(r);
                let gr = g.row(r);
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((o, &yv), &gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                    *o = yv * (gv - dot);
                }
            }
            d
        }
        Axis::Rows => softmax_vjp(&y.transpose(), &g.transpose(), Axis::Cols).transpose(),
    }
}

fn layer_norm_vjp(x: &Tensor, y: &Tensor, g: &Tensor, eps: f64) -> Tensor {
    let n = x.cols() as f64;
    let mut d = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let xr = x.row(r);
        let mean = xr.iter().sum::<f64>() / n;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + eps).sqrt();
        let yr = y.row(r);
        let gr = g.row(r);
        let g_mean = gr.iter().sum::<f64>() / n;
        let gy_mean = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
        for ((o, &gv), &yv) in d.row_mut(r).iter_mut().zip(gr).zip(yr) {
            *o = inv_std * (gv - g_mean - yv * gy_mean);
        }
    }
    d
}

/// Result of [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient with respect to a recorded node (zeros if unreached).
    pub fn wrt(&self, node: NodeId, shape: [usize; 2]) -> Tensor {
        self.nodes
            .get(node.0)
            .and_then(Clone::clone)
            .unwrap_or_else(|| Tensor::zeros(shape[0], shape[1]))
    }

    /// Gradient with respect to a parameter; zeros when the loss does not
    /// depend on it.
    pub fn param(&self, id: ParamId) -> Tensor {
        self.params[id.0].clone().unwrap_or_else(|| {
            let [r, c] = self.shapes[id.0];
            Tensor::zeros(r, c)
        })
    }

    pub fn reached(&self, id: ParamId) -> bool {
        self.params[id.0].is_some()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Moves the parameter gradients out, `None` where unreached.
    pub fn into_param_grads(self) -> Vec<Option<Tensor>> {
        self.params
    }
}
