//! Arena-backed reverse-mode differentiation graph.
//!
//! Nodes are appended in creation order, so every parent has a smaller id than
//! its child and reverse id order is a valid reverse topological order.

use std::sync::Arc;

use thiserror::Error;

use super::Matrix;

type Shape = (usize, usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: reduction axis has length 0")]
    EmptyAxis { op: &'static str },
    #[error("{op}: index {index} out of bounds for length {len}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{op}: no inputs")]
    NoInputs { op: &'static str },
    #[error("softmax: every entry of slice {slice} is masked out")]
    FullyMasked { slice: usize },
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },
    #[error("expected a 1x1 output, got {0:?}")]
    NotScalar(Shape),
    #[error("node {node} refers to parent {parent} that is not older than itself")]
    Cycle { node: usize, parent: usize },
    #[error("backward already ran on this graph; call zero_grad first")]
    BackwardTwice,
    #[error("unknown node id {0}")]
    UnknownNode(usize),
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Axis an operation runs along.
///
/// `Rows` walks the row index, so each column is handled independently
/// (a column-wise softmax, a mean that yields `1 x cols`). `Cols` walks the
/// column index, one row at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Full,
    Row,
    Col,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Affine {
        lhs: NodeId,
        rhs: NodeId,
        bias: NodeId,
        broadcast: Broadcast,
    },
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    Softmax {
        input: NodeId,
        axis: Axis,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    LeakyRelu {
        input: NodeId,
        slope: f64,
    },
    Exp(NodeId),
    Log(NodeId),
    Mean {
        input: NodeId,
        axis: Axis,
    },
    Sum(NodeId),
    Scale {
        input: NodeId,
        factor: f64,
    },
    SelectRows {
        input: NodeId,
        indices: Vec<usize>,
    },
    SelectCols {
        input: NodeId,
        indices: Vec<usize>,
    },
    Gather {
        input: NodeId,
        entries: Vec<(usize, usize)>,
    },
    Reshape(NodeId),
    GradReverse {
        input: NodeId,
        lambda: f64,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Affine { .. } => "affine",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::ConcatRows(_) => "concat_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::Softmax { .. } => "softmax",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Mean { .. } => "mean",
            Op::Sum(_) => "sum",
            Op::Scale { .. } => "scale",
            Op::SelectRows { .. } => "select_rows",
            Op::SelectCols { .. } => "select_cols",
            Op::Gather { .. } => "gather",
            Op::Reshape(_) => "reshape",
            Op::GradReverse { .. } => "grad_reverse",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Affine { lhs, rhs, bias, .. } => vec![*lhs, *rhs, *bias],
            Op::ConcatRows(v) | Op::ConcatCols(v) => v.clone(),
            Op::Transpose(x)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Sum(x)
            | Op::Reshape(x)
            | Op::Softmax { input: x, .. }
            | Op::LeakyRelu { input: x, .. }
            | Op::Mean { input: x, .. }
            | Op::Scale { input: x, .. }
            | Op::SelectRows { input: x, .. }
            | Op::SelectCols { input: x, .. }
            | Op::Gather { input: x, .. }
            | Op::GradReverse { input: x, .. } => vec![*x],
        }
    }
}

struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
    /// Softmax support mask, `true` where the entry participates.
    mask: Option<Arc<Vec<bool>>>,
}

/// A differentiation graph owned by a single computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf; its gradient is kept after [`Graph::backward`].
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.leaf(value, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op: Op::Leaf,
            requires_grad,
            mask: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    /// Gradient of the last backward's loss with respect to `id`, or `None`
    /// if the node does not require gradients or was unreachable.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Clears all gradients so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        let requires_grad = op
            .parents()
            .iter()
            .any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
            mask: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<(), GraphError> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(id.0))
        }
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Shape, GraphError> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(GraphError::ShapeMismatch {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(GraphError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let value = self.value(a).matmul(self.value(b));
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `lhs · rhs + bias`, where `bias` is either the full result shape, a
    /// single row broadcast down the rows, or a single column broadcast
    /// across the columns.
    pub fn affine(&mut self, lhs: NodeId, rhs: NodeId, bias: NodeId) -> Result<NodeId, GraphError> {
        self.check(bias)?;
        let (sa, sb) = (self.shape(lhs), self.shape(rhs));
        if sa.1 != sb.0 {
            return Err(GraphError::ShapeMismatch {
                op: "affine",
                lhs: sa,
                rhs: sb,
            });
        }
        let out_shape = (sa.0, sb.1);
        let bias_shape = self.shape(bias);
        let broadcast = if bias_shape == out_shape {
            Broadcast::Full
        } else if bias_shape == (1, out_shape.1) {
            Broadcast::Row
        } else if bias_shape == (out_shape.0, 1) {
            Broadcast::Col
        } else {
            return Err(GraphError::ShapeMismatch {
                op: "affine bias",
                lhs: out_shape,
                rhs: bias_shape,
            });
        };
        let mut value = self.value(lhs).matmul(self.value(rhs));
        let b = self.value(bias);
        let cols = out_shape.1;
        for (idx, v) in value.data_mut().iter_mut().enumerate() {
            *v += match broadcast {
                Broadcast::Full => b.data()[idx],
                Broadcast::Row => b.data()[idx % cols],
                Broadcast::Col => b.data()[idx / cols],
            };
        }
        Ok(self.push(
            value,
            Op::Affine {
                lhs,
                rhs,
                bias,
                broadcast,
            },
        ))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let value = self.value(x).transpose();
        Ok(self.push(value, Op::Transpose(x)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Stacks inputs vertically; all must share the column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, GraphError> {
        let first = *parts.first().ok_or(GraphError::NoInputs { op: "concat_rows" })?;
        self.check(first)?;
        let cols = self.shape(first).1;
        let mut rows = 0;
        for &p in parts {
            self.check(p)?;
            let s = self.shape(p);
            if s.1 != cols {
                return Err(GraphError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(first),
                    rhs: s,
                });
            }
            rows += s.0;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec())))
    }

    /// Places inputs side by side; all must share the row count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, GraphError> {
        let first = *parts.first().ok_or(GraphError::NoInputs { op: "concat_cols" })?;
        self.check(first)?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            self.check(p)?;
            let s = self.shape(p);
            if s.0 != rows {
                return Err(GraphError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(first),
                    rhs: s,
                });
            }
            cols += s.1;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        Ok(self.push(Matrix::from_vec(rows, cols, data), Op::ConcatCols(parts.to_vec())))
    }

    pub fn softmax(&mut self, x: NodeId, axis: Axis) -> Result<NodeId, GraphError> {
        self.softmax_impl(x, axis, None)
    }

    /// Softmax restricted to the entries where `mask` is `true`; masked-out
    /// entries are exactly zero and receive no gradient. Every slice along
    /// `axis` needs at least one unmasked entry.
    pub fn masked_softmax(
        &mut self,
        x: NodeId,
        axis: Axis,
        mask: Arc<Vec<bool>>,
    ) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let (r, c) = self.shape(x);
        if mask.len() != r * c {
            return Err(GraphError::ShapeMismatch {
                op: "masked_softmax",
                lhs: (r, c),
                rhs: (mask.len(), 1),
            });
        }
        self.softmax_impl(x, axis, Some(mask))
    }

    fn softmax_impl(
        &mut self,
        x: NodeId,
        axis: Axis,
        mask: Option<Arc<Vec<bool>>>,
    ) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let input = self.value(x);
        let (rows, cols) = input.shape();
        let (n_slices, len) = match axis {
            Axis::Rows => (cols, rows),
            Axis::Cols => (rows, cols),
        };
        if len == 0 {
            return Err(GraphError::EmptyAxis { op: "softmax" });
        }
        let index = |slice: usize, i: usize| match axis {
            Axis::Rows => i * cols + slice,
            Axis::Cols => slice * cols + i,
        };
        let active = |idx: usize| mask.as_ref().map_or(true, |m| m[idx]);
        let mut out = Matrix::zeros(rows, cols);
        for s in 0..n_slices {
            let mut max = f64::NEG_INFINITY;
            let mut any = false;
            for i in 0..len {
                let idx = index(s, i);
                if active(idx) {
                    let v = input.data()[idx];
                    if !v.is_finite() {
                        return Err(GraphError::NonFinite { op: "softmax" });
                    }
                    max = max.max(v);
                    any = true;
                }
            }
            if !any {
                return Err(GraphError::FullyMasked { slice: s });
            }
            let mut total = 0.0;
            for i in 0..len {
                let idx = index(s, i);
                if active(idx) {
                    let e = (input.data()[idx] - max).exp();
                    out.data_mut()[idx] = e;
                    total += e;
                }
            }
            for i in 0..len {
                out.data_mut()[index(s, i)] /= total;
            }
        }
        let id = self.push(out, Op::Softmax { input: x, axis });
        self.nodes[id.0].mask = mask;
        Ok(id)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let value = self.value(x).map(sigmoid);
        Ok(self.push(value, Op::Sigmoid(x)))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let value = self.value(x).map(f64::tanh);
        Ok(self.push(value, Op::Tanh(x)))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let value = self
            .value(x)
            .map(|v| if v >= 0.0 { v } else { slope * v });
        Ok(self.push(value, Op::LeakyRelu { input: x, slope }))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let value = self.value(x).map(f64::exp);
        Ok(self.push(value, Op::Exp(x)))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let value = self.value(x).map(f64::ln);
        Ok(self.push(value, Op::Log(x)))
    }

    /// Mean along `axis`: `Rows` gives `1 x cols`, `Cols` gives `rows x 1`.
    pub fn mean(&mut self, x: NodeId, axis: Axis) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let input = self.value(x);
        let (rows, cols) = input.shape();
        let value = match axis {
            Axis::Rows => {
                if rows == 0 {
                    return Err(GraphError::EmptyAxis { op: "mean" });
                }
                let mut out = Matrix::zeros(1, cols);
                for r in 0..rows {
                    for (o, v) in out.data_mut().iter_mut().zip(input.row_slice(r)) {
                        *o += v;
                    }
                }
                out.map(|v| v / rows as f64)
            }
            Axis::Cols => {
                if cols == 0 {
                    return Err(GraphError::EmptyAxis { op: "mean" });
                }
                let data = (0..rows)
                    .map(|r| input.row_slice(r).iter().sum::<f64>() / cols as f64)
                    .collect();
                Matrix::from_vec(rows, 1, data)
            }
        };
        Ok(self.push(value, Op::Mean { input: x, axis }))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let value = Matrix::scalar(self.value(x).sum());
        Ok(self.push(value, Op::Sum(x)))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let value = self.value(x).map(|v| v * factor);
        Ok(self.push(value, Op::Scale { input: x, factor }))
    }

    pub fn select_rows(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let input = self.value(x);
        let (rows, cols) = input.shape();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(GraphError::IndexOutOfBounds {
                    op: "select_rows",
                    index: i,
                    len: rows,
                });
            }
            data.extend_from_slice(input.row_slice(i));
        }
        let value = Matrix::from_vec(indices.len(), cols, data);
        Ok(self.push(
            value,
            Op::SelectRows {
                input: x,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn select_cols(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let input = self.value(x);
        let (rows, cols) = input.shape();
        if let Some(&bad) = indices.iter().find(|&&i| i >= cols) {
            return Err(GraphError::IndexOutOfBounds {
                op: "select_cols",
                index: bad,
                len: cols,
            });
        }
        let mut data = Vec::with_capacity(rows * indices.len());
        for r in 0..rows {
            let row = input.row_slice(r);
            data.extend(indices.iter().map(|&c| row[c]));
        }
        let value = Matrix::from_vec(rows, indices.len(), data);
        Ok(self.push(
            value,
            Op::SelectCols {
                input: x,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Picks individual `(row, col)` entries into a column vector.
    pub fn gather(&mut self, x: NodeId, entries: &[(usize, usize)]) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let input = self.value(x);
        let (rows, cols) = input.shape();
        let mut data = Vec::with_capacity(entries.len());
        for &(r, c) in entries {
            if r >= rows || c >= cols {
                return Err(GraphError::IndexOutOfBounds {
                    op: "gather",
                    index: r * cols + c,
                    len: rows * cols,
                });
            }
            data.push(input.get(r, c));
        }
        let value = Matrix::from_vec(entries.len(), 1, data);
        Ok(self.push(
            value,
            Op::Gather {
                input: x,
                entries: entries.to_vec(),
            },
        ))
    }

    /// Row-major reinterpretation with the same number of entries.
    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let input = self.value(x);
        if input.len() != rows * cols {
            return Err(GraphError::ShapeMismatch {
                op: "reshape",
                lhs: input.shape(),
                rhs: (rows, cols),
            });
        }
        let value = Matrix::from_vec(rows, cols, input.data().to_vec());
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Identity on the forward pass; multiplies the incoming gradient by
    /// `-lambda` on the backward pass.
    pub fn grad_reverse(&mut self, x: NodeId, lambda: f64) -> Result<NodeId, GraphError> {
        self.check(x)?;
        let value = self.value(x).clone();
        Ok(self.push(value, Op::GradReverse { input: x, lambda }))
    }

    /// Propagates d`loss`/d(node) to every node that requires gradients.
    ///
    /// Runs once per graph; a second call fails with
    /// [`GraphError::BackwardTwice`] until [`Graph::zero_grad`] is called.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), GraphError> {
        self.check(loss)?;
        if self.backward_done {
            return Err(GraphError::BackwardTwice);
        }
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(GraphError::NotScalar(shape));
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some(bad) = node.op.parents().into_iter().find(|p| p.0 >= idx) {
                return Err(GraphError::Cycle {
                    node: idx,
                    parent: bad.0,
                });
            }
        }

        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            self.nodes[idx].grad = Some(g);
        }
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let mut send = |target: NodeId, contribution: Matrix| {
            if !nodes[target.0].requires_grad {
                return;
            }
            match &mut grads[target.0] {
                Some(acc) => acc.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        let val = |id: NodeId| &nodes[id.0].value;
        let needs = |id: NodeId| nodes[id.0].requires_grad;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    send(*a, g.matmul_t(val(*b)));
                }
                if needs(*b) {
                    send(*b, val(*a).t_matmul(g));
                }
            }
            Op::Affine {
                lhs,
                rhs,
                bias,
                broadcast,
            } => {
                if needs(*lhs) {
                    send(*lhs, g.matmul_t(val(*rhs)));
                }
                if needs(*rhs) {
                    send(*rhs, val(*lhs).t_matmul(g));
                }
                if needs(*bias) {
                    let db = match broadcast {
                        Broadcast::Full => g.clone(),
                        Broadcast::Row => {
                            let mut out = Matrix::zeros(1, g.cols());
                            for r in 0..g.rows() {
                                for (o, v) in out.data_mut().iter_mut().zip(g.row_slice(r)) {
                                    *o += v;
                                }
                            }
                            out
                        }
                        Broadcast::Col => {
                            let data = (0..g.rows()).map(|r| g.row_slice(r).iter().sum()).collect();
                            Matrix::from_vec(g.rows(), 1, data)
                        }
                    };
                    send(*bias, db);
                }
            }
            Op::Transpose(x) => send(*x, g.transpose()),
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    send(*a, g.zip_map(val(*b), |x, y| x * y));
                }
                if needs(*b) {
                    send(*b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let rows = val(p).rows();
                    let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                    send(p, Matrix::from_vec(rows, cols, slice));
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let cols = val(p).cols();
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        data.extend_from_slice(&g.row_slice(r)[offset..offset + cols]);
                    }
                    send(p, Matrix::from_vec(rows, cols, data));
                    offset += cols;
                }
            }
            Op::Softmax { input, axis } => {
                let y = &node.value;
                let (rows, cols) = y.shape();
                let mut dx = Matrix::zeros(rows, cols);
                let (n_slices, len) = match axis {
                    Axis::Rows => (cols, rows),
                    Axis::Cols => (rows, cols),
                };
                let index = |s: usize, i: usize| match axis {
                    Axis::Rows => i * cols + s,
                    Axis::Cols => s * cols + i,
                };
                for s in 0..n_slices {
                    let dot: f64 = (0..len)
                        .map(|i| g.data()[index(s, i)] * y.data()[index(s, i)])
                        .sum();
                    for i in 0..len {
                        let k = index(s, i);
                        dx.data_mut()[k] = y.data()[k] * (g.data()[k] - dot);
                    }
                }
                if let Some(mask) = &node.mask {
                    for (d, &m) in dx.data_mut().iter_mut().zip(mask.iter()) {
                        if !m {
                            *d = 0.0;
                        }
                    }
                }
                send(*input, dx);
            }
            Op::Sigmoid(x) => send(*x, g.zip_map(&node.value, |d, y| d * y * (1.0 - y))),
            Op::Tanh(x) => send(*x, g.zip_map(&node.value, |d, y| d * (1.0 - y * y))),
            Op::LeakyRelu { input, slope } => {
                let s = *slope;
                send(
                    *input,
                    g.zip_map(val(*input), |d, x| if x >= 0.0 { d } else { s * d }),
                )
            }
            Op::Exp(x) => send(*x, g.zip_map(&node.value, |d, y| d * y)),
            Op::Log(x) => send(*x, g.zip_map(val(*x), |d, v| d / v)),
            Op::Mean { input, axis } => {
                let (rows, cols) = val(*input).shape();
                let mut dx = Matrix::zeros(rows, cols);
                match axis {
                    Axis::Rows => {
                        for r in 0..rows {
                            for c in 0..cols {
                                dx.set(r, c, g.get(0, c) / rows as f64);
                            }
                        }
                    }
                    Axis::Cols => {
                        for r in 0..rows {
                            for c in 0..cols {
                                dx.set(r, c, g.get(r, 0) / cols as f64);
                            }
                        }
                    }
                }
                send(*input, dx);
            }
            Op::Sum(x) => {
                let (rows, cols) = val(*x).shape();
                send(*x, Matrix::filled(rows, cols, g.get(0, 0)));
            }
            Op::Scale { input, factor } => {
                let f = *factor;
                send(*input, g.map(|v| v * f));
            }
            Op::SelectRows { input, indices } => {
                let (rows, cols) = val(*input).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for (out_row, &src) in indices.iter().enumerate() {
                    for c in 0..cols {
                        let v = dx.get(src, c) + g.get(out_row, c);
                        dx.set(src, c, v);
                    }
                }
                send(*input, dx);
            }
            Op::SelectCols { input, indices } => {
                let (rows, cols) = val(*input).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    for (out_col, &src) in indices.iter().enumerate() {
                        let v = dx.get(r, src) + g.get(r, out_col);
                        dx.set(r, src, v);
                    }
                }
                send(*input, dx);
            }
            Op::Gather { input, entries } => {
                let (rows, cols) = val(*input).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for (i, &(r, c)) in entries.iter().enumerate() {
                    let v = dx.get(r, c) + g.get(i, 0);
                    dx.set(r, c, v);
                }
                send(*input, dx);
            }
            Op::Reshape(x) => {
                let (rows, cols) = val(*x).shape();
                send(*x, Matrix::from_vec(rows, cols, g.data().to_vec()));
            }
            Op::GradReverse { input, lambda } => {
                let l = *lambda;
                send(*input, g.map(|v| -l * v));
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
