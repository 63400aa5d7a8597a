//! Tape-style computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so every node's inputs have
//! smaller ids and the reverse of insertion order is a valid topological
//! order for the gradient pass.

use std::collections::HashMap;

use super::network::Activation;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulTransB(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `n×d` plus a broadcast `1×d` row.
    AddRow(NodeId, NodeId),
    SubRow(NodeId, NodeId),
    /// `n×d` minus a broadcast `n×1` column.
    SubCol(NodeId, NodeId),
    DivCol(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId),
    Activate(NodeId, Activation),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Abs(NodeId),
    Square(NodeId),
    Clamp(NodeId, f64, f64),
    Sum(NodeId),
    Mean(NodeId),
    /// Column-wise mean over rows: `n×d → 1×d`.
    MeanRows(NodeId),
    /// Row-wise mean over columns: `n×d → n×1`.
    MeanCols(NodeId),
    SumCols(NodeId),
    /// Pairwise kernel matrix `K(aᵢ, bⱼ)`: `n×d, m×d → n×m`.
    Kernel(NodeId, NodeId, KernelSpec),
    /// `K(aᵢ, aᵢ)`: `n×d → n×1`.
    KernelDiag(NodeId, KernelSpec),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulTransB(..) => "matmul_tb",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::SubRow(..) => "sub_row",
            Op::SubCol(..) => "sub_col",
            Op::DivCol(..) => "div_col",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Activate(..) => "activate",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sqrt(_) => "sqrt",
            Op::Abs(_) => "abs",
            Op::Square(_) => "square",
            Op::Clamp(..) => "clamp",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MeanRows(_) => "mean_rows",
            Op::MeanCols(_) => "mean_cols",
            Op::SumCols(_) => "sum_cols",
            Op::Kernel(..) => "kernel",
            Op::KernelDiag(..) => "kernel_diag",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Constant | Op::Param => vec![],
            Op::MatMul(a, b)
            | Op::MatMulTransB(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::SubRow(a, b)
            | Op::SubCol(a, b)
            | Op::DivCol(a, b)
            | Op::Kernel(a, b, _) => vec![a, b],
            Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Activate(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::Abs(a)
            | Op::Square(a)
            | Op::Clamp(a, ..)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MeanRows(a)
            | Op::MeanCols(a)
            | Op::SumCols(a)
            | Op::KernelDiag(a, _) => vec![a],
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of a scalar loss with respect to named parameters.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_name: HashMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.by_name.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor) {
        self.by_name.insert(name.into(), grad);
    }

    /// Keeps only parameters whose name starts with `prefix`.
    pub fn retain_prefix(&mut self, prefix: &str) {
        self.by_name.retain(|k, _| k.starts_with(prefix));
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data()[0]
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    /// Registers a trainable tensor. Registering the same name twice returns
    /// the original node, so a network can be applied to several batches.
    pub fn param(&mut self, name: &str, value: &Tensor) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(Op::Param, value.clone());
        self.params.insert(name.to_owned(), id);
        id
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, op: Op, value: Tensor) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name().to_owned()));
        }
        Ok(self.push(op, value))
    }

    fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
        Error::Shape {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push_checked(Op::MatMul(a, b), v)
    }

    pub fn matmul_transb(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(Self::shape_err("matmul_tb", va, vb));
        }
        let (n, m, k) = (va.rows(), vb.rows(), va.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let ra = va.row(i);
            for j in 0..m {
                let rb = vb.row(j);
                out[i * m + j] = (0..k).map(|p| ra[p] * rb[p]).sum();
            }
        }
        self.push_checked(Op::MatMulTransB(a, b), Tensor::from_parts(n, m, out))
    }

    fn zip_same(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(Self::shape_err(op.name(), va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let v = Tensor::from_parts(va.rows(), va.cols(), data);
        self.push_checked(op, v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn row_broadcast(&mut self, a: NodeId, r: NodeId, op: Op, sign: f64) -> Result<NodeId> {
        let (va, vr) = (self.value(a), self.value(r));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(Self::shape_err(op.name(), va, vr));
        }
        let row = vr.data();
        let data = va
            .iter_rows()
            .flat_map(|x| x.iter().zip(row).map(move |(&p, &q)| p + sign * q))
            .collect();
        let v = Tensor::from_parts(va.rows(), va.cols(), data);
        self.push_checked(op, v)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.row_broadcast(a, row, Op::AddRow(a, row), 1.0)
    }

    pub fn sub_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.row_broadcast(a, row, Op::SubRow(a, row), -1.0)
    }

    fn col_broadcast(&mut self, a: NodeId, c: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<NodeId> {
        let (va, vc) = (self.value(a), self.value(c));
        if vc.cols() != 1 || vc.rows() != va.rows() {
            return Err(Self::shape_err(op.name(), va, vc));
        }
        let col = vc.data();
        let data = va
            .iter_rows()
            .zip(col)
            .flat_map(|(x, &s)| {
                let f = &f;
                x.iter().map(move |&p| f(p, s))
            })
            .collect();
        let v = Tensor::from_parts(va.rows(), va.cols(), data);
        self.push_checked(op, v)
    }

    pub fn sub_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        self.col_broadcast(a, col, Op::SubCol(a, col), |p, s| p - s)
    }

    pub fn div_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        self.col_broadcast(a, col, Op::DivCol(a, col), |p, s| p / s)
    }

    fn unary(&mut self, op: Op, f: impl Fn(f64) -> f64) -> Result<NodeId> {
        let input = op.inputs()[0];
        let v = self.value(input).map(f);
        self.push_checked(op, v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.unary(Op::Scale(a, s), |x| s * x)
    }

    pub fn offset(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.unary(Op::Offset(a), |x| x + s)
    }

    pub fn activate(&mut self, a: NodeId, act: Activation) -> Result<NodeId> {
        self.unary(Op::Activate(a, act), |x| act.apply(x))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Log(a), f64::ln)
    }

    /// Square root; the gradient at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Sqrt(a), f64::sqrt)
    }

    /// Absolute value; the gradient at exactly zero is taken as zero.
    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Abs(a), f64::abs)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.unary(Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).data().iter().sum();
        self.push_checked(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push_checked(Op::Mean(a), Tensor::scalar(m))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let (n, d) = (v.rows(), v.cols());
        let mut out = vec![0.0; d];
        for row in v.iter_rows() {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        self.push_checked(Op::MeanRows(a), Tensor::from_parts(1, d, out))
    }

    pub fn mean_cols(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let d = v.cols() as f64;
        let out = v.iter_rows().map(|r| r.iter().sum::<f64>() / d).collect();
        self.push_checked(Op::MeanCols(a), Tensor::from_parts(v.rows(), 1, out))
    }

    pub fn sum_cols(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let out = v.iter_rows().map(|r| r.iter().sum::<f64>()).collect();
        self.push_checked(Op::SumCols(a), Tensor::from_parts(v.rows(), 1, out))
    }

    pub fn kernel(&mut self, a: NodeId, b: NodeId, k: KernelSpec) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(Self::shape_err("kernel", va, vb));
        }
        let (n, m) = (va.rows(), vb.rows());
        let mut out = Vec::with_capacity(n * m);
        for ra in va.iter_rows() {
            for rb in vb.iter_rows() {
                out.push(k.eval_unchecked(ra, rb));
            }
        }
        self.push_checked(Op::Kernel(a, b, k), Tensor::from_parts(n, m, out))
    }

    pub fn kernel_diag(&mut self, a: NodeId, k: KernelSpec) -> Result<NodeId> {
        let va = self.value(a);
        let out = va.iter_rows().map(|r| k.eval_unchecked(r, r)).collect();
        self.push_checked(Op::KernelDiag(a, k), Tensor::from_parts(va.rows(), 1, out))
    }

    /// Differentiates the one-element node `loss` with respect to every
    /// registered parameter. Parameters the loss does not depend on get a
    /// zero gradient.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            for input in node.op.inputs() {
                if input.0 >= idx {
                    return Err(Error::Cycle {
                        node: idx,
                        input: input.0,
                    });
                }
            }
            let Some(g) = grads[idx].take() else { continue };
            if let Op::Param = node.op {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
        }

        let mut by_name = HashMap::with_capacity(self.params.len());
        for (name, &id) in &self.params {
            let v = self.value(id);
            let g = grads
                .get_mut(id.0)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(v.rows(), v.cols()));
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
            by_name.insert(name.clone(), g);
        }
        Ok(Gradients { by_name })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let val = |id: NodeId| &self.nodes[id.0].value;
        match node.op {
            Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                accumulate(grads, a, g.matmul(&val(b).transpose())?);
                accumulate(grads, b, val(a).transpose().matmul(g)?);
            }
            Op::MatMulTransB(a, b) => {
                accumulate(grads, a, g.matmul(val(b))?);
                accumulate(grads, b, g.transpose().matmul(val(a))?);
            }
            Op::Add(a, b) => {
                accumulate(grads, a, g.clone());
                accumulate(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, a, g.clone());
                accumulate(grads, b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                accumulate(grads, a, zip_map(g, val(b), |x, y| x * y));
                accumulate(grads, b, zip_map(g, val(a), |x, y| x * y));
            }
            Op::AddRow(a, r) | Op::SubRow(a, r) => {
                let sign = if matches!(node.op, Op::AddRow(..)) { 1.0 } else { -1.0 };
                accumulate(grads, a, g.clone());
                let mut col_sums = vec![0.0; g.cols()];
                for row in g.iter_rows() {
                    for (s, &x) in col_sums.iter_mut().zip(row) {
                        *s += sign * x;
                    }
                }
                accumulate(grads, r, Tensor::from_parts(1, g.cols(), col_sums));
            }
            Op::SubCol(a, c) => {
                accumulate(grads, a, g.clone());
                let sums = g.iter_rows().map(|r| -r.iter().sum::<f64>()).collect();
                accumulate(grads, c, Tensor::from_parts(g.rows(), 1, sums));
            }
            Op::DivCol(a, c) => {
                let (va, vc) = (val(a), val(c));
                let mut da = Vec::with_capacity(g.len());
                let mut dc = Vec::with_capacity(g.rows());
                for ((gr, ar), &s) in g.iter_rows().zip(va.iter_rows()).zip(vc.data()) {
                    da.extend(gr.iter().map(|&x| x / s));
                    let dot: f64 = gr.iter().zip(ar).map(|(x, y)| x * y).sum();
                    dc.push(-dot / (s * s));
                }
                accumulate(grads, a, Tensor::from_parts(g.rows(), g.cols(), da));
                accumulate(grads, c, Tensor::from_parts(g.rows(), 1, dc));
            }
            Op::Scale(a, s) => accumulate(grads, a, g.map(|x| s * x)),
            Op::Offset(a) => accumulate(grads, a, g.clone()),
            Op::Activate(a, act) => {
                let d = zip3(g, val(a), out, |gv, x, y| gv * act.derivative(x, y));
                accumulate(grads, a, d);
            }
            Op::Exp(a) => accumulate(grads, a, zip_map(g, out, |x, y| x * y)),
            Op::Log(a) => accumulate(grads, a, zip_map(g, val(a), |x, y| x / y)),
            Op::Sqrt(a) => accumulate(
                grads,
                a,
                zip_map(g, out, |x, y| if y > 0.0 { 0.5 * x / y } else { 0.0 }),
            ),
            Op::Abs(a) => accumulate(
                grads,
                a,
                zip_map(g, val(a), |x, y| {
                    if y > 0.0 {
                        x
                    } else if y < 0.0 {
                        -x
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Square(a) => accumulate(grads, a, zip_map(g, val(a), |x, y| 2.0 * x * y)),
            Op::Clamp(a, lo, hi) => accumulate(
                grads,
                a,
                zip_map(g, val(a), |x, y| if (lo..=hi).contains(&y) { x } else { 0.0 }),
            ),
            Op::Sum(a) => {
                let v = val(a);
                accumulate(grads, a, Tensor::full(v.rows(), v.cols(), g.data()[0]));
            }
            Op::Mean(a) => {
                let v = val(a);
                let s = g.data()[0] / v.len() as f64;
                accumulate(grads, a, Tensor::full(v.rows(), v.cols(), s));
            }
            Op::MeanRows(a) => {
                let v = val(a);
                let n = v.rows() as f64;
                let row: Vec<f64> = g.data().iter().map(|x| x / n).collect();
                let data = row.iter().copied().cycle().take(v.len()).collect();
                accumulate(grads, a, Tensor::from_parts(v.rows(), v.cols(), data));
            }
            Op::MeanCols(a) | Op::SumCols(a) => {
                let v = val(a);
                let scale = if matches!(node.op, Op::MeanCols(_)) {
                    1.0 / v.cols() as f64
                } else {
                    1.0
                };
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&x| std::iter::repeat_n(x * scale, v.cols()))
                    .collect();
                accumulate(grads, a, Tensor::from_parts(v.rows(), v.cols(), data));
            }
            Op::Kernel(a, b, k) => {
                let (va, vb) = (val(a), val(b));
                let d = va.cols();
                let mut da = vec![0.0; va.len()];
                let mut db = vec![0.0; vb.len()];
                for (i, ra) in va.iter_rows().enumerate() {
                    for (j, rb) in vb.iter_rows().enumerate() {
                        let gij = g.get(i, j);
                        if gij == 0.0 {
                            continue;
                        }
                        k.accumulate_grad_first(ra, rb, gij, &mut da[i * d..(i + 1) * d]);
                        k.accumulate_grad_first(rb, ra, gij, &mut db[j * d..(j + 1) * d]);
                    }
                }
                accumulate(grads, a, Tensor::from_parts(va.rows(), d, da));
                accumulate(grads, b, Tensor::from_parts(vb.rows(), d, db));
            }
            Op::KernelDiag(a, k) => {
                let va = val(a);
                let d = va.cols();
                let mut da = vec![0.0; va.len()];
                for (i, ra) in va.iter_rows().enumerate() {
                    k.accumulate_grad_diag(ra, g.data()[i], &mut da[i * d..(i + 1) * d]);
                }
                accumulate(grads, a, Tensor::from_parts(va.rows(), d, da));
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.rows(), a.cols(), data)
}

fn zip3(a: &Tensor, b: &Tensor, c: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::from_parts(a.rows(), a.cols(), data)
}
