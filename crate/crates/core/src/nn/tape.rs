//! Reverse-mode automatic differentiation over [`Mat`] values.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar output walks the record in reverse and
//! accumulates gradients for parameters and for leaves created with
//! `requires_grad`. Heavy graph operations (GATv2 edge attention, grouped
//! multi-head attention, layer norm) are single fused nodes so a training
//! step keeps only the buffers its backward pass actually reads.

use std::cell::RefCell;
use std::sync::Arc;

use super::mat::{gemm_acc, Mat};
use super::params::{ParamId, ParamStore};

/// Directed edge list with one entry per (src -> dst) message, self-loops included.
#[derive(Clone, Debug, Default)]
pub struct EdgeList {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// Number of nodes the indices refer to.
    pub num_nodes: usize,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

enum Op {
    Leaf,
    Param(usize),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Elu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Softplus(usize),
    Sqr(usize),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    Reshape(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GroupSoftmax(usize, usize),
    GatherRows(usize, Arc<Vec<usize>>),
    GroupReduce {
        x: usize,
        group: usize,
        weights: Arc<Vec<f64>>,
    },
    Gram(usize, usize),
    StraightThrough(usize),
    BceLogits {
        logits: usize,
        targets: Arc<Vec<f64>>,
        weights: Arc<Vec<f64>>,
        norm: f64,
    },
    Mha {
        q: usize,
        k: usize,
        v: usize,
        group: usize,
        heads: usize,
        probs: Vec<f64>,
    },
    GatV2 {
        xl: usize,
        xr: usize,
        ef: usize,
        we: usize,
        att: usize,
        edges: Arc<EdgeList>,
        heads: usize,
        alpha: Vec<f64>,
    },
}

struct Node {
    value: Arc<Mat>,
    op: Op,
    needs_grad: bool,
}

/// Operation record. Not `Sync`; one tape per optimisation step or inference call.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    record: bool,
}

/// Handle to a value on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

/// Result of a backward pass.
pub struct Gradients {
    params: Vec<Option<Mat>>,
    leaves: Vec<(usize, Mat)>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Mat> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn into_params(self) -> Vec<Option<Mat>> {
        self.params
    }

    /// Gradient of a leaf created with [`Tape::input_grad`].
    pub fn wrt(&self, v: Var<'_>) -> Option<&Mat> {
        self.leaves.iter().find(|(id, _)| *id == v.id).map(|(_, g)| g)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A tape that records operations for a later backward pass.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            record: true,
        }
    }

    /// A tape that only evaluates; nothing is kept for differentiation.
    pub fn no_grad() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            record: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op, inputs: &[usize]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = self.record && inputs.iter().any(|&i| nodes[i].needs_grad);
        let op = if needs_grad { op } else { Op::Leaf };
        nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Arc<Mat> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    /// Constant input.
    pub fn constant(&self, m: Mat) -> Var<'_> {
        self.push(m, Op::Leaf, &[])
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Mat::scalar(v))
    }

    /// Input whose gradient is reported by [`Gradients::wrt`].
    pub fn input_grad(&self, m: Mat) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(m),
            op: Op::Leaf,
            needs_grad: self.record,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Parameter leaf; its gradient lands in [`Gradients::param`].
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: store.value_arc(id),
            op: Op::Param(id.0),
            needs_grad: self.record,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Differentiates the scalar `output` with respect to every parameter
    /// and gradient-tracking leaf it depends on.
    pub fn backward(&self, output: Var<'_>, num_params: usize) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.id].value.len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.id] = Some(Mat::scalar(1.0));
        let mut params: Vec<Option<Mat>> = (0..num_params).map(|_| None).collect();
        let mut leaves = Vec::new();

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let acc = |target: usize, delta: Mat, grads: &mut Vec<Option<Mat>>| {
                if !nodes[target].needs_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(existing) => existing.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            let val = |i: usize| -> &Mat { &nodes[i].value };
            match &node.op {
                Op::Leaf => leaves.push((id, g)),
                Op::Param(p) => match &mut params[*p] {
                    Some(existing) => existing.add_assign(&g),
                    slot @ None => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let (am, bm) = (val(*a), val(*b));
                    if nodes[*a].needs_grad {
                        let mut da = Mat::zeros(am.rows, am.cols);
                        gemm_acc(1.0, &g.data, g.rows, g.cols, false, &bm.data, bm.rows, bm.cols, true, &mut da.data);
                        acc(*a, da, &mut grads);
                    }
                    if nodes[*b].needs_grad {
                        let mut db = Mat::zeros(bm.rows, bm.cols);
                        gemm_acc(1.0, &am.data, am.rows, am.cols, true, &g.data, g.rows, g.cols, false, &mut db.data);
                        acc(*b, db, &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    let mut neg = g;
                    neg.data.iter_mut().for_each(|v| *v = -*v);
                    acc(*b, neg, &mut grads);
                }
                Op::Mul(a, b) => {
                    let (am, bm) = (val(*a), val(*b));
                    if nodes[*a].needs_grad {
                        let d = zip_map(&g, bm, |g, b| g * b);
                        acc(*a, d, &mut grads);
                    }
                    if nodes[*b].needs_grad {
                        let d = zip_map(&g, am, |g, a| g * a);
                        acc(*b, d, &mut grads);
                    }
                }
                Op::AddRow(a, b) => {
                    if nodes[*b].needs_grad {
                        let mut db = Mat::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for (d, x) in db.data.iter_mut().zip(g.row(r)) {
                                *d += x;
                            }
                        }
                        acc(*b, db, &mut grads);
                    }
                    acc(*a, g, &mut grads);
                }
                Op::MulCol(a, b) => {
                    let (am, bm) = (val(*a), val(*b));
                    if nodes[*b].needs_grad {
                        let mut db = Mat::zeros(bm.rows, 1);
                        for r in 0..g.rows {
                            db.data[r] = g.row(r).iter().zip(am.row(r)).map(|(x, y)| x * y).sum();
                        }
                        acc(*b, db, &mut grads);
                    }
                    if nodes[*a].needs_grad {
                        let mut da = g;
                        for r in 0..da.rows {
                            let s = bm.data[r];
                            da.row_mut(r).iter_mut().for_each(|v| *v *= s);
                        }
                        acc(*a, da, &mut grads);
                    }
                }
                Op::Scale(a, c) => {
                    let mut d = g;
                    d.data.iter_mut().for_each(|v| *v *= c);
                    acc(*a, d, &mut grads);
                }
                Op::AddScalar(a) => acc(*a, g, &mut grads),
                Op::Elu(a) => {
                    let d = zip_map(&g, &node.value, |g, y| if y > 0.0 { g } else { g * (y + 1.0) });
                    acc(*a, d, &mut grads);
                }
                Op::Sigmoid(a) => {
                    let d = zip_map(&g, &node.value, |g, y| g * y * (1.0 - y));
                    acc(*a, d, &mut grads);
                }
                Op::Tanh(a) => {
                    let d = zip_map(&g, &node.value, |g, y| g * (1.0 - y * y));
                    acc(*a, d, &mut grads);
                }
                Op::Exp(a) => {
                    let d = zip_map(&g, &node.value, |g, y| g * y);
                    acc(*a, d, &mut grads);
                }
                Op::Ln(a) => {
                    let d = zip_map(&g, val(*a), |g, x| g / x);
                    acc(*a, d, &mut grads);
                }
                Op::Softplus(a) => {
                    let d = zip_map(&g, val(*a), |g, x| g * sigmoid(x));
                    acc(*a, d, &mut grads);
                }
                Op::Sqr(a) => {
                    let d = zip_map(&g, val(*a), |g, x| 2.0 * g * x);
                    acc(*a, d, &mut grads);
                }
                Op::Clamp(a, lo, hi) => {
                    let d = zip_map(&g, val(*a), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 });
                    acc(*a, d, &mut grads);
                }
                Op::Minimum(a, b) => {
                    let (am, bm) = (val(*a), val(*b));
                    let mut da = Mat::zeros(g.rows, g.cols);
                    let mut db = Mat::zeros(g.rows, g.cols);
                    for i in 0..g.data.len() {
                        if am.data[i] <= bm.data[i] {
                            da.data[i] = g.data[i];
                        } else {
                            db.data[i] = g.data[i];
                        }
                    }
                    acc(*a, da, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::Sum(a) => {
                    let am = val(*a);
                    acc(*a, Mat::filled(am.rows, am.cols, g.item()), &mut grads);
                }
                Op::Mean(a) => {
                    let am = val(*a);
                    let n = am.len().max(1) as f64;
                    acc(*a, Mat::filled(am.rows, am.cols, g.item() / n), &mut grads);
                }
                Op::RowSum(a) => {
                    let am = val(*a);
                    let mut d = Mat::zeros(am.rows, am.cols);
                    for r in 0..am.rows {
                        let s = g.data[r];
                        d.row_mut(r).iter_mut().for_each(|v| *v = s);
                    }
                    acc(*a, d, &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = val(p).cols;
                        if nodes[p].needs_grad {
                            let mut d = Mat::zeros(g.rows, pc);
                            for r in 0..g.rows {
                                d.row_mut(r).copy_from_slice(&g.row(r)[off..off + pc]);
                            }
                            acc(p, d, &mut grads);
                        }
                        off += pc;
                    }
                }
                Op::SliceCols(a, start) => {
                    let am = val(*a);
                    let mut d = Mat::zeros(am.rows, am.cols);
                    for r in 0..g.rows {
                        d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(*a, d, &mut grads);
                }
                Op::Reshape(a) => {
                    let am = val(*a);
                    acc(*a, Mat::from_vec(am.rows, am.cols, g.data), &mut grads);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gm = val(*gamma);
                    let cols = g.cols;
                    if nodes[*gamma].needs_grad || nodes[*beta].needs_grad {
                        let mut dg = Mat::zeros(1, cols);
                        let mut db = Mat::zeros(1, cols);
                        for r in 0..g.rows {
                            let gr = g.row(r);
                            let xh = &xhat[r * cols..(r + 1) * cols];
                            for c in 0..cols {
                                dg.data[c] += gr[c] * xh[c];
                                db.data[c] += gr[c];
                            }
                        }
                        acc(*gamma, dg, &mut grads);
                        acc(*beta, db, &mut grads);
                    }
                    if nodes[*x].needs_grad {
                        let n = cols as f64;
                        let mut dx = Mat::zeros(g.rows, cols);
                        let mut dxh = vec![0.0; cols];
                        for r in 0..g.rows {
                            let gr = g.row(r);
                            let xh = &xhat[r * cols..(r + 1) * cols];
                            let mut s1 = 0.0;
                            let mut s2 = 0.0;
                            for c in 0..cols {
                                dxh[c] = gr[c] * gm.data[c];
                                s1 += dxh[c];
                                s2 += dxh[c] * xh[c];
                            }
                            let inv = inv_std[r];
                            let out = dx.row_mut(r);
                            for c in 0..cols {
                                out[c] = inv / n * (n * dxh[c] - s1 - xh[c] * s2);
                            }
                        }
                        acc(*x, dx, &mut grads);
                    }
                }
                Op::GroupSoftmax(a, group) => {
                    let y = &node.value;
                    let mut d = Mat::zeros(y.rows, y.cols);
                    for (chunk, (yc, gc)) in d
                        .data
                        .chunks_mut(*group)
                        .zip(y.data.chunks(*group).zip(g.data.chunks(*group)))
                    {
                        let dot: f64 = yc.iter().zip(gc).map(|(a, b)| a * b).sum();
                        for i in 0..chunk.len() {
                            chunk[i] = yc[i] * (gc[i] - dot);
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::GatherRows(a, idx) => {
                    let am = val(*a);
                    let mut d = Mat::zeros(am.rows, am.cols);
                    for (o, &i) in idx.iter().enumerate() {
                        for (t, s) in d.row_mut(i).iter_mut().zip(g.row(o)) {
                            *t += s;
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::GroupReduce { x, group, weights } => {
                    let xm = val(*x);
                    let mut d = Mat::zeros(xm.rows, xm.cols);
                    for r in 0..xm.rows {
                        let w = weights[r];
                        if w == 0.0 {
                            continue;
                        }
                        let gr = g.row(r / group);
                        for (t, s) in d.row_mut(r).iter_mut().zip(gr) {
                            *t = w * s;
                        }
                    }
                    acc(*x, d, &mut grads);
                }
                Op::Gram(x, group) => {
                    let xm = val(*x);
                    let n = *group;
                    let k = xm.cols;
                    let mut d = Mat::zeros(xm.rows, k);
                    for gi in 0..xm.rows / n {
                        let base = gi * n;
                        // sym = dC + dC^T for this group
                        let mut sym = vec![0.0; n * n];
                        for i in 0..n {
                            for j in 0..n {
                                sym[i * n + j] = g.at(base + i, j) + g.at(base + j, i);
                            }
                        }
                        gemm_acc(
                            1.0,
                            &sym,
                            n,
                            n,
                            false,
                            &xm.data[base * k..(base + n) * k],
                            n,
                            k,
                            false,
                            &mut d.data[base * k..(base + n) * k],
                        );
                    }
                    acc(*x, d, &mut grads);
                }
                Op::StraightThrough(p) => acc(*p, g, &mut grads),
                Op::BceLogits {
                    logits,
                    targets,
                    weights,
                    norm,
                } => {
                    let lm = val(*logits);
                    let s = g.item() / norm;
                    let mut d = Mat::zeros(lm.rows, lm.cols);
                    for i in 0..lm.data.len() {
                        d.data[i] = s * weights[i] * (sigmoid(lm.data[i]) - targets[i]);
                    }
                    acc(*logits, d, &mut grads);
                }
                Op::Mha {
                    q,
                    k,
                    v,
                    group,
                    heads,
                    probs,
                } => {
                    let (dq, dk, dv) = mha_backward(val(*q), val(*k), val(*v), &g, *group, *heads, probs);
                    acc(*q, dq, &mut grads);
                    acc(*k, dk, &mut grads);
                    acc(*v, dv, &mut grads);
                }
                Op::GatV2 {
                    xl,
                    xr,
                    ef,
                    we,
                    att,
                    edges,
                    heads,
                    alpha,
                } => {
                    let gb = gatv2_backward(
                        val(*xl),
                        val(*xr),
                        val(*ef),
                        val(*we),
                        val(*att),
                        edges,
                        *heads,
                        alpha,
                        &g,
                    );
                    acc(*xl, gb.dxl, &mut grads);
                    acc(*xr, gb.dxr, &mut grads);
                    acc(*ef, gb.def, &mut grads);
                    acc(*we, gb.dwe, &mut grads);
                    acc(*att, gb.datt, &mut grads);
                }
            }
        }
        Gradients { params, leaves }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn map(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    Mat::from_vec(a.rows, a.cols, a.data.iter().map(|&x| f(x)).collect())
}

fn zip_map(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    Mat::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Snapshot of the current value.
    pub fn value(&self) -> Arc<Mat> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let v = map(&self.value(), f);
        self.tape.push(v, op, &[self.id])
    }

    fn binary(&self, other: Var<'t>, op: Op, f: impl Fn(f64, f64) -> f64) -> Var<'t> {
        let v = zip_map(&self.value(), &other.value(), f);
        self.tape.push(v, op, &[self.id, other.id])
    }

    pub fn matmul(&self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.cols, b.rows, "matmul shape mismatch {:?} x {:?}", a.shape(), b.shape());
        let v = super::mat::matmul(&a, &b);
        self.tape.push(v, Op::MatMul(self.id, other.id), &[self.id, other.id])
    }

    pub fn add(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn minimum(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Minimum(self.id, other.id), f64::min)
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, row: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), row.value());
        assert_eq!((1, a.cols), b.shape(), "add_row shape mismatch");
        let mut v = (*a).clone();
        for r in 0..v.rows {
            for (x, y) in v.row_mut(r).iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        self.tape.push(v, Op::AddRow(self.id, row.id), &[self.id, row.id])
    }

    /// Multiplies row `r` by `col[r]` (`col` is `rows x 1`).
    pub fn mul_col(&self, col: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), col.value());
        assert_eq!((a.rows, 1), b.shape(), "mul_col shape mismatch");
        let mut v = (*a).clone();
        for r in 0..v.rows {
            let s = b.data[r];
            v.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        self.tape.push(v, Op::MulCol(self.id, col.id), &[self.id, col.id])
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |x| x * c)
    }

    pub fn neg(&self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |x| x + c)
    }

    /// `1 - x`.
    pub fn one_minus(&self) -> Var<'t> {
        self.neg().add_scalar(1.0)
    }

    pub fn elu(&self) -> Var<'t> {
        self.unary(Op::Elu(self.id), elu)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn ln(&self) -> Var<'t> {
        self.unary(Op::Ln(self.id), f64::ln)
    }

    pub fn softplus(&self) -> Var<'t> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn sqr(&self) -> Var<'t> {
        self.unary(Op::Sqr(self.id), |x| x * x)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn clamp_min(&self, lo: f64) -> Var<'t> {
        self.clamp(lo, f64::INFINITY)
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.value().data.iter().sum();
        self.tape.push(Mat::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(&self) -> Var<'t> {
        let a = self.value();
        let s = a.data.iter().sum::<f64>() / a.len().max(1) as f64;
        self.tape.push(Mat::scalar(s), Op::Mean(self.id), &[self.id])
    }

    /// Sums each row into a `rows x 1` column.
    pub fn row_sum(&self) -> Var<'t> {
        let a = self.value();
        let v = Mat::from_vec(a.rows, 1, (0..a.rows).map(|r| a.row(r).iter().sum()).collect());
        self.tape.push(v, Op::RowSum(self.id), &[self.id])
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty());
        let tape = parts[0].tape;
        let vals: Vec<Arc<Mat>> = parts.iter().map(|p| p.value()).collect();
        let rows = vals[0].rows;
        let cols: usize = vals.iter().map(|v| v.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for v in &vals {
                assert_eq!(v.rows, rows, "concat_cols row mismatch");
                out.row_mut(r)[off..off + v.cols].copy_from_slice(v.row(r));
                off += v.cols;
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        tape.push(out, Op::ConcatCols(ids.clone()), &ids)
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Var<'t> {
        let a = self.value();
        assert!(start + len <= a.cols, "slice_cols out of range");
        let mut out = Mat::zeros(a.rows, len);
        for r in 0..a.rows {
            out.row_mut(r).copy_from_slice(&a.row(r)[start..start + len]);
        }
        self.tape.push(out, Op::SliceCols(self.id, start), &[self.id])
    }

    /// Row-major reinterpretation with the same element count.
    pub fn reshape(&self, rows: usize, cols: usize) -> Var<'t> {
        let a = self.value();
        assert_eq!(a.len(), rows * cols, "reshape element count mismatch");
        let v = Mat::from_vec(rows, cols, a.data.clone());
        self.tape.push(v, Op::Reshape(self.id), &[self.id])
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` (both `1 x cols`).
    pub fn layer_norm(&self, gamma: Var<'t>, beta: Var<'t>, eps: f64) -> Var<'t> {
        let x = self.value();
        let (gm, bm) = (gamma.value(), beta.value());
        let cols = x.cols;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; x.rows];
        let mut out = Mat::zeros(x.rows, cols);
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            let o = out.row_mut(r);
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat[r * cols + c] = h;
                o[c] = h * gm.data[c] + bm.data[c];
            }
        }
        self.tape.push(
            out,
            Op::LayerNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat,
                inv_std,
            },
            &[self.id, gamma.id, beta.id],
        )
    }

    /// Softmax over consecutive blocks of `group` columns.
    pub fn group_softmax(&self, group: usize) -> Var<'t> {
        let a = self.value();
        assert_eq!(a.cols % group, 0, "group_softmax: cols not divisible by group");
        let mut out = (*a).clone();
        for chunk in out.data.chunks_mut(group) {
            let m = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in chunk.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            chunk.iter_mut().for_each(|v| *v /= s);
        }
        self.tape.push(out, Op::GroupSoftmax(self.id, group), &[self.id])
    }

    pub fn gather_rows(&self, idx: Arc<Vec<usize>>) -> Var<'t> {
        let v = self.value().select_rows(&idx);
        self.tape.push(v, Op::GatherRows(self.id, idx), &[self.id])
    }

    /// `out[g] = sum_n weights[g*group + n] * x[g*group + n]` for each block of `group` rows.
    pub fn group_reduce(&self, group: usize, weights: Arc<Vec<f64>>) -> Var<'t> {
        let x = self.value();
        assert_eq!(x.rows % group, 0, "group_reduce: rows not divisible by group");
        assert_eq!(weights.len(), x.rows);
        let mut out = Mat::zeros(x.rows / group, x.cols);
        for r in 0..x.rows {
            let w = weights[r];
            if w == 0.0 {
                continue;
            }
            let g = r / group;
            let src = x.row(r).to_vec();
            for (t, s) in out.row_mut(g).iter_mut().zip(src) {
                *t += w * s;
            }
        }
        self.tape.push(
            out,
            Op::GroupReduce {
                x: self.id,
                group,
                weights,
            },
            &[self.id],
        )
    }

    /// Per block of `group` rows `E`, emits `E E^T` (stacked as `rows x group`).
    pub fn gram(&self, group: usize) -> Var<'t> {
        let x = self.value();
        assert_eq!(x.rows % group, 0, "gram: rows not divisible by group");
        let k = x.cols;
        let mut out = Mat::zeros(x.rows, group);
        for gi in 0..x.rows / group {
            let base = gi * group;
            let blk = &x.data[base * k..(base + group) * k];
            gemm_acc(
                1.0,
                blk,
                group,
                k,
                false,
                blk,
                group,
                k,
                true,
                &mut out.data[base * group..(base + group) * group],
            );
        }
        self.tape.push(out, Op::Gram(self.id, group), &[self.id])
    }

    /// Forward value `sample`, backward identity into `self`.
    pub fn straight_through(&self, sample: Mat) -> Var<'t> {
        assert_eq!(self.shape(), sample.shape(), "straight_through shape mismatch");
        self.tape.push(sample, Op::StraightThrough(self.id), &[self.id])
    }

    /// Value copy cut off from the gradient graph.
    pub fn detach(&self) -> Var<'t> {
        self.tape.constant((*self.value()).clone())
    }

    /// `sum_i w_i * BCE(sigmoid(logit_i), t_i) / norm`.
    pub fn bce_with_logits(&self, targets: Arc<Vec<f64>>, weights: Arc<Vec<f64>>, norm: f64) -> Var<'t> {
        let l = self.value();
        assert_eq!(l.len(), targets.len());
        assert_eq!(l.len(), weights.len());
        let mut s = 0.0;
        for i in 0..l.len() {
            if weights[i] != 0.0 {
                s += weights[i] * (softplus(l.data[i]) - targets[i] * l.data[i]);
            }
        }
        self.tape.push(
            Mat::scalar(s / norm),
            Op::BceLogits {
                logits: self.id,
                targets,
                weights,
                norm,
            },
            &[self.id],
        )
    }
}

/// Scaled dot-product attention within blocks of `group` rows, `heads` heads
/// splitting the columns evenly.
pub fn mha_core<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>, group: usize, heads: usize) -> Var<'t> {
    let (qm, km, vm) = (q.value(), k.value(), v.value());
    let d = qm.cols;
    assert_eq!(qm.shape(), km.shape());
    assert_eq!(qm.shape(), vm.shape());
    assert_eq!(d % heads, 0, "model width not divisible by heads");
    assert_eq!(qm.rows % group, 0, "rows not divisible by group");
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let groups = qm.rows / group;
    let n = group;
    let mut probs = vec![0.0; groups * heads * n * n];
    let mut out = Mat::zeros(qm.rows, d);
    for g in 0..groups {
        let base = g * n;
        for h in 0..heads {
            let c0 = h * dh;
            let p = &mut probs[(g * heads + h) * n * n..(g * heads + h + 1) * n * n];
            for i in 0..n {
                let qi = &qm.row(base + i)[c0..c0 + dh];
                let pr = &mut p[i * n..(i + 1) * n];
                let mut mx = f64::NEG_INFINITY;
                for j in 0..n {
                    let kj = &km.row(base + j)[c0..c0 + dh];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    pr[j] = s;
                    mx = mx.max(s);
                }
                let mut z = 0.0;
                for x in pr.iter_mut() {
                    *x = (*x - mx).exp();
                    z += *x;
                }
                pr.iter_mut().for_each(|x| *x /= z);
                let o = &mut out.row_mut(base + i)[c0..c0 + dh];
                for j in 0..n {
                    let w = pr[j];
                    let vj = &vm.row(base + j)[c0..c0 + dh];
                    for (t, s) in o.iter_mut().zip(vj) {
                        *t += w * s;
                    }
                }
            }
        }
    }
    let tape = q.tape;
    tape.push(
        out,
        Op::Mha {
            q: q.id,
            k: k.id,
            v: v.id,
            group,
            heads,
            probs,
        },
        &[q.id, k.id, v.id],
    )
}

fn mha_backward(qm: &Mat, km: &Mat, vm: &Mat, g: &Mat, n: usize, heads: usize, probs: &[f64]) -> (Mat, Mat, Mat) {
    let d = qm.cols;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let groups = qm.rows / n;
    let mut dq = Mat::zeros(qm.rows, d);
    let mut dk = Mat::zeros(qm.rows, d);
    let mut dv = Mat::zeros(qm.rows, d);
    let mut dp = vec![0.0; n];
    for gi in 0..groups {
        let base = gi * n;
        for h in 0..heads {
            let c0 = h * dh;
            let p = &probs[(gi * heads + h) * n * n..(gi * heads + h + 1) * n * n];
            for i in 0..n {
                let gi_row = &g.row(base + i)[c0..c0 + dh];
                let pr = &p[i * n..(i + 1) * n];
                let mut dot = 0.0;
                for j in 0..n {
                    let vj = &vm.row(base + j)[c0..c0 + dh];
                    dp[j] = gi_row.iter().zip(vj).map(|(a, b)| a * b).sum();
                    dot += dp[j] * pr[j];
                    // dV_j += P_ij * dO_i
                    let w = pr[j];
                    let dvj = &mut dv.row_mut(base + j)[c0..c0 + dh];
                    for (t, s) in dvj.iter_mut().zip(gi_row) {
                        *t += w * s;
                    }
                }
                for j in 0..n {
                    let ds = pr[j] * (dp[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &km.row(base + j)[c0..c0 + dh];
                    let qi = &qm.row(base + i)[c0..c0 + dh];
                    for (t, s) in dq.row_mut(base + i)[c0..c0 + dh].iter_mut().zip(kj) {
                        *t += ds * s;
                    }
                    for (t, s) in dk.row_mut(base + j)[c0..c0 + dh].iter_mut().zip(qi) {
                        *t += ds * s;
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

const GAT_SLOPE: f64 = 0.2;

#[inline]
fn lrelu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        GAT_SLOPE * x
    }
}

/// GATv2 message passing.
///
/// For edge `e = (j -> i)` and head `h`, the pre-activation is
/// `m_e = xl[j] + xr[i] + ef[e] * we`, the score `a_h . LeakyReLU(m_e)`,
/// normalised by a softmax over all edges entering `i`; the output row `i`
/// is the attention-weighted sum of `xl[j]`, head blocks concatenated.
/// `xl`, `xr`: `V x HD`; `ef`: `E x 1`; `we`, `att`: `1 x HD`.
pub fn gatv2_attention<'t>(
    xl: Var<'t>,
    xr: Var<'t>,
    ef: Var<'t>,
    we: Var<'t>,
    att: Var<'t>,
    edges: Arc<EdgeList>,
    heads: usize,
) -> Var<'t> {
    let (xlm, xrm, efm, wem, attm) = (xl.value(), xr.value(), ef.value(), we.value(), att.value());
    let hd = xlm.cols;
    assert_eq!(hd % heads, 0);
    assert_eq!(xrm.shape(), xlm.shape());
    assert_eq!(efm.shape(), (edges.len(), 1));
    assert_eq!(wem.shape(), (1, hd));
    assert_eq!(attm.shape(), (1, hd));
    let dh = hd / heads;
    let ne = edges.len();
    let nv = xlm.rows;
    let mut scores = vec![0.0; ne * heads];
    let mut m = vec![0.0; hd];
    for e in 0..ne {
        let (s, t) = (edges.src[e], edges.dst[e]);
        let (a, b) = (xlm.row(s), xrm.row(t));
        let f = efm.data[e];
        for c in 0..hd {
            m[c] = lrelu(a[c] + b[c] + f * wem.data[c]);
        }
        for h in 0..heads {
            scores[e * heads + h] = (h * dh..(h + 1) * dh).map(|c| attm.data[c] * m[c]).sum();
        }
    }
    // softmax over incoming edges per (dst, head)
    let mut mx = vec![f64::NEG_INFINITY; nv * heads];
    for e in 0..ne {
        let t = edges.dst[e];
        for h in 0..heads {
            let s = scores[e * heads + h];
            if s > mx[t * heads + h] {
                mx[t * heads + h] = s;
            }
        }
    }
    let mut z = vec![0.0; nv * heads];
    let mut alpha = scores;
    for e in 0..ne {
        let t = edges.dst[e];
        for h in 0..heads {
            let w = (alpha[e * heads + h] - mx[t * heads + h]).exp();
            alpha[e * heads + h] = w;
            z[t * heads + h] += w;
        }
    }
    let mut out = Mat::zeros(nv, hd);
    for e in 0..ne {
        let (s, t) = (edges.src[e], edges.dst[e]);
        for h in 0..heads {
            let w = alpha[e * heads + h] / z[t * heads + h];
            alpha[e * heads + h] = w;
            let src = &xlm.row(s)[h * dh..(h + 1) * dh];
            let dst = &mut out.data[t * hd + h * dh..t * hd + (h + 1) * dh];
            for (o, v) in dst.iter_mut().zip(src) {
                *o += w * v;
            }
        }
    }
    let ids = [xl.id, xr.id, ef.id, we.id, att.id];
    xl.tape.push(
        out,
        Op::GatV2 {
            xl: xl.id,
            xr: xr.id,
            ef: ef.id,
            we: we.id,
            att: att.id,
            edges,
            heads,
            alpha,
        },
        &ids,
    )
}

struct GatGrads {
    dxl: Mat,
    dxr: Mat,
    def: Mat,
    dwe: Mat,
    datt: Mat,
}

#[allow(clippy::too_many_arguments)]
fn gatv2_backward(
    xlm: &Mat,
    xrm: &Mat,
    efm: &Mat,
    wem: &Mat,
    attm: &Mat,
    edges: &EdgeList,
    heads: usize,
    alpha: &[f64],
    g: &Mat,
) -> GatGrads {
    let hd = xlm.cols;
    let dh = hd / heads;
    let ne = edges.len();
    let nv = xlm.rows;
    let mut dxl = Mat::zeros(nv, hd);
    let mut dxr = Mat::zeros(nv, hd);
    let mut def = Mat::zeros(ne, 1);
    let mut dwe = Mat::zeros(1, hd);
    let mut datt = Mat::zeros(1, hd);

    // d alpha_e = <dout[dst], xl[src]> per head; value path into xl.
    let mut dalpha = vec![0.0; ne * heads];
    let mut dot = vec![0.0; nv * heads];
    for e in 0..ne {
        let (s, t) = (edges.src[e], edges.dst[e]);
        for h in 0..heads {
            let gr = &g.row(t)[h * dh..(h + 1) * dh];
            let xs = &xlm.row(s)[h * dh..(h + 1) * dh];
            let da: f64 = gr.iter().zip(xs).map(|(a, b)| a * b).sum();
            dalpha[e * heads + h] = da;
            let a = alpha[e * heads + h];
            dot[t * heads + h] += a * da;
            let tgt = &mut dxl.data[s * hd + h * dh..s * hd + (h + 1) * dh];
            for (o, v) in tgt.iter_mut().zip(gr) {
                *o += a * v;
            }
        }
    }
    let mut pre = vec![0.0; hd];
    for e in 0..ne {
        let (s, t) = (edges.src[e], edges.dst[e]);
        let f = efm.data[e];
        let (a, b) = (xlm.row(s), xrm.row(t));
        for c in 0..hd {
            pre[c] = a[c] + b[c] + f * wem.data[c];
        }
        let mut def_e = 0.0;
        for h in 0..heads {
            let ds = alpha[e * heads + h] * (dalpha[e * heads + h] - dot[t * heads + h]);
            if ds == 0.0 {
                continue;
            }
            for c in h * dh..(h + 1) * dh {
                let x = pre[c];
                datt.data[c] += ds * lrelu(x);
                let dm = ds * attm.data[c] * if x > 0.0 { 1.0 } else { GAT_SLOPE };
                dxl.data[s * hd + c] += dm;
                dxr.data[t * hd + c] += dm;
                dwe.data[c] += dm * f;
                def_e += dm * wem.data[c];
            }
        }
        def.data[e] = def_e;
    }
    GatGrads {
        dxl,
        dxr,
        def,
        dwe,
        datt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Central-difference check of d(f)/d(input) for a scalar function built on a tape.
    fn check_grad(input: Mat, f: impl Fn(Var<'_>) -> Var<'_>) {
        let tape = Tape::new();
        let x = tape.input_grad(input.clone());
        let y = f(x);
        let grads = tape.backward(y, 0);
        let analytic = grads.wrt(x).cloned().unwrap_or_else(|| Mat::zeros(input.rows, input.cols));
        let h = 1e-6;
        for i in 0..input.len() {
            let mut p = input.clone();
            p.data[i] += h;
            let mut m = input.clone();
            m.data[i] -= h;
            let tp = Tape::no_grad();
            let fp = f(tp.constant(p)).item();
            let tm = Tape::no_grad();
            let fm = f(tm.constant(m)).item();
            let num = (fp - fm) / (2.0 * h);
            let a = analytic.data[i];
            let err = (num - a).abs() / (1e-8 + num.abs().max(a.abs()));
            assert!(err < 1e-5 || (num - a).abs() < 1e-9, "grad mismatch at {i}: numeric {num} analytic {a}");
        }
    }

    #[test]
    fn elementwise_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_mat(&mut rng, 3, 4);
        check_grad(x.clone(), |v| v.elu().sum());
        check_grad(x.clone(), |v| v.sigmoid().mul(v.tanh()).sum());
        check_grad(x.clone(), |v| v.softplus().exp().mean());
        check_grad(x.clone(), |v| v.sqr().add_scalar(1.0).ln().sum());
        check_grad(x.clone(), |v| v.clamp(-0.3, 0.4).sum());
        check_grad(x.clone(), |v| v.minimum(v.scale(0.5).add_scalar(0.1)).sum());
    }

    #[test]
    fn structural_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_mat(&mut rng, 4, 6);
        let w = rand_mat(&mut rng, 6, 3);
        let row = rand_mat(&mut rng, 1, 3);
        let col = rand_mat(&mut rng, 4, 1);
        check_grad(x.clone(), |v| {
            let t = v.tape();
            v.matmul(t.constant(w.clone())).add_row(t.constant(row.clone())).elu().sum()
        });
        check_grad(x.clone(), |v| {
            let t = v.tape();
            v.mul_col(t.constant(col.clone())).sqr().sum()
        });
        check_grad(x.clone(), |v| {
            Var::concat_cols(&[v.slice_cols(1, 2), v.slice_cols(0, 3).sqr()]).row_sum().sqr().sum()
        });
        check_grad(x.clone(), |v| v.reshape(8, 3).group_softmax(3).slice_cols(0, 1).sum());
        check_grad(x.clone(), |v| v.gather_rows(Arc::new(vec![3, 0, 3])).sqr().sum());
        check_grad(x.clone(), |v| {
            v.group_reduce(2, Arc::new(vec![0.5, 0.5, 1.0, 0.0])).sqr().sum()
        });
        check_grad(x.clone(), |v| v.gram(2).sqr().sum());
        let g = rand_mat(&mut rng, 1, 6);
        let b = rand_mat(&mut rng, 1, 6);
        check_grad(x.clone(), |v| {
            let t = v.tape();
            v.layer_norm(t.constant(g.clone()), t.constant(b.clone()), 1e-5).elu().sum()
        });
        let targets = Arc::new((0..24).map(|i| (i % 2) as f64).collect::<Vec<_>>());
        let weights = Arc::new((0..24).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 }).collect::<Vec<_>>());
        check_grad(x.clone(), |v| v.bce_with_logits(targets.clone(), weights.clone(), 7.0));
    }

    #[test]
    fn layer_norm_param_grads_reach_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_mat(&mut rng, 3, 5);
        let b = rand_mat(&mut rng, 1, 5);
        check_grad(rand_mat(&mut rng, 1, 5), |g| {
            let t = g.tape();
            t.constant(x.clone()).layer_norm(g, t.constant(b.clone()), 1e-5).sqr().sum()
        });
    }

    #[test]
    fn mha_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = rand_mat(&mut rng, 6, 4);
        let k = rand_mat(&mut rng, 6, 4);
        let v = rand_mat(&mut rng, 6, 4);
        let w = rand_mat(&mut rng, 6, 4);
        fn obj<'t>(o: Var<'t>, w: &Mat) -> Var<'t> {
            o.mul(o.tape().constant(w.clone())).sum()
        }
        check_grad(q.clone(), |x| {
            let t = x.tape();
            obj(mha_core(x, t.constant(k.clone()), t.constant(v.clone()), 3, 2), &w)
        });
        check_grad(k.clone(), |x| {
            let t = x.tape();
            obj(mha_core(t.constant(q.clone()), x, t.constant(v.clone()), 3, 2), &w)
        });
        check_grad(v.clone(), |x| {
            let t = x.tape();
            obj(mha_core(t.constant(q.clone()), t.constant(k.clone()), x, 3, 2), &w)
        });
    }

    #[test]
    fn gatv2_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nv = 4;
        let edges = Arc::new(EdgeList {
            src: vec![0, 1, 2, 3, 1, 0, 2, 3, 0],
            dst: vec![0, 1, 2, 3, 0, 1, 3, 2, 2],
            num_nodes: nv,
        });
        let xl = rand_mat(&mut rng, nv, 4);
        let xr = rand_mat(&mut rng, nv, 4);
        let ef = rand_mat(&mut rng, edges.len(), 1);
        let we = rand_mat(&mut rng, 1, 4);
        let att = rand_mat(&mut rng, 1, 4);
        let w = rand_mat(&mut rng, nv, 4);
        let all = [xl.clone(), xr.clone(), ef.clone(), we.clone(), att.clone()];
        fn run<'t>(which: usize, x: Var<'t>, all: &[Mat; 5], edges: &Arc<EdgeList>, w: &Mat) -> Var<'t> {
            let t = x.tape();
            let mut ins: Vec<Var<'t>> = all.iter().map(|m| t.constant(m.clone())).collect();
            ins[which] = x;
            gatv2_attention(ins[0], ins[1], ins[2], ins[3], ins[4], edges.clone(), 2)
                .mul(t.constant(w.clone()))
                .sum()
        }
        for which in 0..5 {
            check_grad(all[which].clone(), |x| run(which, x, &all, &edges, &w));
        }
    }

    #[test]
    fn straight_through_passes_identity() {
        let tape = Tape::new();
        let p = tape.input_grad(Mat::from_vec(1, 3, vec![0.2, 0.3, 0.5]));
        let z = p.straight_through(Mat::from_vec(1, 3, vec![0.0, 1.0, 0.0]));
        assert_eq!(z.value().data, vec![0.0, 1.0, 0.0]);
        let w = tape.constant(Mat::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
        let y = z.mul(w).sum();
        let g = tape.backward(y, 0);
        assert_eq!(g.wrt(p).unwrap().data, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn no_grad_tape_keeps_no_ops() {
        let tape = Tape::no_grad();
        let x = tape.input_grad(Mat::scalar(2.0));
        let y = x.sqr();
        assert_eq!(y.item(), 4.0);
        assert!(!tape.nodes.borrow()[y.id].needs_grad);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-12);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        let _ = ChaCha8Rng::seed_from_u64(0).gen::<f64>();
    }
}
