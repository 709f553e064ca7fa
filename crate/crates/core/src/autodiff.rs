//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! Every operation appends a node holding its forward value. [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints into every node that
//! (transitively) depends on a [`Tape::param`] leaf; [`Tape::constant`] leaves
//! and their pure descendants are skipped.
//!
//! The operation set is the one the motion transformer needs: affine maps,
//! row-broadcast bias and gain, tanh-GELU, layer normalization, row softmax,
//! row and column slicing/concatenation, block-restricted multi-head attention
//! and a mean-square reduction.

use std::ops::Range;

use ndarray::{s, Array2, Axis, Zip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `a + 1ᵀb` with `b` a single row
    AddRow(Var, Var),
    /// `a ⊙ 1ᵀb` with `b` a single row
    MulRow(Var, Var),
    Scale(Var, f64),
    /// Keeps tanh(c·(x + a·x³)) for the backward pass.
    Gelu(Var, Array2<f64>),
    /// Row-wise standardization; keeps the normalized output and 1/σ per row.
    LayerNorm(Var, Vec<f64>),
    SoftmaxRows(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    BroadcastRows(Var),
    MeanSquare(Var),
    /// Keeps the softmax probabilities of every (segment, head) pair in loop order.
    Attention(Box<AttentionNode>),
}

#[derive(Debug)]
struct AttentionNode {
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    q_segments: Vec<Range<usize>>,
    kv_segments: Vec<Range<usize>>,
    probs: Vec<Array2<f64>>,
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `tanh(c (x + a x^3))`, written with a single `exp` (libm `tanh` dominated training time).
fn gelu_tanh(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    1.0 - 2.0 / ((2.0 * u).exp() + 1.0)
}

fn gelu_grad(x: f64, t: f64) -> f64 {
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
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

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), g)
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let g = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMulT(a, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape mismatch");
        let value = self.value(a) - self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), g)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row expects a single row");
        let value = zip_rows(self.value(a), self.value(row), |x, r| x + r);
        let g = self.needs(a) || self.needs(row);
        self.push(value, Op::AddRow(a, row), g)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "mul_row expects a single row");
        let value = zip_rows(self.value(a), self.value(row), |x, r| x * r);
        let g = self.needs(a) || self.needs(row);
        self.push(value, Op::MulRow(a, row), g)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        let g = self.needs(a);
        self.push(value, Op::Scale(a, factor), g)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let tanh = x.mapv(gelu_tanh);
        let value = Zip::from(x).and(&tanh).map_collect(|&x, &t| 0.5 * x * (1.0 + t));
        let g = self.needs(a);
        self.push(value, Op::Gelu(a, tanh), g)
    }

    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        let mut rstd = Vec::with_capacity(x.nrows());
        for mut row in out.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * r);
            rstd.push(r);
        }
        let g = self.needs(a);
        self.push(out, Op::LayerNorm(a, rstd), g)
    }

    /// Multi-head scaled dot-product attention in which query rows
    /// `q_segments[i]` attend only to key/value rows `kv_segments[i]`.
    /// Head `h` uses columns `h·d/heads .. (h+1)·d/heads`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        q_segments: &[Range<usize>],
        kv_segments: &[Range<usize>],
    ) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.ncols();
        assert!(
            heads > 0 && d % heads == 0,
            "attention width {d} not divisible by {heads} heads"
        );
        assert_eq!(
            (kv.ncols(), vv.ncols(), kv.nrows()),
            (d, d, vv.nrows()),
            "attention shape mismatch"
        );
        assert_eq!(q_segments.len(), kv_segments.len(), "attention segment count mismatch");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Array2::zeros((qv.nrows(), d));
        let mut probs = Vec::with_capacity(q_segments.len() * heads);
        for (qr, kr) in q_segments.iter().zip(kv_segments) {
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let mut p = qv
                    .slice(s![qr.clone(), cols.clone()])
                    .dot(&kv.slice(s![kr.clone(), cols.clone()]).t());
                for mut row in p.rows_mut() {
                    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x * scale));
                    row.mapv_inplace(|x| (x * scale - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|x| x / sum);
                }
                out.slice_mut(s![qr.clone(), cols.clone()])
                    .assign(&p.dot(&vv.slice(s![kr.clone(), cols])));
                probs.push(p);
            }
        }
        let g = self.needs(q) || self.needs(k) || self.needs(v);
        let node = AttentionNode {
            q,
            k,
            v,
            heads,
            q_segments: q_segments.to_vec(),
            kv_segments: kv_segments.to_vec(),
            probs,
        };
        self.push(out, Op::Attention(Box::new(node)), g)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        let g = self.needs(a);
        self.push(out, Op::SoftmaxRows(a), g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let g = self.needs(a);
        self.push(value, Op::SliceCols(a, start), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols row counts differ");
        let g = parts.iter().any(|p| self.needs(*p));
        self.push(value, Op::ConcatCols(parts.to_vec()), g)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![start..end, ..]).to_owned();
        let g = self.needs(a);
        self.push(value, Op::SliceRows(a, start), g)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows column counts differ");
        let g = parts.iter().any(|p| self.needs(*p));
        self.push(value, Op::ConcatRows(parts.to_vec()), g)
    }

    /// Repeats a single row `n` times.
    pub fn broadcast_rows(&mut self, row: Var, n: usize) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "broadcast_rows expects a single row");
        let value = r.broadcast((n, r.ncols())).expect("row broadcast").to_owned();
        let g = self.needs(row);
        self.push(value, Op::BroadcastRows(row), g)
    }

    /// Mean of squared entries, as a 1×1 node.
    pub fn mean_square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
        let g = self.needs(a);
        self.push(Array2::from_elem((1, 1), value), Op::MeanSquare(a), g)
    }

    /// Adjoints of `output` (which must be 1×1) with respect to every node.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).dim(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones((1, 1)));

        for i in (0..=output.0).rev() {
            let Some(up) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                // leaves keep their adjoint for the caller
                Op::Leaf => grads[i] = Some(up),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, up.dot(&self.value(*b).t()));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, self.value(*a).t().dot(&up));
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, up.dot(self.value(*b)));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, up.t().dot(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, up.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, up);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, -&up);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, up);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(*row) {
                        accumulate(&mut grads, *row, up.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, up);
                    }
                }
                Op::MulRow(a, row) => {
                    if self.needs(*row) {
                        let g = (&up * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *row, g);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, zip_rows(&up, self.value(*row), |d, r| d * r));
                    }
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, up * *f),
                Op::Gelu(a, tanh) => {
                    let mut g = up;
                    Zip::from(&mut g)
                        .and(self.value(*a))
                        .and(tanh)
                        .for_each(|g, &x, &t| *g *= gelu_grad(x, t));
                    accumulate(&mut grads, *a, g);
                }
                Op::LayerNorm(a, rstd) => {
                    // dx = r · (dy − mean(dy) − x̂ · mean(dy ⊙ x̂))
                    let xhat = &node.value;
                    let mut g = up;
                    for ((mut grow, xrow), r) in g.rows_mut().into_iter().zip(xhat.rows()).zip(rstd) {
                        let n = grow.len() as f64;
                        let mean_dy = grow.sum() / n;
                        let mean_dyx = grow.iter().zip(xrow.iter()).map(|(d, x)| d * x).sum::<f64>() / n;
                        Zip::from(&mut grow)
                            .and(&xrow)
                            .for_each(|d, &x| *d = r * (*d - mean_dy - x * mean_dyx));
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut g = up;
                    for (mut grow, yrow) in g.rows_mut().into_iter().zip(y.rows()) {
                        let dot = grow.iter().zip(yrow.iter()).map(|(d, y)| d * y).sum::<f64>();
                        Zip::from(&mut grow).and(&yrow).for_each(|d, &y| *d = y * (*d - dot));
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::SliceCols(a, start) => {
                    let dim = self.value(*a).dim();
                    let target = grads[a.0].get_or_insert_with(|| Array2::zeros(dim));
                    let mut part = target.slice_mut(s![.., *start..*start + up.ncols()]);
                    part += &up;
                }
                Op::SliceRows(a, start) => {
                    let dim = self.value(*a).dim();
                    let target = grads[a.0].get_or_insert_with(|| Array2::zeros(dim));
                    let mut part = target.slice_mut(s![*start..*start + up.nrows(), ..]);
                    part += &up;
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        if self.needs(*p) {
                            accumulate(&mut grads, *p, up.slice(s![offset..offset + h, ..]).to_owned());
                        }
                        offset += h;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if self.needs(*p) {
                            accumulate(&mut grads, *p, up.slice(s![.., offset..offset + w]).to_owned());
                        }
                        offset += w;
                    }
                }
                Op::BroadcastRows(row) => {
                    accumulate(&mut grads, *row, up.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::Attention(att) => {
                    let (dq, dk, dv) = self.attention_grads(att, &up);
                    for (var, g) in [(att.q, dq), (att.k, dk), (att.v, dv)] {
                        if self.needs(var) {
                            accumulate(&mut grads, var, g);
                        }
                    }
                }
                Op::MeanSquare(a) => {
                    let x = self.value(*a);
                    let f = 2.0 * up[[0, 0]] / x.len().max(1) as f64;
                    accumulate(&mut grads, *a, x * f);
                }
            }
        }
        Gradients { grads }
    }
}

impl Tape {
    fn attention_grads(&self, att: &AttentionNode, up: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let (qv, kv, vv) = (self.value(att.q), self.value(att.k), self.value(att.v));
        let dh = qv.ncols() / att.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros(qv.dim());
        let mut dk = Array2::zeros(kv.dim());
        let mut dv = Array2::zeros(vv.dim());
        let pairs = att.q_segments.iter().zip(&att.kv_segments);
        let blocks = pairs.flat_map(|seg| (0..att.heads).map(move |h| (seg, h)));
        for (((qr, kr), h), p) in blocks.zip(&att.probs) {
            let cols = h * dh..(h + 1) * dh;
            let d_out = up.slice(s![qr.clone(), cols.clone()]);
            let (qh, kh, vh) = (
                qv.slice(s![qr.clone(), cols.clone()]),
                kv.slice(s![kr.clone(), cols.clone()]),
                vv.slice(s![kr.clone(), cols.clone()]),
            );
            let mut dv_h = dv.slice_mut(s![kr.clone(), cols.clone()]);
            dv_h += &p.t().dot(&d_out);
            // softmax backward, then the score scale
            let mut ds = d_out.dot(&vh.t());
            for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot: f64 = drow.iter().zip(prow).map(|(d, p)| d * p).sum();
                Zip::from(&mut drow)
                    .and(&prow)
                    .for_each(|d, &p| *d = p * (*d - dot) * scale);
            }
            let mut dq_h = dq.slice_mut(s![qr.clone(), cols.clone()]);
            dq_h += &ds.dot(&kh);
            let mut dk_h = dk.slice_mut(s![kr.clone(), cols]);
            dk_h += &ds.t().dot(&qh);
        }
        (dq, dk, dv)
    }
}

/// `f(a[i, j], row[0, j])` for every element, over contiguous rows.
fn zip_rows(a: &Array2<f64>, row: &Array2<f64>, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    let mut out = a.as_standard_layout().into_owned();
    let r = row.as_standard_layout();
    let r = r.as_slice().expect("standard layout");
    if r.is_empty() {
        return out;
    }
    for chunk in out.as_slice_mut().expect("standard layout").chunks_exact_mut(r.len()) {
        for (x, &b) in chunk.iter_mut().zip(r) {
            *x = f(*x, b);
        }
    }
    out
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Adjoints produced by [`Tape::backward`]; only parameter leaves are retained.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
