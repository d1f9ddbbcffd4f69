//! Reverse-mode tape. Nodes are appended in evaluation order, so walking the
//! vector backwards is a valid topological order.

use super::{ParamId, ParamStore, Real};
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// `(input, output, output_grad) -> input_grad` for [`Tape::custom_unary`].
pub type CustomBackward<T> = Arc<dyn Fn(&[T], &[T], &[T]) -> Vec<T> + Send + Sync>;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddRow { x: Var, row: Var },
    Scale(Var, T),
    Gelu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    SoftmaxRows(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    GatherRows { x: Var, idx: Vec<usize> },
    Assemble { visible: Var, fill: Var, idx: Vec<usize> },
    MeanRows(Var),
    Sum(Var),
    Mse { pred: Var, target: Vec<T> },
    BceLogit { logit: Var, label: T, weight: T },
    Custom { x: Var, backward: CustomBackward<T> },
}

struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    params: HashMap<ParamId, Vec<T>>,
    nodes: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.params.get(&id).map(Vec::as_slice)
    }

    /// Gradient of the loss w.r.t. a leaf; zeros if unreachable.
    pub fn wrt(&self, v: Var, len: usize) -> Vec<T> {
        self.nodes
            .get(v.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![T::zero(); len])
    }
}

fn gelu<T: Real>(x: T) -> T {
    let (c, a, half) = (T::c(GELU_C), T::c(GELU_A), T::c(0.5));
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let (c, a, half) = (T::c(GELU_C), T::c(GELU_A), T::c(0.5));
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::c(3.0) * a * x * x)
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { rows, cols, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> T {
        let n = &self.nodes[v.0];
        assert_eq!((n.rows, n.cols), (1, 1), "not a scalar node");
        n.value[0]
    }

    /// Input or constant block. Gradients w.r.t. leaves are available through
    /// [`Gradients::wrt`].
    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Var {
        assert_eq!(data.len(), rows * cols, "leaf data does not match {rows}x{cols}");
        self.push(rows, cols, data, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let t = store.get(id);
        let (rows, cols) = t.dims2();
        self.push(rows, cols, t.data.clone(), Op::Param(id))
    }

    fn gemm_into(&self, a: Var, b: Var, trans_b: bool) -> (usize, usize, Vec<T>) {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        let (m, k) = (na.rows, na.cols);
        let (kb, n, rsb, csb) = if trans_b {
            (nb.cols, nb.rows, 1, nb.cols as isize)
        } else {
            (nb.rows, nb.cols, nb.cols as isize, 1)
        };
        assert_eq!(k, kb, "matmul inner dims {m}x{k} · {kb}x{n}");
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, T::one(), &na.value, k as isize, 1, &nb.value, rsb, csb, T::zero(), &mut out);
        (m, n, out)
    }

    /// `a · b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, n, out) = self.gemm_into(a, b, false);
        self.push(m, n, out, Op::MatMul { a, b, trans_b: false })
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (m, n, out) = self.gemm_into(a, b, true);
        self.push(m, n, out, Op::MatMul { a, b, trans_b: true })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        self.push(r, c, out, Op::Add(a, b))
    }

    /// Adds a `1×n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(self.shape(row), (1, c), "add_row expects a 1x{c} row");
        let bias = self.value(row);
        let out = self
            .value(x)
            .chunks(c)
            .flat_map(|xr| xr.iter().zip(bias).map(|(&a, &b)| a + b))
            .collect();
        self.push(r, c, out, Op::AddRow { x, row })
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v * s).collect();
        self.push(r, c, out, Op::Scale(x, s))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| gelu(v)).collect();
        self.push(r, c, out, Op::Gelu(x))
    }

    /// Row-wise layer normalization with `1×n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(self.shape(gain), (1, c));
        assert_eq!(self.shape(bias), (1, c));
        let (g, b) = (self.value(gain), self.value(bias));
        let n = T::c(c as f64);
        let mut xhat = Vec::with_capacity(r * c);
        let mut rstd = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(r * c);
        for row in self.value(x).chunks(c) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let rs = T::one() / (var + T::c(LN_EPS)).sqrt();
            rstd.push(rs);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * rs;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        self.push(r, c, out, Op::LayerNorm { x, gain, bias, xhat, rstd })
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let mut out = Vec::with_capacity(r * c);
        for row in self.value(x).chunks(c) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let start = out.len();
            let mut total = T::zero();
            for &v in row {
                let e = (v - max).exp();
                total += e;
                out.push(e);
            }
            for e in &mut out[start..] {
                *e = *e / total;
            }
        }
        self.push(r, c, out, Op::SoftmaxRows(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(x);
        assert!(start + len <= c, "slice_cols out of range");
        let out = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        self.push(r, len, out, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let r = self.shape(parts[0]).0;
        assert!(parts.iter().all(|&p| self.shape(p).0 == r), "concat_cols row mismatch");
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        self.push(r, total, out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let (r, c) = self.shape(x);
        let v = self.value(x);
        let out = idx
            .iter()
            .flat_map(|&i| {
                assert!(i < r, "gather_rows index {i} >= {r}");
                v[i * c..(i + 1) * c].iter().copied()
            })
            .collect();
        self.push(idx.len(), c, out, Op::GatherRows { x, idx: idx.to_vec() })
    }

    /// Builds an `n×d` block whose rows at `idx` come from `visible` (in order)
    /// and whose other rows are copies of the `1×d` `fill` row.
    pub fn assemble_rows(&mut self, visible: Var, fill: Var, idx: &[usize], n: usize) -> Var {
        let (nv, d) = self.shape(visible);
        assert_eq!(nv, idx.len(), "assemble_rows: one index per visible row");
        assert_eq!(self.shape(fill), (1, d));
        let mut out: Vec<T> = self.value(fill).iter().copied().cycle().take(n * d).collect();
        let vis = self.value(visible);
        for (k, &i) in idx.iter().enumerate() {
            assert!(i < n, "assemble_rows index out of range");
            out[i * d..(i + 1) * d].copy_from_slice(&vis[k * d..(k + 1) * d]);
        }
        self.push(n, d, out, Op::Assemble { visible, fill, idx: idx.to_vec() })
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let mut out = vec![T::zero(); c];
        for row in self.value(x).chunks(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = T::one() / T::c(r as f64);
        out.iter_mut().for_each(|o| *o *= inv);
        self.push(1, c, out, Op::MeanRows(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        self.push(1, 1, vec![s], Op::Sum(x))
    }

    /// Mean squared error against a constant target of the same shape.
    pub fn mse(&mut self, pred: Var, target: Vec<T>) -> Var {
        let p = self.value(pred);
        assert_eq!(p.len(), target.len(), "mse shape mismatch");
        let n = T::c(p.len().max(1) as f64);
        let loss = p.iter().zip(&target).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / n;
        self.push(1, 1, vec![loss], Op::Mse { pred, target })
    }

    /// `weight * BCE(sigmoid(logit), label)` in the overflow-free form
    /// `max(z, 0) - z·y + ln(1 + e^{-|z|})`.
    pub fn bce_logit(&mut self, logit: Var, label: T, weight: T) -> Var {
        let z = self.scalar(logit);
        let loss = weight * bce_logit_value(z, label);
        self.push(1, 1, vec![loss], Op::BceLogit { logit, label, weight })
    }

    /// Elementwise op with a caller-supplied backward rule.
    pub fn custom_unary(&mut self, x: Var, forward: impl Fn(T) -> T, backward: CustomBackward<T>) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| forward(v)).collect();
        self.push(r, c, out, Op::Custom { x, backward })
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut params: HashMap<ParamId, Vec<T>> = HashMap::new();
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let parents_ok = |v: Var| assert!(v.0 < i, "tape cycle at node {i}");
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Param(id) => match params.get_mut(id) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => {
                        params.insert(*id, g.clone());
                    }
                },
                Op::MatMul { a, b, trans_b } => {
                    parents_ok(*a);
                    parents_ok(*b);
                    let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
                    let (m, k, n) = (na.rows, na.cols, node.cols);
                    let mut ga = vec![T::zero(); m * k];
                    let mut gb = vec![T::zero(); nb.rows * nb.cols];
                    if *trans_b {
                        // out = a·bᵀ, b is n×k
                        T::gemm(m, n, k, T::one(), &g, n as isize, 1, &nb.value, k as isize, 1, T::zero(), &mut ga);
                        T::gemm(n, m, k, T::one(), &g, 1, n as isize, &na.value, k as isize, 1, T::zero(), &mut gb);
                    } else {
                        // out = a·b, b is k×n
                        T::gemm(m, n, k, T::one(), &g, n as isize, 1, &nb.value, 1, n as isize, T::zero(), &mut ga);
                        T::gemm(k, m, n, T::one(), &na.value, 1, k as isize, &g, n as isize, 1, T::zero(), &mut gb);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    parents_ok(*a);
                    parents_ok(*b);
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow { x, row } => {
                    let c = node.cols;
                    let mut gr = vec![T::zero(); c];
                    for chunk in g.chunks(c) {
                        gr.iter_mut().zip(chunk).for_each(|(a, &b)| *a += b);
                    }
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *x, g);
                }
                Op::Scale(x, s) => {
                    accumulate(&mut grads, *x, g.iter().map(|&v| v * *s).collect());
                }
                Op::Gelu(x) => {
                    let xv = &self.nodes[x.0].value;
                    accumulate(&mut grads, *x, g.iter().zip(xv).map(|(&d, &v)| d * gelu_grad(v)).collect());
                }
                Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                    let c = node.cols;
                    let gv = &self.nodes[gain.0].value;
                    let n = T::c(c as f64);
                    let mut dx = Vec::with_capacity(g.len());
                    let mut dg = vec![T::zero(); c];
                    let mut db = vec![T::zero(); c];
                    for (r, (gr, hr)) in g.chunks(c).zip(xhat.chunks(c)).enumerate() {
                        let mut sum_d = T::zero();
                        let mut sum_dh = T::zero();
                        for j in 0..c {
                            let d = gr[j] * gv[j];
                            sum_d += d;
                            sum_dh += d * hr[j];
                            dg[j] += gr[j] * hr[j];
                            db[j] += gr[j];
                        }
                        let (md, mdh) = (sum_d / n, sum_dh / n);
                        for j in 0..c {
                            dx.push(rstd[r] * (gr[j] * gv[j] - md - hr[j] * mdh));
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gain, dg);
                    accumulate(&mut grads, *bias, db);
                }
                Op::SoftmaxRows(x) => {
                    let c = node.cols;
                    let mut dx = Vec::with_capacity(g.len());
                    for (gr, yr) in g.chunks(c).zip(node.value.chunks(c)) {
                        let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        dx.extend(gr.iter().zip(yr).map(|(&d, &y)| y * (d - dot)));
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::SliceCols { x, start } => {
                    let src = &self.nodes[x.0];
                    let mut dx = vec![T::zero(); src.rows * src.cols];
                    for (r, gr) in g.chunks(node.cols).enumerate() {
                        dx[r * src.cols + start..r * src.cols + start + node.cols].copy_from_slice(gr);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.nodes[p.0].cols;
                        let gp = g
                            .chunks(node.cols)
                            .flat_map(|row| row[offset..offset + c].iter().copied())
                            .collect();
                        accumulate(&mut grads, p, gp);
                        offset += c;
                    }
                }
                Op::GatherRows { x, idx } => {
                    let src = &self.nodes[x.0];
                    let c = src.cols;
                    let mut dx = vec![T::zero(); src.rows * c];
                    for (k, &i) in idx.iter().enumerate() {
                        for j in 0..c {
                            dx[i * c + j] += g[k * c + j];
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Assemble { visible, fill, idx } => {
                    let d = node.cols;
                    let mut is_vis = vec![false; node.rows];
                    let mut dv = Vec::with_capacity(idx.len() * d);
                    for &i in idx {
                        is_vis[i] = true;
                        dv.extend_from_slice(&g[i * d..(i + 1) * d]);
                    }
                    let mut df = vec![T::zero(); d];
                    for (r, gr) in g.chunks(d).enumerate() {
                        if !is_vis[r] {
                            df.iter_mut().zip(gr).for_each(|(a, &b)| *a += b);
                        }
                    }
                    accumulate(&mut grads, *visible, dv);
                    accumulate(&mut grads, *fill, df);
                }
                Op::MeanRows(x) => {
                    let rows = self.nodes[x.0].rows;
                    let inv = T::one() / T::c(rows as f64);
                    let row: Vec<T> = g.iter().map(|&v| v * inv).collect();
                    let dx = row.iter().copied().cycle().take(rows * node.cols).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sum(x) => {
                    let len = self.nodes[x.0].value.len();
                    accumulate(&mut grads, *x, vec![g[0]; len]);
                }
                Op::Mse { pred, target } => {
                    let p = &self.nodes[pred.0].value;
                    let k = T::c(2.0) * g[0] / T::c(p.len().max(1) as f64);
                    accumulate(&mut grads, *pred, p.iter().zip(target).map(|(&a, &b)| k * (a - b)).collect());
                }
                Op::BceLogit { logit, label, weight } => {
                    let z = self.nodes[logit.0].value[0];
                    let s = T::one() / (T::one() + (-z).exp());
                    accumulate(&mut grads, *logit, vec![g[0] * *weight * (s - *label)]);
                }
                Op::Custom { x, backward } => {
                    let dx = backward(&self.nodes[x.0].value, &node.value, &g);
                    accumulate(&mut grads, *x, dx);
                }
            }
        }
        Gradients { params, nodes: grads }
    }
}

/// Numerically stable binary cross-entropy on a logit.
pub fn bce_logit_value<T: Real>(z: T, label: T) -> T {
    z.max(T::zero()) - z * label + (T::one() + (-z.abs()).exp()).ln()
}
