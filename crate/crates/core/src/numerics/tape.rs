use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{matmul_nt_raw, matmul_raw, matmul_tn_raw};
use super::{NumericsError, ParamStore, Tensor2};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor2),
    AddRow(Var, Var),
    AddOuter(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Exp(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogSumExpRows(Var, Vec<bool>),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    ConcatCols(Vec<Var>),
    EmbedBag(Var, Vec<Vec<usize>>),
    Bce {
        probs: Var,
        entries: Vec<(usize, f64)>,
    },
    SqDist(Var, Tensor2),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

/// Lower clamp applied to probabilities before taking logs in [`Tape::bce`].
pub const PROB_EPS: f64 = 1e-12;

/// Records a computation as it is evaluated so that gradients can be
/// obtained with a single reverse sweep.
///
/// Nodes are appended in evaluation order, which is a topological order by
/// construction: every op only refers to earlier handles.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
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

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives a gradient.
    pub fn leaf(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers the named parameter as a gradient leaf. Repeated calls with
    /// the same name return the same handle so gradients accumulate.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NumericsError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))?
            .clone();
        let v = self.leaf(value);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn param_vars(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(NumericsError::shape("matmul", av.shape(), bv.shape()));
        }
        let out = matmul_raw(av, bv);
        Ok(self.push(out, Op::MatMul(a, b), self.rg(&[a, b])))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(NumericsError::shape("matmul_nt", av.shape(), bv.shape()));
        }
        let out = matmul_nt_raw(av, bv);
        Ok(self.push(out, Op::MatMulNt(a, b), self.rg(&[a, b])))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(NumericsError::shape(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor2::from_raw(av.rows(), av.cols(), data);
        Ok(self.push(out, op, self.rg(&[a, b])))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor2) -> Result<Var, NumericsError> {
        let av = self.value(a);
        if av.shape() != c.shape() {
            return Err(NumericsError::shape("mul_const", av.shape(), c.shape()));
        }
        let data = av.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        let out = Tensor2::from_raw(av.rows(), av.cols(), data);
        Ok(self.push(out, Op::MulConst(a, c), self.rg(&[a])))
    }

    /// Adds a `1 x m` row to every row of an `n x m` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(NumericsError::shape("add_row", av.shape(), rv.shape()));
        }
        let out = Tensor2::from_fn(av.rows(), av.cols(), |r, c| av.get(r, c) + rv.get(0, c));
        Ok(self.push(out, Op::AddRow(a, row), self.rg(&[a, row])))
    }

    /// `out[i][j] = col[i] + row[j]` for an `n x 1` column and a `1 x m` row.
    pub fn add_outer(&mut self, col: Var, row: Var) -> Result<Var, NumericsError> {
        let (cv, rv) = (self.value(col), self.value(row));
        if cv.cols() != 1 || rv.rows() != 1 {
            return Err(NumericsError::shape("add_outer", cv.shape(), rv.shape()));
        }
        let out = Tensor2::from_fn(cv.rows(), rv.cols(), |r, c| cv.get(r, 0) + rv.get(0, c));
        Ok(self.push(out, Op::AddOuter(col, row), self.rg(&[col, row])))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, libm::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, elu, Op::Elu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, libm::exp, Op::Exp(a))
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a), None);
        let rg = self.rg(&[a]);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    /// Row-wise softmax restricted to entries where `mask` is true. Masked
    /// entries come out as exactly zero. Every row must keep at least one entry.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var, NumericsError> {
        let av = self.value(a);
        if mask.len() != av.len() {
            return Err(NumericsError::shape("masked_softmax_rows", av.shape(), (mask.len(), 1)));
        }
        for r in 0..av.rows() {
            if !mask[r * av.cols()..(r + 1) * av.cols()].iter().any(|&m| m) {
                return Err(NumericsError::EmptyRow { row: r });
            }
        }
        let out = softmax_rows(av, Some(mask));
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::SoftmaxRows(a), rg))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        for r in 0..av.rows() {
            let lse = log_sum_exp(av.row(r).iter().copied());
            for c in 0..av.cols() {
                out.set(r, c, av.get(r, c) - lse);
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::LogSoftmaxRows(a), rg)
    }

    /// Per-row `log(sum(exp(x)))` over entries where `mask` is true; `n x 1`.
    pub fn log_sum_exp_rows(&mut self, a: Var, mask: Vec<bool>) -> Result<Var, NumericsError> {
        let av = self.value(a);
        if mask.len() != av.len() {
            return Err(NumericsError::shape("log_sum_exp_rows", av.shape(), (mask.len(), 1)));
        }
        let mut out = Vec::with_capacity(av.rows());
        for r in 0..av.rows() {
            let m = &mask[r * av.cols()..(r + 1) * av.cols()];
            if !m.iter().any(|&x| x) {
                return Err(NumericsError::EmptyRow { row: r });
            }
            out.push(log_sum_exp(
                av.row(r).iter().zip(m).filter(|(_, &k)| k).map(|(v, _)| *v),
            ));
        }
        let out = Tensor2::from_raw(av.rows(), 1, out);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::LogSumExpRows(a, mask), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor2::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sums over rows, producing a `1 x cols` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = vec![0.0; av.cols()];
        for r in 0..av.rows() {
            for (o, v) in out.iter_mut().zip(av.row(r)) {
                *o += v;
            }
        }
        let out = Tensor2::from_raw(1, av.cols(), out);
        let rg = self.rg(&[a]);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Mean over rows, producing a `1 x cols` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.value(a).rows().max(1) as f64;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / n)
    }

    /// Sums over columns, producing a `rows x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out: Vec<f64> = (0..av.rows()).map(|r| av.row(r).iter().sum()).collect();
        let out = Tensor2::from_raw(av.rows(), 1, out);
        let rg = self.rg(&[a]);
        self.push(out, Op::SumCols(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let Some(&first) = parts.first() else {
            return Err(NumericsError::Empty("concat_cols"));
        };
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(NumericsError::shape("concat_cols", (rows, cols), pv.shape()));
            }
            cols += pv.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor2::from_raw(rows, cols, data);
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Mean-pools rows of `table` for each bag of row indices. An empty bag
    /// pools to a zero row.
    pub fn embed_bag(&mut self, table: Var, bags: Vec<Vec<usize>>) -> Result<Var, NumericsError> {
        let tv = self.value(table);
        let d = tv.cols();
        let mut data = vec![0.0; bags.len() * d];
        for (b, bag) in bags.iter().enumerate() {
            if bag.is_empty() {
                continue;
            }
            let inv = 1.0 / bag.len() as f64;
            let out = &mut data[b * d..(b + 1) * d];
            for &idx in bag {
                if idx >= tv.rows() {
                    return Err(NumericsError::IndexOutOfRange {
                        index: idx,
                        len: tv.rows(),
                    });
                }
                for (o, v) in out.iter_mut().zip(tv.row(idx)) {
                    *o += v * inv;
                }
            }
        }
        let out = Tensor2::from_raw(bags.len(), d, data);
        let rg = self.rg(&[table]);
        Ok(self.push(out, Op::EmbedBag(table, bags), rg))
    }

    /// Mean binary cross-entropy over selected entries of a probability
    /// tensor. `entries` holds `(flat index, target)` pairs. Probabilities are
    /// clamped to `[PROB_EPS, 1 - PROB_EPS]` before the logs.
    pub fn bce(&mut self, probs: Var, entries: Vec<(usize, f64)>) -> Result<Var, NumericsError> {
        let pv = self.value(probs);
        if entries.is_empty() {
            return Err(NumericsError::Empty("bce"));
        }
        let mut total = 0.0;
        for &(j, y) in &entries {
            if j >= pv.len() {
                return Err(NumericsError::IndexOutOfRange {
                    index: j,
                    len: pv.len(),
                });
            }
            let p = clamp_prob(pv.data()[j]);
            total += y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p);
        }
        let out = Tensor2::scalar(-total / entries.len() as f64);
        let rg = self.rg(&[probs]);
        Ok(self.push(out, Op::Bce { probs, entries }, rg))
    }

    /// [`Tape::bce`] over a `1 x n` row restricted to `columns`.
    pub fn bce_columns(&mut self, probs: Var, columns: &[usize], targets: &[f64]) -> Result<Var, NumericsError> {
        let pv = self.value(probs);
        if pv.rows() != 1 || columns.len() != targets.len() {
            return Err(NumericsError::shape("bce_columns", pv.shape(), (columns.len(), targets.len())));
        }
        let entries = columns.iter().copied().zip(targets.iter().copied()).collect();
        self.bce(probs, entries)
    }

    /// Squared Frobenius distance to a constant target.
    pub fn sq_dist(&mut self, a: Var, target: Tensor2) -> Result<Var, NumericsError> {
        let av = self.value(a);
        if av.shape() != target.shape() {
            return Err(NumericsError::shape("sq_dist", av.shape(), target.shape()));
        }
        let s = av
            .data()
            .iter()
            .zip(target.data())
            .map(|(x, t)| (x - t) * (x - t))
            .sum();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor2::scalar(s), Op::SqDist(a, target), rg))
    }

    /// Reverse sweep from a scalar loss.
    ///
    /// Every gradient-carrying leaf gets an entry, zero if the loss does not
    /// depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(NumericsError::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        if !lv.is_finite() {
            return Err(NumericsError::NonFinite { index: 0 });
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                let (r, c) = node.value.shape();
                grads[i] = Some(Tensor2::zeros(r, c));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor2, grads: &mut [Option<Tensor2>]) {
        if let Op::EmbedBag(table, bags) = &node.op {
            if self.nodes[table.0].requires_grad {
                let (r, c) = self.shape(*table);
                let out = grads[table.0].get_or_insert_with(|| Tensor2::zeros(r, c));
                for (b, bag) in bags.iter().enumerate() {
                    if bag.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / bag.len() as f64;
                    let grow = g.row(b);
                    for &idx in bag {
                        let dst = &mut out.data_mut()[idx * c..(idx + 1) * c];
                        for (o, gv) in dst.iter_mut().zip(grow) {
                            *o += gv * inv;
                        }
                    }
                }
            }
            return;
        }
        let y = &node.value;
        let mut acc = |v: Var, t: Tensor2| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, matmul_nt_raw(g, bv));
                acc(*b, matmul_tn_raw(av, g));
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, matmul_raw(g, bv));
                acc(*b, matmul_tn_raw(g, av));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, hadamard(g, bv));
                acc(*b, hadamard(g, av));
            }
            Op::MulConst(a, c) => acc(*a, hadamard(g, c)),
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, g.column_means().map(|x| x * g.rows() as f64));
            }
            Op::AddOuter(col, row) => {
                let gc = Tensor2::from_fn(g.rows(), 1, |r, _| g.row(r).iter().sum());
                acc(*col, gc);
                acc(*row, g.column_means().map(|x| x * g.rows() as f64));
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::Tanh(a) => acc(*a, zip_map(g, y, |gi, yi| gi * (1.0 - yi * yi))),
            Op::Sigmoid(a) => acc(*a, zip_map(g, y, |gi, yi| gi * yi * (1.0 - yi))),
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                acc(*a, zip_map(g, x, |gi, xi| if xi > 0.0 { gi } else { gi * slope }));
            }
            Op::Elu(a) => {
                let x = self.value(*a);
                let d = zip_map(x, y, |xi, yi| if xi > 0.0 { 1.0 } else { yi + 1.0 });
                acc(*a, hadamard(g, &d));
            }
            Op::Exp(a) => acc(*a, hadamard(g, y)),
            Op::SoftmaxRows(a) => {
                let mut out = Tensor2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(x, z)| x * z).sum();
                    for c in 0..y.cols() {
                        out.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                acc(*a, out);
            }
            Op::LogSoftmaxRows(a) => {
                let mut out = Tensor2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let gs: f64 = g.row(r).iter().sum();
                    for c in 0..y.cols() {
                        out.set(r, c, g.get(r, c) - libm::exp(y.get(r, c)) * gs);
                    }
                }
                acc(*a, out);
            }
            Op::LogSumExpRows(a, mask) => {
                let x = self.value(*a);
                let mut out = Tensor2::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let lse = y.get(r, 0);
                    for c in 0..x.cols() {
                        if mask[r * x.cols() + c] {
                            out.set(r, c, g.get(r, 0) * libm::exp(x.get(r, c) - lse));
                        }
                    }
                }
                acc(*a, out);
            }
            Op::SumAll(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Tensor2::filled(r, c, g.get(0, 0)));
            }
            Op::SumRows(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Tensor2::from_fn(r, c, |_, j| g.get(0, j)));
            }
            Op::SumCols(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Tensor2::from_fn(r, c, |i, _| g.get(i, 0)));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (r, c) = self.shape(*p);
                    acc(*p, Tensor2::from_fn(r, c, |i, j| g.get(i, offset + j)));
                    offset += c;
                }
            }
            Op::EmbedBag(..) => unreachable!("handled in place"),
            Op::Bce { probs, entries } => {
                let pv = self.value(*probs);
                let k = entries.len() as f64;
                let mut out = Tensor2::zeros(pv.rows(), pv.cols());
                let g0 = g.get(0, 0);
                for &(j, t) in entries {
                    let p = pv.data()[j];
                    if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
                        continue;
                    }
                    out.data_mut()[j] += -g0 * (t / p - (1.0 - t) / (1.0 - p)) / k;
                }
                acc(*probs, out);
            }
            Op::SqDist(a, target) => {
                let x = self.value(*a);
                let g0 = g.get(0, 0);
                acc(*a, zip_map(x, target, |xi, ti| 2.0 * (xi - ti) * g0));
            }
        }
    }
}

/// Result of [`Tape::backward`]: one gradient per reached node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of all parameters registered on `tape`, keyed by name.
    pub fn params(&self, tape: &Tape) -> BTreeMap<String, Tensor2> {
        tape.param_vars()
            .iter()
            .filter_map(|(name, v)| self.get(*v).map(|g| (name.clone(), g.clone())))
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        libm::expm1(x)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(xs.map(|x| libm::exp(x - m)).sum::<f64>())
}

fn softmax_rows(a: &Tensor2, mask: Option<&[bool]>) -> Tensor2 {
    let (rows, cols) = a.shape();
    let mut out = Tensor2::zeros(rows, cols);
    for r in 0..rows {
        let keep = |c: usize| mask.map_or(true, |m| m[r * cols + c]);
        let m = (0..cols)
            .filter(|&c| keep(c))
            .map(|c| a.get(r, c))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for c in 0..cols {
            if keep(c) {
                let e = libm::exp(a.get(r, c) - m);
                out.set(r, c, e);
                z += e;
            }
        }
        for c in 0..cols {
            out.set(r, c, out.get(r, c) / z);
        }
    }
    out
}

fn hadamard(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map(a: &Tensor2, b: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor2::from_raw(a.rows(), a.cols(), data)
}
