//! Per-step reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass together with its
//! output value and whatever it needs for its vector-Jacobian product.
//! [`Tape::backward`] replays the records in strict reverse order and returns
//! one gradient buffer per parameter, shaped like the parameter.
//!
//! Nodes that do not depend on any parameter are marked as not requiring a
//! gradient and are skipped during the backward pass.

use std::sync::Arc;

use rand::Rng;

use super::dense::{gemm, gemm_new, DenseMatrix, Trans};
use super::params::{ParamId, ParamStore};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    AddRowVector(Var, Var),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    RowSoftmax(Var),
    Column(Var, usize),
    Scale(Var, f64),
    ScaleRows {
        x: Var,
        weights: Var,
        offset: f64,
    },
    RelationalConv {
        adjacencies: Arc<[SparseMatrix]>,
        input: Var,
        weights: Vec<Var>,
        attention: Var,
        /// `[A_1 H | .. | A_R H]`, kept for the weight gradients.
        aggregated: Arc<DenseMatrix>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: DenseMatrix,
    },
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    param: Option<ParamId>,
    needs_grad: bool,
}

#[derive(Debug, Default)]
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

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: DenseMatrix, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite output from {op:?}");
        self.nodes.push(Node {
            value,
            op,
            param: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId, value: DenseMatrix) -> Var {
        let v = self.push(value, Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Records a leaf for every parameter of `store`, indexed by `ParamId`.
    pub fn params(&mut self, store: &ParamStore) -> Vec<Var> {
        store
            .ids()
            .map(|id| self.param(id, store.get(id).clone()))
            .collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), needs))
    }

    /// Sparse constant times a dense value; gradient flows only into `b`.
    pub fn sparse_matmul(&mut self, a: Arc<SparseMatrix>, b: Var) -> Result<Var> {
        let value = a.matmul_dense(self.value(b))?;
        let needs = self.needs(b);
        Ok(self.push(value, Op::SparseMatMul(a, b), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    /// Adds a `1 x c` row vector to every row of `x`.
    pub fn add_row_vector(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xm, bm) = (self.value(x), self.value(bias));
        if bm.rows() != 1 || bm.cols() != xm.cols() {
            return Err(Error::shape_pair("bias add", xm.shape(), bm.shape()));
        }
        let mut value = xm.clone();
        for i in 0..value.rows() {
            for (o, b) in value.row_mut(i).iter_mut().zip(bm.as_slice()) {
                *o += b;
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(value, Op::AddRowVector(x, bias), needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let needs = self.needs(x);
        self.push(value, Op::Relu(x), needs)
    }

    /// Inverted dropout. With `rng == None` (evaluation) or `rate == 0` this
    /// returns `x` unchanged and records nothing.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        rng: Option<&mut R>,
    ) -> Result<Var> {
        check_dropout_rate(rate)?;
        let Some(rng) = rng else { return Ok(x) };
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let xm = self.value(x);
        let mask: Vec<f64> = (0..xm.len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let data = xm
            .as_slice()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let value = DenseMatrix::from_vec(xm.rows(), xm.cols(), data)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Dropout(x, mask), needs))
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let value = row_softmax(self.value(x))?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::RowSoftmax(x), needs))
    }

    /// Column `j` of `x` as an `n x 1` matrix.
    pub fn column(&mut self, x: Var, j: usize) -> Result<Var> {
        let xm = self.value(x);
        if j >= xm.cols() {
            return Err(Error::Shape(format!(
                "column {j} of a {}x{} matrix",
                xm.rows(),
                xm.cols()
            )));
        }
        let value = DenseMatrix::from_vec(xm.rows(), 1, xm.column(j))?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Column(x, j), needs))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    /// Elementwise `s * x + shift`.
    pub fn affine(&mut self, x: Var, s: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| s * v + shift);
        let needs = self.needs(x);
        self.push(value, Op::Scale(x, s), needs)
    }

    /// Row `i` of the result is `(weights[i] + offset) * x[i, :]`.
    pub fn scale_rows(&mut self, x: Var, weights: Var, offset: f64) -> Result<Var> {
        let (xm, wm) = (self.value(x), self.value(weights));
        if wm.cols() != 1 || wm.rows() != xm.rows() {
            return Err(Error::shape_pair("row scaling", xm.shape(), wm.shape()));
        }
        let mut value = xm.clone();
        for i in 0..value.rows() {
            let s = wm.get(i, 0) + offset;
            value.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        let needs = self.needs(x) || self.needs(weights);
        Ok(self.push(value, Op::ScaleRows { x, weights, offset }, needs))
    }

    /// `sum_r attention[r] * A_r * input * W_r`, with `attention` a `1 x R` row.
    pub fn relational_conv(
        &mut self,
        adjacencies: Arc<[SparseMatrix]>,
        input: Var,
        weights: &[Var],
        attention: Var,
    ) -> Result<Var> {
        let aggregated = Arc::new(aggregate_relations(&adjacencies, self.value(input))?);
        self.relational_conv_aggregated(adjacencies, input, aggregated, weights, attention)
    }

    /// [`Tape::relational_conv`] with `[A_1 H | .. | A_R H]` supplied by the
    /// caller, so a constant input is aggregated only once.
    pub fn relational_conv_aggregated(
        &mut self,
        adjacencies: Arc<[SparseMatrix]>,
        input: Var,
        aggregated: Arc<DenseMatrix>,
        weights: &[Var],
        attention: Var,
    ) -> Result<Var> {
        let h = self.value(input);
        let att = self.value(attention);
        let r = adjacencies.len();
        if weights.len() != r || att.shape() != (1, r) {
            return Err(Error::Shape(format!(
                "relational conv: {r} adjacencies, {} weights, attention {}x{}",
                weights.len(),
                att.rows(),
                att.cols()
            )));
        }
        let Some(w0) = weights.first() else {
            return Err(Error::Shape("relational conv without relations".into()));
        };
        let (d_in, d_out) = self.value(*w0).shape();
        for (k, w) in weights.iter().enumerate() {
            if self.value(*w).shape() != (d_in, d_out) {
                return Err(Error::shape_pair(
                    "relation weight",
                    (d_in, d_out),
                    self.value(*w).shape(),
                ));
            }
            if adjacencies[k].cols() != h.rows() || adjacencies[k].rows() != h.rows() {
                return Err(Error::shape_pair(
                    "relation adjacency",
                    adjacencies[k].shape(),
                    h.shape(),
                ));
            }
        }
        if h.cols() != d_in {
            return Err(Error::shape_pair(
                "relational conv input",
                h.shape(),
                (d_in, d_out),
            ));
        }
        let n = h.rows();
        if aggregated.shape() != (n, r * d_in) {
            return Err(Error::shape_pair(
                "aggregated relations",
                aggregated.shape(),
                (n, r * d_in),
            ));
        }
        let stacked = self.stacked_weights(weights, att, false);
        let mut out = DenseMatrix::zeros(n, d_out);
        gemm(
            1.0,
            &aggregated,
            Trans::No,
            &stacked,
            Trans::No,
            0.0,
            &mut out,
        )?;
        let needs =
            self.needs(input) || self.needs(attention) || weights.iter().any(|w| self.needs(*w));
        Ok(self.push(
            out,
            Op::RelationalConv {
                adjacencies,
                input,
                weights: weights.to_vec(),
                attention,
                aggregated,
            },
            needs,
        ))
    }

    /// Mean softmax cross-entropy over `targets`, a list of `(row, class)`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Result<Var> {
        let lm = self.value(logits);
        if targets.is_empty() {
            return Err(Error::NoSupervisedNodes);
        }
        for &(row, class) in targets {
            if row >= lm.rows() || class >= lm.cols() {
                return Err(Error::Shape(format!(
                    "target (row {row}, class {class}) outside {}x{} logits",
                    lm.rows(),
                    lm.cols()
                )));
            }
        }
        let rows: Vec<usize> = targets.iter().map(|t| t.0).collect();
        let probs = row_softmax(&lm.select_rows(&rows))?;
        let mut loss = 0.0;
        for (k, &(row, class)) in targets.iter().enumerate() {
            let max = lm
                .row(row)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = max
                + lm.row(row)
                    .iter()
                    .map(|v| (v - max).exp())
                    .sum::<f64>()
                    .ln();
            loss += lse - lm.get(row, class);
            debug_assert!(probs.get(k, class) > 0.0 || lse - lm.get(row, class) > 700.0);
        }
        loss /= targets.len() as f64;
        let needs = self.needs(logits);
        Ok(self.push(
            DenseMatrix::filled(1, 1, loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            needs,
        ))
    }

    /// Reverse pass from the scalar `loss`. Returns one gradient per entry of
    /// `store`, zero-filled for parameters the loss does not depend on.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Vec<DenseMatrix>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward from a non-scalar {}x{} value",
                self.value(loss).rows(),
                self.value(loss).cols()
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));
        let mut out: Vec<DenseMatrix> = store
            .ids()
            .map(|id| {
                let (r, c) = store.get(id).shape();
                DenseMatrix::zeros(r, c)
            })
            .collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if let Some(id) = node.param {
                let slot = out
                    .get_mut(id.0)
                    .ok_or_else(|| Error::Shape(format!("parameter {} not in store", id.0)))?;
                slot.check_same_shape(&g, "parameter gradient")?;
                slot.add_scaled(&g, 1.0);
                continue;
            }
            self.propagate(&node.op, &node.value, g, &mut grads)?;
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) {
        if !self.needs(v) {
            return;
        }
        debug_assert_eq!(g.shape(), self.value(v).shape());
        match &mut grads[v.0] {
            Some(existing) => existing.add_scaled(&g, 1.0),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(
        &self,
        op: &Op,
        out: &DenseMatrix,
        g: DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let da = gemm_new(&g, Trans::No, self.value(*b), Trans::Yes)?;
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let db = gemm_new(self.value(*a), Trans::Yes, &g, Trans::No)?;
                    self.accumulate(grads, *b, db);
                }
            }
            Op::SparseMatMul(a, b) => {
                let db = a.transpose_matmul_dense(&g)?;
                self.accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                if self.needs(*b) {
                    self.accumulate(grads, *b, g.clone());
                }
                self.accumulate(grads, *a, g);
            }
            Op::AddRowVector(x, bias) => {
                if self.needs(*bias) {
                    let mut db = DenseMatrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, v) in db.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *bias, db);
                }
                self.accumulate(grads, *x, g);
            }
            Op::Relu(x) => {
                let xm = self.value(*x);
                let data = g
                    .as_slice()
                    .iter()
                    .zip(xm.as_slice())
                    .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, DenseMatrix::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::Dropout(x, mask) => {
                let data = g.as_slice().iter().zip(mask).map(|(d, m)| d * m).collect();
                self.accumulate(grads, *x, DenseMatrix::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::RowSoftmax(x) => {
                let mut dx = DenseMatrix::zeros(g.rows(), g.cols());
                for i in 0..g.rows() {
                    let y = out.row(i);
                    let dy = g.row(i);
                    let inner: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                    for ((d, &yv), &dyv) in dx.row_mut(i).iter_mut().zip(y).zip(dy) {
                        *d = yv * (dyv - inner);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Column(x, j) => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = DenseMatrix::zeros(rows, cols);
                for i in 0..rows {
                    dx.set(i, *j, g.get(i, 0));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Scale(x, s) => {
                self.accumulate(grads, *x, g.map(|v| v * s));
            }
            Op::ScaleRows { x, weights, offset } => {
                let (xm, wm) = (self.value(*x), self.value(*weights));
                if self.needs(*weights) {
                    let dw = DenseMatrix::from_fn(xm.rows(), 1, |i, _| {
                        xm.row(i).iter().zip(g.row(i)).map(|(a, b)| a * b).sum()
                    });
                    self.accumulate(grads, *weights, dw);
                }
                if self.needs(*x) {
                    let mut dx = g;
                    for i in 0..dx.rows() {
                        let s = wm.get(i, 0) + offset;
                        dx.row_mut(i).iter_mut().for_each(|v| *v *= s);
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::RelationalConv {
                adjacencies,
                input,
                weights,
                attention,
                aggregated,
            } => self.relational_conv_backward(
                adjacencies,
                *input,
                weights,
                *attention,
                aggregated,
                &g,
                grads,
            )?,
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let upstream = g.get(0, 0);
                let lm = self.value(*logits);
                let mut dl = DenseMatrix::zeros(lm.rows(), lm.cols());
                let scale = upstream / targets.len() as f64;
                for (k, &(row, class)) in targets.iter().enumerate() {
                    for (c, d) in dl.row_mut(row).iter_mut().enumerate() {
                        let onehot = if c == class { 1.0 } else { 0.0 };
                        *d += scale * (probs.get(k, c) - onehot);
                    }
                }
                self.accumulate(grads, *logits, dl);
            }
        }
        Ok(())
    }

    /// `[att_1 W_1; ..; att_R W_R]`, or its transpose.
    fn stacked_weights(&self, weights: &[Var], att: &DenseMatrix, transposed: bool) -> DenseMatrix {
        let (d_in, d_out) = self.value(weights[0]).shape();
        let r = weights.len();
        let mut stacked = if transposed {
            DenseMatrix::zeros(d_out, r * d_in)
        } else {
            DenseMatrix::zeros(r * d_in, d_out)
        };
        for (k, w) in weights.iter().enumerate() {
            let wm = self.value(*w);
            let a = att.get(0, k);
            for i in 0..d_in {
                for j in 0..d_out {
                    let v = a * wm.get(i, j);
                    if transposed {
                        stacked.set(j, k * d_in + i, v);
                    } else {
                        stacked.set(k * d_in + i, j, v);
                    }
                }
            }
        }
        stacked
    }

    #[allow(clippy::too_many_arguments)]
    fn relational_conv_backward(
        &self,
        adjacencies: &[SparseMatrix],
        input: Var,
        weights: &[Var],
        attention: Var,
        aggregated: &DenseMatrix,
        g: &DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) -> Result<()> {
        let att = self.value(attention);
        let d_in = self.value(input).cols();
        let n = g.rows();

        if weights.iter().any(|w| self.needs(*w)) || self.needs(attention) {
            // U = [A_r H]^T G; dW_r = att_r U_r; d att_r = <U_r, W_r>.
            let u = gemm_new(aggregated, Trans::Yes, g, Trans::No)?;
            let mut datt = DenseMatrix::zeros(1, weights.len());
            for (k, w) in weights.iter().enumerate() {
                let wm = self.value(*w);
                let uk = DenseMatrix::from_fn(d_in, wm.cols(), |i, j| u.get(k * d_in + i, j));
                datt.set(0, k, uk.dot(wm));
                if self.needs(*w) {
                    let mut dw = uk;
                    dw.scale_in_place(att.get(0, k));
                    self.accumulate(grads, *w, dw);
                }
            }
            self.accumulate(grads, attention, datt);
        }

        if self.needs(input) {
            // dH = sum_r A_r^T (G att_r W_r^T).
            let stacked_t = self.stacked_weights(weights, att, true);
            let mut d_agg = DenseMatrix::zeros(n, weights.len() * d_in);
            gemm(1.0, g, Trans::No, &stacked_t, Trans::No, 0.0, &mut d_agg)?;
            let mut dh = DenseMatrix::zeros(n, d_in);
            let dh_data = dh.as_mut_slice();
            for i in 0..n {
                let src_row = d_agg.row(i);
                for (k, adj) in adjacencies.iter().enumerate() {
                    let src = &src_row[k * d_in..(k + 1) * d_in];
                    for (j, v) in adj.row(i) {
                        for (o, &x) in dh_data[j * d_in..(j + 1) * d_in].iter_mut().zip(src) {
                            *o += v * x;
                        }
                    }
                }
            }
            self.accumulate(grads, input, dh);
        }
        Ok(())
    }
}

/// `[A_1 H | .. | A_R H]`, one `n x d` block per relation.
pub fn aggregate_relations(adjacencies: &[SparseMatrix], h: &DenseMatrix) -> Result<DenseMatrix> {
    let (n, d) = h.shape();
    if let Some(a) = adjacencies.iter().find(|a| a.shape() != (n, n)) {
        return Err(Error::shape_pair(
            "relation adjacency",
            a.shape(),
            h.shape(),
        ));
    }
    let r = adjacencies.len();
    let mut out = DenseMatrix::zeros(n, r * d);
    for i in 0..n {
        let row = out.row_mut(i);
        for (k, adj) in adjacencies.iter().enumerate() {
            let block = &mut row[k * d..(k + 1) * d];
            for (j, v) in adj.row(i) {
                for (o, &x) in block.iter_mut().zip(h.row(j)) {
                    *o += v * x;
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Numerically stable softmax of every row.
pub fn row_softmax(x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols() == 0 {
        return Err(Error::Shape("softmax over zero columns".into()));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}
