//! Recorded-tape reverse-mode differentiation over rank-2 values.
//!
//! Every op appends a node holding its output value and parent ids; the
//! backward pass walks the tape in reverse, pushing gradients to parents.
//! The op set is exactly what the fusion/uncertainty pipeline needs.

use std::collections::BTreeMap;

use crate::error::{EvactError, Result};
use crate::nn::params::ParamStore;
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(ValueId, ValueId),
    Transpose(ValueId),
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    AddRow(ValueId, ValueId),
    Relu(ValueId),
    Softplus(ValueId),
    SoftmaxRows(ValueId),
    Reshape(ValueId),
    SliceCols(ValueId, usize),
    ConcatRows(Vec<ValueId>),
    GatherRows(ValueId, Vec<usize>),
    SumAll(ValueId),
    MeanAll(ValueId),
    MeanStdNormalizeRows(ValueId),
    L2NormalizeRows(ValueId),
    SmoothL1Mean(ValueId, ValueId),
    NceDiag(ValueId),
    MulConst(ValueId, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
}

/// A single forward recording; confined to one thread.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    /// Leaf id -> parameter name, for writing gradients back to a store.
    param_leaves: Vec<(ValueId, String)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> ValueId {
        debug_assert_eq!(value.len(), rows * cols);
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
        });
        id
    }

    fn node(&self, id: ValueId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: ValueId) -> (usize, usize) {
        let n = self.node(id);
        (n.rows, n.cols)
    }

    pub fn value(&self, id: ValueId) -> &[f64] {
        &self.node(id).value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar_value(&self, id: ValueId) -> f64 {
        self.node(id).value[0]
    }

    pub fn tensor(&self, id: ValueId) -> Tensor {
        let n = self.node(id);
        Tensor::matrix(n.rows, n.cols, n.value.clone()).expect("node value")
    }

    /// Records a constant input (no gradient consumer).
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<ValueId> {
        if data.len() != rows * cols {
            return Err(EvactError::shape("constant", &[rows, cols], &[data.len()]));
        }
        Ok(self.push(Op::Leaf, rows, cols, data))
    }

    pub fn constant_tensor(&mut self, t: &Tensor) -> Result<ValueId> {
        let (r, c) = t.rows_cols();
        self.constant(r, c, t.data().to_vec())
    }

    /// Records a trainable parameter from the store; its gradient is routed
    /// back to the store by [`Tape::backward_into`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<ValueId> {
        let t = store.get(name)?;
        let (r, c) = t.rows_cols();
        let id = self.push(Op::Leaf, r, c, t.data().to_vec());
        self.param_leaves.push((id, name.to_string()));
        Ok(id)
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(EvactError::shape("matmul", &[m, k], &[k2, n]));
        }
        let mut out = vec![0.0; m * n];
        {
            let av = &self.node(a).value;
            let bv = &self.node(b).value;
            for i in 0..m {
                for p in 0..k {
                    let aip = av[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        out[i * n + j] += aip * bv[p * n + j];
                    }
                }
            }
        }
        Ok(self.push(Op::Matmul(a, b), m, n, out))
    }

    pub fn transpose(&mut self, a: ValueId) -> ValueId {
        let (m, n) = self.shape(a);
        let mut out = vec![0.0; m * n];
        let av = &self.node(a).value;
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        self.push(Op::Transpose(a), n, m, out)
    }

    fn elementwise(
        &mut self,
        opname: &'static str,
        a: ValueId,
        b: ValueId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<ValueId> {
        let (m, n) = self.shape(a);
        if self.shape(b) != (m, n) {
            let (bm, bn) = self.shape(b);
            return Err(EvactError::shape(opname, &[m, n], &[bm, bn]));
        }
        let out = self
            .node(a)
            .value
            .iter()
            .zip(&self.node(b).value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(op, m, n, out))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: ValueId, c: f64) -> ValueId {
        let (m, n) = self.shape(a);
        let out = self.node(a).value.iter().map(|&x| x * c).collect();
        self.push(Op::Scale(a, c), m, n, out)
    }

    /// Matrix plus a broadcast row vector (bias).
    pub fn add_row(&mut self, a: ValueId, row: ValueId) -> Result<ValueId> {
        let (m, n) = self.shape(a);
        let (rm, rn) = self.shape(row);
        if rm != 1 || rn != n {
            return Err(EvactError::shape("add_row", &[m, n], &[rm, rn]));
        }
        let rv = self.node(row).value.clone();
        let out = self
            .node(a)
            .value
            .iter()
            .enumerate()
            .map(|(i, &x)| x + rv[i % n])
            .collect();
        Ok(self.push(Op::AddRow(a, row), m, n, out))
    }

    pub fn relu(&mut self, a: ValueId) -> ValueId {
        let (m, n) = self.shape(a);
        let out = self.node(a).value.iter().map(|&x| x.max(0.0)).collect();
        self.push(Op::Relu(a), m, n, out)
    }

    pub fn softplus(&mut self, a: ValueId) -> ValueId {
        let (m, n) = self.shape(a);
        let out = self
            .node(a)
            .value
            .iter()
            .map(|&x| x.max(0.0) + (-x.abs()).exp().ln_1p())
            .collect();
        self.push(Op::Softplus(a), m, n, out)
    }

    /// Row-wise softmax (numerically stabilized).
    pub fn softmax_rows(&mut self, a: ValueId) -> ValueId {
        let (m, n) = self.shape(a);
        let av = &self.node(a).value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - max).exp();
                out[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                out[i * n + j] /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a), m, n, out)
    }

    pub fn reshape(&mut self, a: ValueId, rows: usize, cols: usize) -> Result<ValueId> {
        let (m, n) = self.shape(a);
        if m * n != rows * cols {
            return Err(EvactError::shape("reshape", &[m, n], &[rows, cols]));
        }
        let out = self.node(a).value.clone();
        Ok(self.push(Op::Reshape(a), rows, cols, out))
    }

    /// Column range `[start, start + width)` of every row.
    pub fn slice_cols(&mut self, a: ValueId, start: usize, width: usize) -> Result<ValueId> {
        let (m, n) = self.shape(a);
        if start + width > n {
            return Err(EvactError::shape("slice_cols", &[m, n], &[start, width]));
        }
        let av = &self.node(a).value;
        let mut out = Vec::with_capacity(m * width);
        for i in 0..m {
            out.extend_from_slice(&av[i * n + start..i * n + start + width]);
        }
        Ok(self.push(Op::SliceCols(a, start), m, width, out))
    }

    /// Vertical stack of same-width values.
    pub fn concat_rows(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(EvactError::Validation("concat_rows of nothing".into()));
        }
        let (_, n) = self.shape(parts[0]);
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pm, pn) = self.shape(p);
            if pn != n {
                return Err(EvactError::shape("concat_rows", &[rows, n], &[pm, pn]));
            }
            rows += pm;
            out.extend_from_slice(&self.node(p).value);
        }
        Ok(self.push(Op::ConcatRows(parts.to_vec()), rows, n, out))
    }

    /// Row lookup (embedding gather); gradient scatter-adds into the table.
    pub fn gather_rows(&mut self, table: ValueId, indices: &[usize]) -> Result<ValueId> {
        let (v, d) = self.shape(table);
        for &i in indices {
            if i >= v {
                return Err(EvactError::Vocab(format!("row {i} of {v}")));
            }
        }
        let tv = &self.node(table).value;
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        Ok(self.push(Op::GatherRows(table, indices.to_vec()), indices.len(), d, out))
    }

    pub fn sum_all(&mut self, a: ValueId) -> ValueId {
        let s: f64 = self.node(a).value.iter().sum();
        self.push(Op::SumAll(a), 1, 1, vec![s])
    }

    pub fn mean_all(&mut self, a: ValueId) -> ValueId {
        let n = self.node(a).value.len() as f64;
        let s: f64 = self.node(a).value.iter().sum();
        self.push(Op::MeanAll(a), 1, 1, vec![s / n])
    }

    /// Per-row `(x - mean) / std` with population std; errors on std < 1e-12.
    pub fn mean_std_normalize_rows(&mut self, a: ValueId) -> Result<ValueId> {
        let (m, n) = self.shape(a);
        let av = &self.node(a).value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            if std < 1e-12 {
                return Err(EvactError::DegenerateStd);
            }
            for j in 0..n {
                out[i * n + j] = (row[j] - mean) / std;
            }
        }
        Ok(self.push(Op::MeanStdNormalizeRows(a), m, n, out))
    }

    /// Per-row division by the L2 norm; errors on near-zero rows.
    pub fn l2_normalize_rows(&mut self, a: ValueId) -> Result<ValueId> {
        let (m, n) = self.shape(a);
        let av = &self.node(a).value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let norm = row.iter().map(|&x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(EvactError::Validation(
                    "cannot L2-normalize a zero row".into(),
                ));
            }
            for j in 0..n {
                out[i * n + j] = row[j] / norm;
            }
        }
        Ok(self.push(Op::L2NormalizeRows(a), m, n, out))
    }

    /// Mean over all coordinates of the smooth-L1 penalty of `pred - target`.
    pub fn smooth_l1_mean(&mut self, pred: ValueId, target: ValueId) -> Result<ValueId> {
        let (m, n) = self.shape(pred);
        if self.shape(target) != (m, n) {
            let (tm, tn) = self.shape(target);
            return Err(EvactError::shape("smooth_l1", &[m, n], &[tm, tn]));
        }
        let total: f64 = self
            .node(pred)
            .value
            .iter()
            .zip(&self.node(target).value)
            .map(|(&p, &t)| {
                let d = p - t;
                if d.abs() < 1.0 {
                    0.5 * d * d
                } else {
                    d.abs() - 0.5
                }
            })
            .sum();
        let v = total / (m * n) as f64;
        Ok(self.push(Op::SmoothL1Mean(pred, target), 1, 1, vec![v]))
    }

    /// InfoNCE over square logits with matched pairs on the diagonal:
    /// `-(1/B) sum_b log softmax(S_b)_bb`.
    pub fn nce_diag(&mut self, logits: ValueId) -> Result<ValueId> {
        let (m, n) = self.shape(logits);
        if m != n {
            return Err(EvactError::shape("nce_diag", &[m, n], &[m, m]));
        }
        let lv = &self.node(logits).value;
        let mut loss = 0.0;
        for i in 0..m {
            let row = &lv[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[i];
        }
        Ok(self.push(Op::NceDiag(logits), 1, 1, vec![loss / m as f64]))
    }

    /// Elementwise product with a constant (no gradient to the constant);
    /// this is how reparameterized noise enters the graph.
    pub fn mul_const(&mut self, a: ValueId, consts: &[f64]) -> Result<ValueId> {
        let (m, n) = self.shape(a);
        if consts.len() != m * n {
            return Err(EvactError::shape("mul_const", &[m, n], &[consts.len()]));
        }
        let out = self
            .node(a)
            .value
            .iter()
            .zip(consts)
            .map(|(&x, &c)| x * c)
            .collect();
        Ok(self.push(Op::MulConst(a, consts.to_vec()), m, n, out))
    }

    /// Mean of a set of scalar nodes.
    pub fn mean_scalars(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        let stacked = self.concat_rows(parts)?;
        Ok(self.mean_all(stacked))
    }

    /// Reverse pass from a scalar loss; returns one gradient buffer per node.
    pub fn backward(&self, loss: ValueId) -> Result<Vec<Vec<f64>>> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(EvactError::State(
                "backward requested without a recorded forward pass".into(),
            ));
        }
        if self.shape(loss) != (1, 1) {
            return Err(EvactError::State("backward root must be scalar".into()));
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.rows * n.cols])
            .collect();
        grads[loss.0][0] = 1.0;

        for idx in (0..=loss.0).rev() {
            if grads[idx].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[idx].clone();
            let node = &self.nodes[idx];
            let (m, n) = (node.rows, node.cols);
            match &node.op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (am, ak) = self.shape(*a);
                    let bn = self.shape(*b).1;
                    let av = self.node(*a).value.clone();
                    let bv = self.node(*b).value.clone();
                    // dA = g . B^T
                    for i in 0..am {
                        for p in 0..ak {
                            let mut acc = 0.0;
                            for j in 0..bn {
                                acc += g[i * bn + j] * bv[p * bn + j];
                            }
                            grads[a.0][i * ak + p] += acc;
                        }
                    }
                    // dB = A^T . g
                    for p in 0..ak {
                        for j in 0..bn {
                            let mut acc = 0.0;
                            for i in 0..am {
                                acc += av[i * ak + p] * g[i * bn + j];
                            }
                            grads[b.0][p * bn + j] += acc;
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (am, an) = self.shape(*a);
                    for i in 0..am {
                        for j in 0..an {
                            grads[a.0][i * an + j] += g[j * am + i];
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (k, &gv) in g.iter().enumerate() {
                        grads[a.0][k] += gv;
                    }
                    for (k, &gv) in g.iter().enumerate() {
                        grads[b.0][k] += gv;
                    }
                }
                Op::Sub(a, b) => {
                    for (k, &gv) in g.iter().enumerate() {
                        grads[a.0][k] += gv;
                    }
                    for (k, &gv) in g.iter().enumerate() {
                        grads[b.0][k] -= gv;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.node(*a).value.clone();
                    let bv = self.node(*b).value.clone();
                    for k in 0..g.len() {
                        grads[a.0][k] += g[k] * bv[k];
                        grads[b.0][k] += g[k] * av[k];
                    }
                }
                Op::Scale(a, c) => {
                    for (k, &gv) in g.iter().enumerate() {
                        grads[a.0][k] += gv * c;
                    }
                }
                Op::AddRow(a, row) => {
                    for (k, &gv) in g.iter().enumerate() {
                        grads[a.0][k] += gv;
                    }
                    for i in 0..m {
                        for j in 0..n {
                            grads[row.0][j] += g[i * n + j];
                        }
                    }
                }
                Op::Relu(a) => {
                    let av = self.node(*a).value.clone();
                    for k in 0..g.len() {
                        if av[k] > 0.0 {
                            grads[a.0][k] += g[k];
                        }
                    }
                }
                Op::Softplus(a) => {
                    let av = self.node(*a).value.clone();
                    for k in 0..g.len() {
                        let sig = 1.0 / (1.0 + (-av[k]).exp());
                        grads[a.0][k] += g[k] * sig;
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    for i in 0..m {
                        let dot: f64 = (0..n).map(|j| g[i * n + j] * y[i * n + j]).sum();
                        for j in 0..n {
                            grads[a.0][i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                        }
                    }
                }
                Op::Reshape(a) => {
                    for (k, &gv) in g.iter().enumerate() {
                        grads[a.0][k] += gv;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (_, an) = self.shape(*a);
                    for i in 0..m {
                        for j in 0..n {
                            grads[a.0][i * an + start + j] += g[i * n + j];
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (pm, pn) = self.shape(p);
                        for k in 0..pm * pn {
                            grads[p.0][k] += g[offset + k];
                        }
                        offset += pm * pn;
                    }
                }
                Op::GatherRows(table, indices) => {
                    let d = n;
                    for (r, &src) in indices.iter().enumerate() {
                        for j in 0..d {
                            grads[table.0][src * d + j] += g[r * d + j];
                        }
                    }
                }
                Op::SumAll(a) => {
                    for gv in grads[a.0].iter_mut() {
                        *gv += g[0];
                    }
                }
                Op::MeanAll(a) => {
                    let len = grads[a.0].len() as f64;
                    for gv in grads[a.0].iter_mut() {
                        *gv += g[0] / len;
                    }
                }
                Op::MeanStdNormalizeRows(a) => {
                    let av = self.node(*a).value.clone();
                    let y = &node.value;
                    for i in 0..m {
                        let row = &av[i * n..(i + 1) * n];
                        let mean = row.iter().sum::<f64>() / n as f64;
                        let var =
                            row.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / n as f64;
                        let std = var.sqrt();
                        let gmean: f64 = (0..n).map(|j| g[i * n + j]).sum::<f64>() / n as f64;
                        let gy: f64 = (0..n)
                            .map(|j| g[i * n + j] * y[i * n + j])
                            .sum::<f64>()
                            / n as f64;
                        for j in 0..n {
                            grads[a.0][i * n + j] +=
                                (g[i * n + j] - gmean - y[i * n + j] * gy) / std;
                        }
                    }
                }
                Op::L2NormalizeRows(a) => {
                    let av = self.node(*a).value.clone();
                    let y = &node.value;
                    for i in 0..m {
                        let norm = av[i * n..(i + 1) * n]
                            .iter()
                            .map(|&x| x * x)
                            .sum::<f64>()
                            .sqrt();
                        let dot: f64 = (0..n).map(|j| g[i * n + j] * y[i * n + j]).sum();
                        for j in 0..n {
                            grads[a.0][i * n + j] += (g[i * n + j] - y[i * n + j] * dot) / norm;
                        }
                    }
                }
                Op::SmoothL1Mean(pred, target) => {
                    let pv = self.node(*pred).value.clone();
                    let tv = self.node(*target).value.clone();
                    let scale = g[0] / pv.len() as f64;
                    for k in 0..pv.len() {
                        let d = pv[k] - tv[k];
                        let dd = if d.abs() < 1.0 { d } else { d.signum() };
                        grads[pred.0][k] += scale * dd;
                        grads[target.0][k] -= scale * dd;
                    }
                }
                Op::NceDiag(logits) => {
                    let lv = self.node(*logits).value.clone();
                    let b = self.shape(*logits).0;
                    let scale = g[0] / b as f64;
                    for i in 0..b {
                        let row = &lv[i * b..(i + 1) * b];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
                        for j in 0..b {
                            let p = (row[j] - max).exp() / sum;
                            let delta = if i == j { 1.0 } else { 0.0 };
                            grads[logits.0][i * b + j] += scale * (p - delta);
                        }
                    }
                }
                Op::MulConst(a, consts) => {
                    for k in 0..g.len() {
                        grads[a.0][k] += g[k] * consts[k];
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Runs backward and accumulates parameter gradients into the store.
    pub fn backward_into(&self, loss: ValueId, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward(loss)?;
        let mut by_name: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (id, name) in &self.param_leaves {
            let entry = by_name
                .entry(name.as_str())
                .or_insert_with(|| vec![0.0; grads[id.0].len()]);
            for (e, &g) in entry.iter_mut().zip(&grads[id.0]) {
                *e += g;
            }
        }
        for (name, g) in by_name {
            store.accumulate_grad(name, &g)?;
        }
        Ok(())
    }
}
