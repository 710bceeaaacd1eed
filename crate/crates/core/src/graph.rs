//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Operations are recorded eagerly: each builder computes its value and
//! pushes a node whose parents precede it, so creation order is already a
//! topological order. [`Graph::backward`] walks the tape once in reverse,
//! accumulating adjoints, and returns gradients for every named leaf —
//! zeros included for parameters the loss never touched.
//!
//! Everything on the tape is double precision; single-precision inference
//! never goes through here.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    /// `a: [n, m]` plus `b: [m]` broadcast across rows.
    AddRow { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    /// `a: [n, m]` times `b: [m]` broadcast across rows.
    MulRow { a: NodeId, b: NodeId },
    Neg { a: NodeId },
    Scale { a: NodeId, c: f64 },
    AddScalar { a: NodeId },
    Tanh { a: NodeId },
    Sigmoid { a: NodeId },
    Exp { a: NodeId },
    /// `ln|x|`; used for log-determinant terms.
    LnAbs { a: NodeId },
    /// `min(|x|, max)`.
    ClipAbs { a: NodeId, max: f64 },
    /// Total sum of all elements, shape `[1]`.
    Sum { a: NodeId },
    /// Column selection: `[n, d] -> [n, idx.len()]`.
    GatherCols { a: NodeId, idx: Vec<usize> },
    /// Column placement into a zero matrix: `[n, idx.len()] -> [n, width]`.
    ScatterCols { a: NodeId, idx: Vec<usize>, width: usize },
    /// `[d] -> [d, d]` diagonal matrix.
    DiagEmbed { a: NodeId },
    /// Row-wise `log Σ exp`: `[n, k] -> [n]`.
    LogSumExpRows { a: NodeId },
    /// Per-row element pick: `out[i] = a[i, cols[i]]`.
    PickPerRow { a: NodeId, cols: Vec<usize> },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

/// Wengert tape holding values and the recorded operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { shape, value, op });
        id
    }

    /// Unnamed leaf; receives no entry in the gradient map.
    pub fn constant(&mut self, t: &Tensor) -> NodeId {
        self.push(t.shape().to_vec(), t.to_f64_vec(), Op::Leaf)
    }

    /// Named leaf parameter. Names must be unique within a graph.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Result<NodeId> {
        if self.params.contains_key(name) {
            return Err(Error::contract(format!("duplicate parameter name {name:?}")));
        }
        let id = self.push(t.shape().to_vec(), t.to_f64_vec(), Op::Leaf);
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn value_tensor(&self, id: NodeId) -> Tensor {
        Tensor::from_f64(self.shape(id), self.value(id).to_vec()).expect("node shape is consistent")
    }

    /// Value of a scalar (`[1]`) node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        if self.nodes[id.0].value.len() != 1 {
            return Err(Error::contract(format!(
                "expected a scalar node, got shape {:?}",
                self.shape(id)
            )));
        }
        Ok(self.nodes[id.0].value[0])
    }

    fn rows_cols(&self, id: NodeId, context: &str) -> Result<(usize, usize)> {
        match *self.nodes[id.0].shape {
            [n, m] => Ok((n, m)),
            _ => Err(Error::dimension(
                format!("{context}: expected rank-2 operand"),
                &self.nodes[id.0].shape,
                &[],
            )),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.rows_cols(a, "matmul lhs")?;
        let (k2, m) = self.rows_cols(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::dimension(
                "matmul inner extents",
                self.shape(a),
                self.shape(b),
            ));
        }
        let mut out = vec![0.0; n * m];
        matmul_nn(self.value(a), self.value(b), n, k, m, &mut out);
        Ok(self.push(vec![n, m], out, Op::Matmul { a, b }))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, context: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension(context, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(self.shape(a).to_vec(), v, Op::Add { a, b }))
    }

    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, m) = self.rows_cols(a, "add_row lhs")?;
        if self.shape(b) != [m] {
            return Err(Error::dimension("add_row bias", self.shape(a), self.shape(b)));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                out.push(av[i * m + j] + bv[j]);
            }
        }
        Ok(self.push(vec![n, m], out, Op::AddRow { a, b }))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(self.shape(a).to_vec(), v, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(self.shape(a).to_vec(), v, Op::Mul { a, b }))
    }

    pub fn mul_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, m) = self.rows_cols(a, "mul_row lhs")?;
        if self.shape(b) != [m] {
            return Err(Error::dimension("mul_row scale", self.shape(a), self.shape(b)));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                out.push(av[i * m + j] * bv[j]);
            }
        }
        Ok(self.push(vec![n, m], out, Op::MulRow { a, b }))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().map(|x| -x).collect();
        self.push(self.shape(a).to_vec(), v, Op::Neg { a })
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).iter().map(|x| c * x).collect();
        self.push(self.shape(a).to_vec(), v, Op::Scale { a, c })
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).iter().map(|x| x + c).collect();
        self.push(self.shape(a).to_vec(), v, Op::AddScalar { a })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().map(|&x| math::tanh(x)).collect();
        self.push(self.shape(a).to_vec(), v, Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().map(|&x| math::sigmoid(x)).collect();
        self.push(self.shape(a).to_vec(), v, Op::Sigmoid { a })
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().map(|&x| math::exp(x)).collect();
        self.push(self.shape(a).to_vec(), v, Op::Exp { a })
    }

    pub fn ln_abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).iter().map(|&x| math::ln(math::abs(x))).collect();
        self.push(self.shape(a).to_vec(), v, Op::LnAbs { a })
    }

    pub fn clip_abs(&mut self, a: NodeId, max: f64) -> NodeId {
        let v = self
            .value(a)
            .iter()
            .map(|&x| if math::abs(x) < max { math::abs(x) } else { max })
            .collect();
        self.push(self.shape(a).to_vec(), v, Op::ClipAbs { a, max })
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum { a })
    }

    pub fn gather_cols(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let (n, d) = self.rows_cols(a, "gather_cols")?;
        if let Some(&bad) = idx.iter().find(|&&j| j >= d) {
            return Err(Error::contract(format!(
                "gather_cols index {bad} out of range for width {d}"
            )));
        }
        let av = self.value(a);
        let k = idx.len();
        let mut out = Vec::with_capacity(n * k);
        for i in 0..n {
            for &j in idx {
                out.push(av[i * d + j]);
            }
        }
        Ok(self.push(vec![n, k], out, Op::GatherCols { a, idx: idx.to_vec() }))
    }

    pub fn scatter_cols(&mut self, a: NodeId, idx: &[usize], width: usize) -> Result<NodeId> {
        let (n, k) = self.rows_cols(a, "scatter_cols")?;
        if k != idx.len() {
            return Err(Error::contract(format!(
                "scatter_cols got {k} columns for {} indices",
                idx.len()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= width) {
            return Err(Error::contract(format!(
                "scatter_cols index {bad} out of range for width {width}"
            )));
        }
        let av = self.value(a);
        let mut out = vec![0.0; n * width];
        for i in 0..n {
            for (jj, &j) in idx.iter().enumerate() {
                out[i * width + j] = av[i * k + jj];
            }
        }
        Ok(self.push(
            vec![n, width],
            out,
            Op::ScatterCols {
                a,
                idx: idx.to_vec(),
                width,
            },
        ))
    }

    pub fn diag_embed(&mut self, a: NodeId) -> Result<NodeId> {
        let d = match *self.nodes[a.0].shape {
            [d] => d,
            _ => {
                return Err(Error::dimension(
                    "diag_embed: expected rank-1 operand",
                    self.shape(a),
                    &[],
                ))
            }
        };
        let av = self.value(a);
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            out[i * d + i] = av[i];
        }
        Ok(self.push(vec![d, d], out, Op::DiagEmbed { a }))
    }

    pub fn log_sum_exp_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (n, k) = self.rows_cols(a, "log_sum_exp_rows")?;
        let av = self.value(a);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(log_sum_exp(&av[i * k..(i + 1) * k]));
        }
        Ok(self.push(vec![n], out, Op::LogSumExpRows { a }))
    }

    pub fn pick_per_row(&mut self, a: NodeId, cols: &[usize]) -> Result<NodeId> {
        let (n, k) = self.rows_cols(a, "pick_per_row")?;
        if cols.len() != n {
            return Err(Error::contract(format!(
                "pick_per_row got {} column picks for {n} rows",
                cols.len()
            )));
        }
        if let Some(&bad) = cols.iter().find(|&&j| j >= k) {
            return Err(Error::contract(format!(
                "pick_per_row column {bad} out of range for width {k}"
            )));
        }
        let av = self.value(a);
        let out: Vec<f64> = cols.iter().enumerate().map(|(i, &j)| av[i * k + j]).collect();
        Ok(self.push(
            vec![n],
            out,
            Op::PickPerRow {
                a,
                cols: cols.to_vec(),
            },
        ))
    }

    /// Gradient of a scalar `loss` with respect to every named parameter.
    ///
    /// Parameters the loss does not depend on receive all-zero gradients;
    /// a graph with no parameters yields an empty map.
    pub fn backward(&self, loss: NodeId) -> Result<BTreeMap<String, Tensor>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[loss.0][0] = 1.0;

        // Reverse creation order visits every node exactly once, children
        // before parents.
        for i in (0..=loss.0).rev() {
            let g = core::mem::take(&mut grads[i]);
            if g.iter().all(|&x| x == 0.0) {
                grads[i] = g;
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (n, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let m = self.nodes[b.0].shape[1];
                    // dA += dC · Bᵀ ; dB += Aᵀ · dC
                    matmul_nt(&g, &self.nodes[b.0].value, n, m, k, &mut grads[a.0]);
                    matmul_tn(&self.nodes[a.0].value, &g, k, n, m, &mut grads[b.0]);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g);
                }
                Op::AddRow { a, b } => {
                    accumulate(&mut grads[a.0], &g);
                    let m = self.nodes[b.0].value.len();
                    let gb = &mut grads[b.0];
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % m] += gi;
                    }
                }
                Op::Sub { a, b } => {
                    accumulate(&mut grads[a.0], &g);
                    for (ga, gi) in grads[b.0].iter_mut().zip(&g) {
                        *ga -= gi;
                    }
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for j in 0..g.len() {
                        grads[a.0][j] += g[j] * bv[j];
                    }
                    for j in 0..g.len() {
                        grads[b.0][j] += g[j] * av[j];
                    }
                }
                Op::MulRow { a, b } => {
                    let m = self.nodes[b.0].value.len();
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for j in 0..g.len() {
                        grads[a.0][j] += g[j] * bv[j % m];
                    }
                    for j in 0..g.len() {
                        grads[b.0][j % m] += g[j] * av[j];
                    }
                }
                Op::Neg { a } => {
                    for (ga, gi) in grads[a.0].iter_mut().zip(&g) {
                        *ga -= gi;
                    }
                }
                Op::Scale { a, c } => {
                    for (ga, gi) in grads[a.0].iter_mut().zip(&g) {
                        *ga += c * gi;
                    }
                }
                Op::AddScalar { a } => accumulate(&mut grads[a.0], &g),
                Op::Tanh { a } => {
                    let y = &self.nodes[i].value;
                    for j in 0..g.len() {
                        grads[a.0][j] += g[j] * (1.0 - y[j] * y[j]);
                    }
                }
                Op::Sigmoid { a } => {
                    let y = &self.nodes[i].value;
                    for j in 0..g.len() {
                        grads[a.0][j] += g[j] * y[j] * (1.0 - y[j]);
                    }
                }
                Op::Exp { a } => {
                    let y = &self.nodes[i].value;
                    for j in 0..g.len() {
                        grads[a.0][j] += g[j] * y[j];
                    }
                }
                Op::LnAbs { a } => {
                    let x = &self.nodes[a.0].value;
                    for j in 0..g.len() {
                        grads[a.0][j] += g[j] / x[j];
                    }
                }
                Op::ClipAbs { a, max } => {
                    let x = &self.nodes[a.0].value;
                    for j in 0..g.len() {
                        if math::abs(x[j]) < *max {
                            let s = if x[j] > 0.0 {
                                1.0
                            } else if x[j] < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            grads[a.0][j] += g[j] * s;
                        }
                    }
                }
                Op::Sum { a } => {
                    let gs = g[0];
                    for ga in grads[a.0].iter_mut() {
                        *ga += gs;
                    }
                }
                Op::GatherCols { a, idx } => {
                    let d = self.nodes[a.0].shape[1];
                    let k = idx.len();
                    let n = self.nodes[a.0].shape[0];
                    for r in 0..n {
                        for (jj, &j) in idx.iter().enumerate() {
                            grads[a.0][r * d + j] += g[r * k + jj];
                        }
                    }
                }
                Op::ScatterCols { a, idx, width } => {
                    let k = idx.len();
                    let n = self.nodes[a.0].shape[0];
                    for r in 0..n {
                        for (jj, &j) in idx.iter().enumerate() {
                            grads[a.0][r * k + jj] += g[r * width + j];
                        }
                    }
                }
                Op::DiagEmbed { a } => {
                    let d = self.nodes[a.0].value.len();
                    for j in 0..d {
                        grads[a.0][j] += g[j * d + j];
                    }
                }
                Op::LogSumExpRows { a } => {
                    let (n, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let x = &self.nodes[a.0].value;
                    let lse = &self.nodes[i].value;
                    for r in 0..n {
                        for j in 0..k {
                            grads[a.0][r * k + j] += g[r] * math::exp(x[r * k + j] - lse[r]);
                        }
                    }
                }
                Op::PickPerRow { a, cols } => {
                    let k = self.nodes[a.0].shape[1];
                    for (r, &j) in cols.iter().enumerate() {
                        grads[a.0][r * k + j] += g[r];
                    }
                }
            }
            grads[i] = g;
        }

        let mut out = BTreeMap::new();
        for (name, id) in &self.params {
            let t = Tensor::from_f64(&self.nodes[id.0].shape, core::mem::take(&mut grads[id.0]))
                .expect("gradient shape matches parameter");
            out.insert(name.clone(), t);
        }
        Ok(out)
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = row.iter().map(|&x| math::exp(x - m)).sum();
    m + math::ln(s)
}

/// `out[n×m] += a[n×k] · b[k×m]`
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * m..(p + 1) * m];
            for j in 0..m {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// `out[n×m] += a[n×k] · b[m×k]ᵀ`
fn matmul_nt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            out[i * m + j] += acc;
        }
    }
}

/// `out[n×m] += a[k×n]ᵀ · b[k×m]`
fn matmul_tn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for p in 0..k {
        let brow = &b[p * m..(p + 1) * m];
        for i in 0..n {
            let av = a[p * n + i];
            let orow = &mut out[i * m..(i + 1) * m];
            for j in 0..m {
                orow[j] += av * brow[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t2(rows: usize, cols: usize, v: Vec<f64>) -> Tensor {
        Tensor::from_f64(&[rows, cols], v).unwrap()
    }

    #[test]
    fn matmul_identity_preserves_operand() {
        let mut g = Graph::new();
        let i2 = g.constant(&t2(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let m = g.constant(&t2(2, 2, vec![3.0, -1.0, 2.0, 5.0]));
        let p = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(p), &[3.0, -1.0, 2.0, 5.0]);
    }

    #[test]
    fn matmul_hand_example() {
        let mut g = Graph::new();
        let a = g.constant(&t2(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = g.constant(&t2(2, 1, vec![5.0, 6.0]));
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.value(p), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(&t2(2, 3, vec![0.0; 6]));
        let b = g.constant(&t2(2, 3, vec![0.0; 6]));
        match g.matmul(a, b) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn backward_of_sum_is_all_ones() {
        let mut g = Graph::new();
        let p = g.param("p", &t2(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads["p"].f64_slice().unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let mut g = Graph::new();
        let p = g.param("p", &Tensor::from_f64(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let sq = g.mul(p, p).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads["p"].f64_slice().unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut g = Graph::new();
        let p = g.param("used", &Tensor::vector(vec![2.0])).unwrap();
        let _q = g.param("unused", &Tensor::vector(vec![5.0, 7.0])).unwrap();
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads["used"].f64_slice().unwrap(), &[1.0]);
        assert_eq!(grads["unused"].f64_slice().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn graph_without_parameters_yields_empty_map() {
        let mut g = Graph::new();
        let c = g.constant(&Tensor::vector(vec![1.0, 2.0]));
        let loss = g.sum(c);
        assert!(g.backward(loss).unwrap().is_empty());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let p = g.param("p", &Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn gather_then_scatter_reassembles() {
        let mut g = Graph::new();
        let x = g.constant(&t2(2, 4, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]));
        let even = g.gather_cols(x, &[0, 2]).unwrap();
        let odd = g.gather_cols(x, &[1, 3]).unwrap();
        let se = g.scatter_cols(even, &[0, 2], 4).unwrap();
        let so = g.scatter_cols(odd, &[1, 3], 4).unwrap();
        let back = g.add(se, so).unwrap();
        assert_eq!(g.value(back), g.value(x));
    }

    #[test]
    fn log_sum_exp_matches_naive_on_moderate_values() {
        let mut g = Graph::new();
        let x = g.constant(&t2(1, 3, vec![0.1, -0.4, 0.7]));
        let lse = g.log_sum_exp_rows(x).unwrap();
        let naive = math::ln(math::exp(0.1) + math::exp(-0.4) + math::exp(0.7));
        assert!((g.value(lse)[0] - naive).abs() < 1e-12);
    }

    /// Central finite differences against the tape for a composite graph
    /// mixing most ops.
    #[test]
    fn finite_difference_check_on_composite_graph() {
        let build = |w: &[f64], b: &[f64], x: &[f64]| -> f64 {
            let mut g = Graph::new();
            let wp = g.param("w", &t2(3, 2, w.to_vec())).unwrap();
            let bp = g.param("b", &Tensor::vector(b.to_vec())).unwrap();
            let xp = g.param("x", &t2(2, 3, x.to_vec())).unwrap();
            let h = g.matmul(xp, wp).unwrap();
            let h = g.add_row(h, bp).unwrap();
            let h = g.tanh(h);
            let s = g.sigmoid(h);
            let m = g.mul(s, h).unwrap();
            let loss = g.sum(m);
            g.scalar(loss).unwrap()
        };

        let w = [0.3, -0.2, 0.5, 0.1, -0.4, 0.25];
        let b = [0.05, -0.15];
        let x = [0.9, -0.3, 0.2, 0.4, 0.7, -0.6];

        let mut g = Graph::new();
        let wp = g.param("w", &t2(3, 2, w.to_vec())).unwrap();
        let bp = g.param("b", &Tensor::vector(b.to_vec())).unwrap();
        let xp = g.param("x", &t2(2, 3, x.to_vec())).unwrap();
        let h = g.matmul(xp, wp).unwrap();
        let h = g.add_row(h, bp).unwrap();
        let h = g.tanh(h);
        let s = g.sigmoid(h);
        let m = g.mul(s, h).unwrap();
        let loss = g.sum(m);
        let grads = g.backward(loss).unwrap();

        let eps = 1e-5;
        let check = |name: &str, base: &[f64], eval: &dyn Fn(&[f64]) -> f64| {
            let analytic = grads[name].f64_slice().unwrap();
            for i in 0..base.len() {
                let mut hi = base.to_vec();
                let mut lo = base.to_vec();
                hi[i] += eps;
                lo[i] -= eps;
                let fd = (eval(&hi) - eval(&lo)) / (2.0 * eps);
                let denom = fd.abs().max(1e-8);
                assert!(
                    (analytic[i] - fd).abs() / denom < 1e-6,
                    "{name}[{i}]: analytic {} vs fd {}",
                    analytic[i],
                    fd
                );
            }
        };
        check("w", &w, &|v| build(v, &b, &x));
        check("b", &b, &|v| build(&w, v, &x));
        check("x", &x, &|v| build(&w, &b, v));
    }
}
