//! Reverse-mode automatic differentiation over f64 vectors.
//!
//! A [`Tape`] records vector-valued operations whose trainable inputs are
//! slices of one flat parameter array. [`Tape::backward`] walks the record
//! in reverse, accumulating an adjoint per node and a gradient per
//! parameter element. Everything is 64-bit; forward arithmetic matches the
//! cache-backed inference path bit for bit (same loop order, same library
//! calls), which the tests pin down.

/// Index of a recorded node.
pub type NodeId = usize;

enum Op {
    /// Fixed input; no gradient.
    Constant,
    /// Value read from `params[offset..offset+len]`.
    Param { offset: usize },
    /// `W x + b`: `W` row-major at `params[w..]` (rows × cols), `b` at
    /// `params[b..]` (rows), `cols = len(x)`.
    Affine { w: usize, b: usize, x: NodeId },
    Concat { parts: Vec<NodeId> },
    Slice { x: NodeId, start: usize },
    Relu { x: NodeId },
    Relu6 { x: NodeId },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    /// Elementwise product.
    Mul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    /// `-weight * log softmax(x)[target]` for a length-2 logit vector.
    Nll { x: NodeId, target: usize, weight: f64 },
    /// Scalar sum of scalar nodes.
    Sum { parts: Vec<NodeId> },
}

pub struct Tape<'p> {
    params: &'p [f64],
    ops: Vec<Op>,
    vals: Vec<Vec<f64>>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Tape { params, ops: Vec::new(), vals: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.ops.push(op);
        self.vals.push(value);
        self.vals.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.vals[id]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.vals[id].len(), 1);
        self.vals[id][0]
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.push(Op::Constant, vec![0.0; len])
    }

    pub fn param(&mut self, offset: usize, len: usize) -> NodeId {
        let value = self.params[offset..offset + len].to_vec();
        self.push(Op::Param { offset }, value)
    }

    pub fn affine(&mut self, w: usize, b: usize, rows: usize, x: NodeId) -> NodeId {
        let xv = &self.vals[x];
        let cols = xv.len();
        let mut y = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut acc = self.params[b + i];
            let row = &self.params[w + i * cols..w + (i + 1) * cols];
            for (wij, xj) in row.iter().zip(xv.iter()) {
                acc += wij * xj;
            }
            y.push(acc);
        }
        self.push(Op::Affine { w, b, x }, y)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut y = Vec::new();
        for &p in parts {
            y.extend_from_slice(&self.vals[p]);
        }
        self.push(Op::Concat { parts: parts.to_vec() }, y)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let y = self.vals[x][start..start + len].to_vec();
        self.push(Op::Slice { x, start }, y)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y = self.vals[x].iter().map(|&v| v.max(0.0)).collect();
        self.push(Op::Relu { x }, y)
    }

    pub fn relu6(&mut self, x: NodeId) -> NodeId {
        let y = self.vals[x].iter().map(|&v| v.clamp(0.0, 6.0)).collect();
        self.push(Op::Relu6 { x }, y)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y = self.vals[x].iter().map(|&v| v.tanh()).collect();
        self.push(Op::Tanh { x }, y)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = self.vals[x].iter().map(|&v| sigmoid(v)).collect();
        self.push(Op::Sigmoid { x }, y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.vals[a].len(), self.vals[b].len());
        let y = self.vals[a].iter().zip(&self.vals[b]).map(|(x, z)| x * z).collect();
        self.push(Op::Mul { a, b }, y)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.vals[a].len(), self.vals[b].len());
        let y = self.vals[a].iter().zip(&self.vals[b]).map(|(x, z)| x + z).collect();
        self.push(Op::Add { a, b }, y)
    }

    /// Weighted negative log-likelihood of `target` under softmax of a
    /// two-logit node.
    pub fn nll2(&mut self, x: NodeId, target: usize, weight: f64) -> NodeId {
        debug_assert_eq!(self.vals[x].len(), 2);
        debug_assert!(target < 2);
        let (x0, x1) = (self.vals[x][0], self.vals[x][1]);
        let hi = x0.max(x1);
        let lse = hi + ((x0 - hi).exp() + (x1 - hi).exp()).ln();
        let value = -weight * (self.vals[x][target] - lse);
        self.push(Op::Nll { x, target, weight }, vec![value])
    }

    pub fn sum(&mut self, parts: &[NodeId]) -> NodeId {
        let mut acc = 0.0;
        for &p in parts {
            debug_assert_eq!(self.vals[p].len(), 1);
            acc += self.vals[p][0];
        }
        self.push(Op::Sum { parts: parts.to_vec() }, vec![acc])
    }

    /// Smallest distance of any rectifier input to its kink (0, and 6 for
    /// the clipped variant). Gradient checks resample instances whose
    /// margin is tiny, where finite differences are invalid.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for (op, _) in self.ops.iter().zip(&self.vals) {
            match op {
                Op::Relu { x } => {
                    for &v in &self.vals[*x] {
                        margin = margin.min(v.abs());
                    }
                }
                Op::Relu6 { x } => {
                    for &v in &self.vals[*x] {
                        margin = margin.min(v.abs()).min((v - 6.0).abs());
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Accumulate d(root)/d(params) into `grad` (same length as the
    /// parameter array). `root` must be scalar.
    pub fn backward(&self, root: NodeId, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        assert_eq!(self.vals[root].len(), 1, "backward root must be scalar");
        let mut adj: Vec<Vec<f64>> = self.vals.iter().map(|v| vec![0.0; v.len()]).collect();
        adj[root][0] = 1.0;
        for id in (0..self.ops.len()).rev() {
            let g = std::mem::take(&mut adj[id]);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            match &self.ops[id] {
                Op::Constant => {}
                Op::Param { offset } => {
                    for (k, gv) in g.iter().enumerate() {
                        grad[offset + k] += gv;
                    }
                }
                Op::Affine { w, b, x } => {
                    let xv = &self.vals[*x];
                    let cols = xv.len();
                    let mut gx = vec![0.0; cols];
                    for (i, &gy) in g.iter().enumerate() {
                        if gy == 0.0 {
                            continue;
                        }
                        grad[b + i] += gy;
                        let row = &self.params[w + i * cols..w + (i + 1) * cols];
                        for j in 0..cols {
                            grad[w + i * cols + j] += gy * xv[j];
                            gx[j] += gy * row[j];
                        }
                    }
                    for (a, v) in adj[*x].iter_mut().zip(gx) {
                        *a += v;
                    }
                }
                Op::Concat { parts } => {
                    let mut at = 0;
                    for &p in parts {
                        let len = self.vals[p].len();
                        for (a, gv) in adj[p].iter_mut().zip(&g[at..at + len]) {
                            *a += gv;
                        }
                        at += len;
                    }
                }
                Op::Slice { x, start } => {
                    for (k, gv) in g.iter().enumerate() {
                        adj[*x][start + k] += gv;
                    }
                }
                Op::Relu { x } => {
                    let xv = &self.vals[*x];
                    for (k, gv) in g.iter().enumerate() {
                        if xv[k] > 0.0 {
                            adj[*x][k] += gv;
                        }
                    }
                }
                Op::Relu6 { x } => {
                    let xv = &self.vals[*x];
                    for (k, gv) in g.iter().enumerate() {
                        if xv[k] > 0.0 && xv[k] < 6.0 {
                            adj[*x][k] += gv;
                        }
                    }
                }
                Op::Tanh { x } => {
                    let yv = &self.vals[id];
                    for (k, gv) in g.iter().enumerate() {
                        adj[*x][k] += gv * (1.0 - yv[k] * yv[k]);
                    }
                }
                Op::Sigmoid { x } => {
                    let yv = &self.vals[id];
                    for (k, gv) in g.iter().enumerate() {
                        adj[*x][k] += gv * yv[k] * (1.0 - yv[k]);
                    }
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (&self.vals[*a], &self.vals[*b]);
                    for (k, gv) in g.iter().enumerate() {
                        adj[*a][k] += gv * bv[k];
                    }
                    for (k, gv) in g.iter().enumerate() {
                        adj[*b][k] += gv * av[k];
                    }
                }
                Op::Add { a, b } => {
                    for (k, gv) in g.iter().enumerate() {
                        adj[*a][k] += gv;
                    }
                    for (k, gv) in g.iter().enumerate() {
                        adj[*b][k] += gv;
                    }
                }
                Op::Nll { x, target, weight } => {
                    let xv = &self.vals[*x];
                    let hi = xv[0].max(xv[1]);
                    let e0 = (xv[0] - hi).exp();
                    let e1 = (xv[1] - hi).exp();
                    let z = e0 + e1;
                    let p = [e0 / z, e1 / z];
                    for k in 0..2 {
                        let onehot = if k == *target { 1.0 } else { 0.0 };
                        adj[*x][k] += g[0] * weight * (p[k] - onehot);
                    }
                }
                Op::Sum { parts } => {
                    for &p in parts {
                        adj[p][0] += g[0];
                    }
                }
            }
        }
    }
}
