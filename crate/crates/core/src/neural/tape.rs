//! Minimal reverse-mode automatic differentiation on dense row-major
//! matrices. A forward pass appends nodes to a tape; `backward` walks the
//! tape in reverse and accumulates gradients for every node.
//!
//! The op set is exactly what the model needs: affine maps, PReLU, softmax,
//! scaled products, concatenation, row selection, and the two losses.

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Mat { rows: 1, cols: data.len(), data }
    }

    pub fn scalar(v: f64) -> Self {
        Mat { rows: 1, cols: 1, data: vec![v] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dims");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dims");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                let mut sum = 0.0;
                for (a, b) in self.row(i).iter().zip(other.row(j)) {
                    sum += a * b;
                }
                *out.at_mut(i, j) = sum;
            }
        }
        out
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dims");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.at(k, i);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcasts a `[1, n]` row over every row of a `[m, n]` matrix.
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    /// PReLU with a learnable `1x1` slope for the negative part.
    PRelu(NodeId, NodeId),
    SoftmaxRows(NodeId),
    ConcatCols(NodeId, NodeId),
    SelectRow(NodeId, usize),
    /// `-ln(p[0, idx])` of a `[1, n]` probability row.
    NegLogEntry(NodeId, usize),
    /// Mean elementwise Huber loss against a constant target.
    HuberMean { pred: NodeId, target: Mat, delta: f64 },
}

/// Append-only computation graph. Node values are stored on the tape;
/// `backward` returns one gradient matrix per node.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Mat>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.values[id]
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.values[id].len(), 1);
        self.values[id].data[0]
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.values[a].matmul(&self.values[b]);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.values[a].matmul_nt(&self.values[b]);
        self.push(value, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a], &self.values[b]);
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols), "add shapes");
        let mut value = va.clone();
        value.add_assign(vb);
        self.push(value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (&self.values[a], &self.values[row]);
        assert_eq!(vr.rows, 1, "broadcast row must be 1 x n");
        assert_eq!(va.cols, vr.cols, "add_row widths");
        let mut value = va.clone();
        for r in 0..value.rows {
            for c in 0..value.cols {
                *value.at_mut(r, c) += vr.at(0, c);
            }
        }
        self.push(value, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut value = self.values[a].clone();
        for v in &mut value.data {
            *v *= factor;
        }
        self.push(value, Op::Scale(a, factor))
    }

    pub fn prelu(&mut self, a: NodeId, slope: NodeId) -> NodeId {
        let s = self.values[slope].data[0];
        let mut value = self.values[a].clone();
        for v in &mut value.data {
            if *v < 0.0 {
                *v *= s;
            }
        }
        self.push(value, Op::PRelu(a, slope))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.values[a];
        let mut value = src.clone();
        for r in 0..value.rows {
            let row = &mut value.data[r * value.cols..(r + 1) * value.cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a], &self.values[b]);
        assert_eq!(va.rows, vb.rows, "concat_cols row counts");
        let mut value = Mat::zeros(va.rows, va.cols + vb.cols);
        for r in 0..va.rows {
            let dst = &mut value.data[r * (va.cols + vb.cols)..];
            dst[..va.cols].copy_from_slice(va.row(r));
            dst[va.cols..va.cols + vb.cols].copy_from_slice(vb.row(r));
        }
        self.push(value, Op::ConcatCols(a, b))
    }

    pub fn select_row(&mut self, a: NodeId, row: usize) -> NodeId {
        let value = Mat::row_vector(self.values[a].row(row).to_vec());
        self.push(value, Op::SelectRow(a, row))
    }

    pub fn neg_log_entry(&mut self, probs: NodeId, idx: usize) -> NodeId {
        let p = self.values[probs].at(0, idx);
        self.push(Mat::scalar(-p.ln()), Op::NegLogEntry(probs, idx))
    }

    pub fn huber_mean(&mut self, pred: NodeId, target: Mat, delta: f64) -> NodeId {
        let vp = &self.values[pred];
        assert_eq!((vp.rows, vp.cols), (target.rows, target.cols), "huber shapes");
        let mut sum = 0.0;
        for (p, t) in vp.data.iter().zip(&target.data) {
            let e = (p - t).abs();
            sum += if e <= delta { 0.5 * e * e } else { delta * (e - 0.5 * delta) };
        }
        let value = Mat::scalar(sum / vp.len() as f64);
        self.push(value, Op::HuberMean { pred, target, delta })
    }

    /// Reverse accumulation from a scalar `loss` node. Returns one gradient
    /// per node, in node-id order.
    pub fn backward(&self, loss: NodeId) -> Vec<Mat> {
        assert_eq!(self.values[loss].len(), 1, "loss must be scalar");
        let mut grads: Vec<Mat> = self
            .values
            .iter()
            .map(|v| Mat::zeros(v.rows, v.cols))
            .collect();
        grads[loss].data[0] = 1.0;

        for id in (0..=loss).rev() {
            if grads[id].data.iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[id].clone();
            match &self.ops[id] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(&self.values[*b]);
                    let db = self.values[*a].matmul_tn(&g);
                    grads[*a].add_assign(&da);
                    grads[*b].add_assign(&db);
                }
                Op::MatMulNT(a, b) => {
                    // c = a * b^T: da = g * b, db = g^T * a
                    let da = g.matmul(&self.values[*b]);
                    let db = g.matmul_tn(&self.values[*a]);
                    grads[*a].add_assign(&da);
                    grads[*b].add_assign(&db);
                }
                Op::Add(a, b) => {
                    grads[*a].add_assign(&g);
                    grads[*b].add_assign(&g);
                }
                Op::AddRow(a, row) => {
                    grads[*a].add_assign(&g);
                    let gr = &mut grads[*row];
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            gr.data[c] += g.at(r, c);
                        }
                    }
                }
                Op::Scale(a, factor) => {
                    let mut da = g.clone();
                    for v in &mut da.data {
                        *v *= factor;
                    }
                    grads[*a].add_assign(&da);
                }
                Op::PRelu(a, slope) => {
                    let s = self.values[*slope].data[0];
                    let x = &self.values[*a];
                    let mut da = g.clone();
                    let mut ds = 0.0;
                    for i in 0..da.data.len() {
                        if x.data[i] < 0.0 {
                            ds += g.data[i] * x.data[i];
                            da.data[i] *= s;
                        }
                    }
                    grads[*a].add_assign(&da);
                    grads[*slope].data[0] += ds;
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.values[id];
                    let mut da = Mat::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for c in 0..y.cols {
                            *da.at_mut(r, c) = yr[c] * (gr[c] - dot);
                        }
                    }
                    grads[*a].add_assign(&da);
                }
                Op::ConcatCols(a, b) => {
                    let (ca, cb) = (self.values[*a].cols, self.values[*b].cols);
                    let (ga, gb) = {
                        let mut ga = Mat::zeros(g.rows, ca);
                        let mut gb = Mat::zeros(g.rows, cb);
                        for r in 0..g.rows {
                            ga.data[r * ca..(r + 1) * ca].copy_from_slice(&g.row(r)[..ca]);
                            gb.data[r * cb..(r + 1) * cb].copy_from_slice(&g.row(r)[ca..]);
                        }
                        (ga, gb)
                    };
                    grads[*a].add_assign(&ga);
                    grads[*b].add_assign(&gb);
                }
                Op::SelectRow(a, row) => {
                    let ga = &mut grads[*a];
                    let cols = ga.cols;
                    for c in 0..cols {
                        ga.data[row * cols + c] += g.data[c];
                    }
                }
                Op::NegLogEntry(probs, idx) => {
                    let p = self.values[*probs].at(0, *idx);
                    *grads[*probs].at_mut(0, *idx) += -g.data[0] / p;
                }
                Op::HuberMean { pred, target, delta } => {
                    let vp = &self.values[*pred];
                    let scale = g.data[0] / vp.len() as f64;
                    let mut dp = Mat::zeros(vp.rows, vp.cols);
                    for i in 0..vp.data.len() {
                        let e = vp.data[i] - target.data[i];
                        dp.data[i] = scale * e.clamp(-*delta, *delta);
                    }
                    grads[*pred].add_assign(&dp);
                }
            }
        }
        grads
    }
}
