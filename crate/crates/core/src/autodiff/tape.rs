use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use rand_core::RngCore;

use super::tensor::{matmul_into, matmul_nt_acc, matmul_tn_acc};
use super::{CsrMatrix, SegmentIndex, Tensor, TensorError};
use crate::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    Add(Var, Var),
    AddN(Vec<Var>),
    AddRow(Var, Var),
    Scale(Var, T),
    Mul(Var, Var),
    SumAll(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Elu(Var),
    GatherRows { x: Var, index: Arc<[u32]> },
    SegmentSoftmax { x: Var, seg: Arc<SegmentIndex> },
    SegmentWeightedSum {
        coeffs: Var,
        values: Var,
        seg: Arc<SegmentIndex>,
    },
    GatherPairSum {
        a: Var,
        ai: Arc<[u32]>,
        b: Var,
        bi: Arc<[u32]>,
    },
    GatherWeightedSum {
        coeffs: Var,
        values: Var,
        index: Arc<[u32]>,
        seg: Arc<SegmentIndex>,
    },
    Mask { x: Var, mask: Vec<T> },
    SparseMatMul { m: Arc<CsrMatrix<T>>, x: Var },
    /// Scalar loss whose gradient w.r.t. `x` was computed in the forward pass.
    Loss { x: Var, local_grad: Tensor<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Record of executed primitive ops. Backward walks it in exact reverse
/// order and accumulates gradients additively across fan-out.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

fn mismatch(op: &'static str, a: (usize, usize), b: (usize, usize)) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a,
        right: b,
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    #[inline]
    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    #[inline]
    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor<T>, kind: Op<T>, rg: bool) -> Result<Var, TensorError> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op });
        }
        self.nodes.push(Node {
            value,
            op: kind,
            requires_grad: rg,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var, TensorError> {
        self.push("param", value, Op::Leaf, true)
    }

    /// Input that never receives a gradient (features, PPR values).
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var, TensorError> {
        self.push("constant", value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(mismatch("matmul", sa, sb));
        }
        let mut out = Tensor::zeros(sa.0, sb.1);
        matmul_into(self.value(a), self.value(b), &mut out);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", out, Op::MatMul(a, b), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::EmptyInput("concat_cols"))?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(mismatch("concat_cols", self.shape(first), s));
            }
            cols += s.1;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let s = self.shape(x);
        if start + len > s.0 {
            return Err(mismatch("slice_rows", s, (start + len, s.1)));
        }
        let data = self.value(x).data()[start * s.1..(start + len) * s.1].to_vec();
        let out = Tensor::new(len, s.1, data)?;
        let rg = self.rg(x);
        self.push("slice_rows", out, Op::SliceRows { x, start }, rg)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let s = self.shape(x);
        if start + len > s.1 {
            return Err(mismatch("slice_cols", s, (s.0, start + len)));
        }
        if start == 0 && len == s.1 {
            return Ok(x);
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(s.0 * len);
        for i in 0..s.0 {
            data.extend_from_slice(&xv.row(i)[start..start + len]);
        }
        let out = Tensor::new(s.0, len, data)?;
        let rg = self.rg(x);
        self.push("slice_cols", out, Op::SliceCols { x, start }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("add", sa, sb));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push("add", out, Op::Add(a, b), rg)
    }

    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::EmptyInput("add_n"))?;
        let mut out = self.value(first).clone();
        for &p in &parts[1..] {
            if self.shape(p) != out.shape() {
                return Err(mismatch("add_n", out.shape(), self.shape(p)));
            }
            out.add_assign(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push("add_n", out, Op::AddN(parts.to_vec()), rg)
    }

    /// `x + 1 * bias` with `bias` a `1 x cols` row.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb != (1, sx.1) {
            return Err(mismatch("add_row", sx, sb));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data();
        for i in 0..sx.0 {
            for (o, &v) in out.row_mut(i).iter_mut().zip(b) {
                *o = *o + v;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        self.push("add_row", out, Op::AddRow(x, bias), rg)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var, TensorError> {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = *v * c;
        }
        let rg = self.rg(x);
        self.push("scale", out, Op::Scale(x, c), rg)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("mul", sa, sb));
        }
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o = *o * v;
        }
        let rg = self.rg(a) || self.rg(b);
        self.push("mul", out, Op::Mul(a, b), rg)
    }

    /// Sum of every element, as a `1 x 1` tensor.
    pub fn sum_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.rg(x);
        self.push("sum_all", Tensor::scalar(s), Op::SumAll(x), rg)
    }

    /// Elementwise average of equally shaped tensors.
    pub fn mean_n(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let s = self.add_n(parts)?;
        self.scale(s, T::one() / T::from_usize(parts.len()))
    }

    fn map(&mut self, op: &'static str, x: Var, kind: Op<T>, f: impl Fn(T) -> T) -> Result<Var, TensorError> {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = f(*v);
        }
        let rg = self.rg(x);
        self.push(op, out, kind, rg)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("relu", x, Op::Relu(x), |v| if v > T::zero() { v } else { T::zero() })
    }

    /// `x` for `x > 0`, `slope * x` otherwise (the slope branch owns 0).
    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var, TensorError> {
        self.map("leaky_relu", x, Op::LeakyRelu(x, slope), |v| {
            if v > T::zero() {
                v
            } else {
                slope * v
            }
        })
    }

    pub fn elu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("elu", x, Op::Elu(x), |v| {
            if v > T::zero() {
                v
            } else {
                v.exp_m1()
            }
        })
    }

    /// Row `k` of the output is row `index[k]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Arc<[u32]>) -> Result<Var, TensorError> {
        let s = self.shape(x);
        if let Some(&bad) = index.iter().find(|&&i| i as usize >= s.0) {
            return Err(TensorError::IndexOutOfRange {
                index: bad as usize,
                len: s.0,
            });
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(index.len() * s.1);
        for &i in index.iter() {
            data.extend_from_slice(xv.row(i as usize));
        }
        let out = Tensor::new(index.len(), s.1, data)?;
        let rg = self.rg(x);
        self.push("gather_rows", out, Op::GatherRows { x, index }, rg)
    }

    /// Softmax within each group, independently per column.
    pub fn segment_softmax(&mut self, x: Var, seg: Arc<SegmentIndex>) -> Result<Var, TensorError> {
        let s = self.shape(x);
        if s.0 != seg.len() {
            return Err(mismatch("segment_softmax", s, (seg.len(), s.1)));
        }
        seg.check_nonempty()?;
        let mut out = Tensor::zeros(s.0, s.1);
        seg.softmax(self.value(x).data(), s.1, out.data_mut());
        let rg = self.rg(x);
        self.push("segment_softmax", out, Op::SegmentSoftmax { x, seg }, rg)
    }

    /// Per-group coefficient-weighted row sums. `coeffs` is `E x H`, `values`
    /// is `E x (H * d)`; column block `h` of `values` is weighted by column
    /// `h` of `coeffs`. Output is `groups x (H * d)`.
    pub fn segment_weighted_sum(
        &mut self,
        coeffs: Var,
        values: Var,
        seg: Arc<SegmentIndex>,
    ) -> Result<Var, TensorError> {
        let (sc, sv) = (self.shape(coeffs), self.shape(values));
        if sc.0 != sv.0 || sc.0 != seg.len() || sc.1 == 0 || sv.1 % sc.1 != 0 {
            return Err(mismatch("segment_weighted_sum", sc, sv));
        }
        let heads = sc.1;
        let d = sv.1 / heads;
        let mut out = Tensor::zeros(seg.num_groups(), sv.1);
        let (c, v) = (self.value(coeffs), self.value(values));
        for (e, &g) in seg.ids().iter().enumerate() {
            let crow = c.row(e);
            let vrow = v.row(e);
            let orow = out.row_mut(g as usize);
            for h in 0..heads {
                let w = crow[h];
                for k in h * d..(h + 1) * d {
                    orow[k] = orow[k] + w * vrow[k];
                }
            }
        }
        let rg = self.rg(coeffs) || self.rg(values);
        self.push(
            "segment_weighted_sum",
            out,
            Op::SegmentWeightedSum {
                coeffs,
                values,
                seg,
            },
            rg,
        )
    }

    /// Row `e` is `a[ai[e]] + b[bi[e]]`; equal to adding two gathers.
    pub fn gather_pair_sum(&mut self, a: Var, ai: Arc<[u32]>, b: Var, bi: Arc<[u32]>) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 || ai.len() != bi.len() {
            return Err(mismatch("gather_pair_sum", sa, sb));
        }
        for (index, len) in [(&ai, sa.0), (&bi, sb.0)] {
            if let Some(&i) = index.iter().find(|&&i| i as usize >= len) {
                return Err(TensorError::IndexOutOfRange { index: i as usize, len });
            }
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(ai.len() * sa.1);
        for (&i, &j) in ai.iter().zip(bi.iter()) {
            data.extend(av.row(i as usize).iter().zip(bv.row(j as usize)).map(|(&x, &y)| x + y));
        }
        let out = Tensor::new(ai.len(), sa.1, data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("gather_pair_sum", out, Op::GatherPairSum { a, ai, b, bi }, rg)
    }

    /// `segment_weighted_sum(coeffs, gather_rows(values, index), seg)` without
    /// materializing the gathered rows.
    pub fn gather_weighted_sum(
        &mut self,
        coeffs: Var,
        values: Var,
        index: Arc<[u32]>,
        seg: Arc<SegmentIndex>,
    ) -> Result<Var, TensorError> {
        let (sc, sv) = (self.shape(coeffs), self.shape(values));
        if sc.0 != index.len() || sc.0 != seg.len() || sc.1 == 0 || sv.1 % sc.1 != 0 {
            return Err(mismatch("gather_weighted_sum", sc, sv));
        }
        if let Some(&i) = index.iter().find(|&&i| i as usize >= sv.0) {
            return Err(TensorError::IndexOutOfRange { index: i as usize, len: sv.0 });
        }
        let heads = sc.1;
        let d = sv.1 / heads;
        let mut out = Tensor::zeros(seg.num_groups(), sv.1);
        let (c, v) = (self.value(coeffs), self.value(values));
        for (e, (&g, &src)) in seg.ids().iter().zip(index.iter()).enumerate() {
            let crow = c.row(e);
            let vrow = v.row(src as usize);
            let orow = out.row_mut(g as usize);
            for h in 0..heads {
                let w = crow[h];
                for (o, &x) in orow[h * d..(h + 1) * d].iter_mut().zip(&vrow[h * d..(h + 1) * d]) {
                    *o = *o + w * x;
                }
            }
        }
        let rg = self.rg(coeffs) || self.rg(values);
        self.push(
            "gather_weighted_sum",
            out,
            Op::GatherWeightedSum {
                coeffs,
                values,
                index,
                seg,
            },
            rg,
        )
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Evaluation mode and `rate == 0` return `x` unchanged.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, rng: &mut impl RngCore) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::RateOutOfRange(rate));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let threshold = (rate * 4_294_967_296.0) as u64;
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let n = self.value(x).len();
        let mut mask = Vec::with_capacity(n);
        for _ in 0..n {
            let u = rng.next_u32() as u64;
            mask.push(if u >= threshold { keep } else { T::zero() });
        }
        let mut out = self.value(x).clone();
        for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
            *o = *o * m;
        }
        let rg = self.rg(x);
        self.push("dropout", out, Op::Mask { x, mask }, rg)
    }

    /// `m * x` for a constant sparse `m`.
    pub fn sparse_matmul(&mut self, m: Arc<CsrMatrix<T>>, x: Var) -> Result<Var, TensorError> {
        let (sm, sx) = (m.shape(), self.shape(x));
        if sm.1 != sx.0 {
            return Err(mismatch("sparse_matmul", sm, sx));
        }
        let out = m.mul_dense(self.value(x));
        let rg = self.rg(x);
        self.push("sparse_matmul", out, Op::SparseMatMul { m, x }, rg)
    }

    /// Mean over the rows in `mask` of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[u32], mask: &[u32]) -> Result<Var, TensorError> {
        if mask.is_empty() {
            return Err(TensorError::EmptyMask);
        }
        let (n, c) = self.shape(logits);
        if labels.len() != n {
            return Err(mismatch("softmax_cross_entropy", (n, c), (labels.len(), 1)));
        }
        let x = self.value(logits);
        let m = T::from_usize(mask.len());
        let mut grad = Tensor::zeros(n, c);
        let mut loss = T::zero();
        for &i in mask {
            let i = i as usize;
            if i >= n {
                return Err(TensorError::IndexOutOfRange { index: i, len: n });
            }
            let label = labels[i] as usize;
            if label >= c {
                return Err(TensorError::IndexOutOfRange { index: label, len: c });
            }
            let row = x.row(i);
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - mx).exp()).sum();
            let lse = mx + z.ln();
            loss = loss + (lse - row[label]);
            let g = grad.row_mut(i);
            for (k, &v) in row.iter().enumerate() {
                g[k] = g[k] + (v - lse).exp() / m;
            }
            g[label] = g[label] - T::one() / m;
        }
        let out = Tensor::scalar(loss / m);
        let rg = self.rg(logits);
        self.push("softmax_cross_entropy", out, Op::Loss { x: logits, local_grad: grad }, rg)
    }

    /// Mean sigmoid binary cross-entropy over every class of the masked rows.
    /// `labels` is row-major `n x c` with 0/1 entries.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[u8], mask: &[u32]) -> Result<Var, TensorError> {
        if mask.is_empty() {
            return Err(TensorError::EmptyMask);
        }
        let (n, c) = self.shape(logits);
        if labels.len() != n * c {
            return Err(mismatch("bce_with_logits", (n, c), (labels.len(), 1)));
        }
        if let Some(pos) = labels.iter().position(|&y| y > 1) {
            return Err(TensorError::NonBinaryLabel(pos));
        }
        let x = self.value(logits);
        let m = T::from_usize(mask.len() * c);
        let mut grad = Tensor::zeros(n, c);
        let mut loss = T::zero();
        for &i in mask {
            let i = i as usize;
            if i >= n {
                return Err(TensorError::IndexOutOfRange { index: i, len: n });
            }
            for k in 0..c {
                let v = x.get(i, k);
                let y = if labels[i * c + k] == 1 { T::one() } else { T::zero() };
                loss = loss + v.max(T::zero()) - v * y + (-v.abs()).exp().ln_1p();
                let sig = T::one() / (T::one() + (-v).exp());
                grad.set(i, k, (sig - y) / m);
            }
        }
        let out = Tensor::scalar(loss / m);
        let rg = self.rg(logits);
        self.push("bce_with_logits", out, Op::Loss { x: logits, local_grad: grad }, rg)
    }

    /// Reverse pass from a `1 x 1` loss. A tape can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, TensorError> {
        if self.consumed {
            return Err(TensorError::AlreadyBackward);
        }
        if self.shape(loss) != (1, 1) {
            return Err(TensorError::NotScalar(self.shape(loss)));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, f: impl FnOnce(&mut Tensor<T>)) {
        if !self.rg(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            let (r, c) = self.shape(v);
            *slot = Some(Tensor::zeros(r, c));
        }
        f(slot.as_mut().expect("initialized above"));
    }

    fn backprop(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, |ga| matmul_nt_acc(g, bv, ga));
                self.acc(grads, *b, |gb| matmul_tn_acc(av, g, gb));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    self.acc(grads, p, |gp| {
                        for i in 0..g.rows() {
                            let src = &g.row(i)[offset..offset + w];
                            for (o, &s) in gp.row_mut(i).iter_mut().zip(src) {
                                *o = *o + s;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceRows { x, start } => {
                let cols = g.cols();
                self.acc(grads, *x, |gx| {
                    let dst = &mut gx.data_mut()[start * cols..(start + g.rows()) * cols];
                    for (o, &s) in dst.iter_mut().zip(g.data()) {
                        *o = *o + s;
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let w = g.cols();
                self.acc(grads, *x, |gx| {
                    for i in 0..g.rows() {
                        let dst = &mut gx.row_mut(i)[*start..*start + w];
                        for (o, &s) in dst.iter_mut().zip(g.row(i)) {
                            *o = *o + s;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |ga| ga.add_assign(g));
                self.acc(grads, *b, |gb| gb.add_assign(g));
            }
            Op::AddN(parts) => {
                for &p in parts {
                    self.acc(grads, p, |gp| gp.add_assign(g));
                }
            }
            Op::AddRow(x, bias) => {
                self.acc(grads, *x, |gx| gx.add_assign(g));
                self.acc(grads, *bias, |gb| {
                    for i in 0..g.rows() {
                        for (o, &s) in gb.data_mut().iter_mut().zip(g.row(i)) {
                            *o = *o + s;
                        }
                    }
                });
            }
            Op::Scale(x, c) => {
                self.acc(grads, *x, |gx| {
                    for (o, &s) in gx.data_mut().iter_mut().zip(g.data()) {
                        *o = *o + *c * s;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, |ga| {
                    for ((o, &s), &v) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *o = *o + s * v;
                    }
                });
                self.acc(grads, *b, |gb| {
                    for ((o, &s), &v) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o = *o + s * v;
                    }
                });
            }
            Op::SumAll(x) => {
                let up = g.get(0, 0);
                self.acc(grads, *x, |gx| {
                    for o in gx.data_mut() {
                        *o = *o + up;
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                self.acc(grads, *x, |gx| {
                    for ((o, &s), &v) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        if v > T::zero() {
                            *o = *o + s;
                        }
                    }
                });
            }
            Op::LeakyRelu(x, slope) => {
                let xv = self.value(*x);
                self.acc(grads, *x, |gx| {
                    for ((o, &s), &v) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *o = *o + if v > T::zero() { s } else { *slope * s };
                    }
                });
            }
            Op::Elu(x) => {
                let xv = self.value(*x);
                self.acc(grads, *x, |gx| {
                    for ((o, &s), &v) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *o = *o + if v > T::zero() { s } else { s * v.exp() };
                    }
                });
            }
            Op::GatherRows { x, index } => {
                self.acc(grads, *x, |gx| {
                    for (k, &i) in index.iter().enumerate() {
                        let src = g.row(k);
                        for (o, &s) in gx.row_mut(i as usize).iter_mut().zip(src) {
                            *o = *o + s;
                        }
                    }
                });
            }
            Op::SegmentSoftmax { x, seg } => {
                let y = &node.value;
                let h = y.cols();
                let mut dot = vec![T::zero(); seg.num_groups() * h];
                for (e, &grp) in seg.ids().iter().enumerate() {
                    for k in 0..h {
                        let d = &mut dot[grp as usize * h + k];
                        *d = *d + y.get(e, k) * g.get(e, k);
                    }
                }
                self.acc(grads, *x, |gx| {
                    for (e, &grp) in seg.ids().iter().enumerate() {
                        for k in 0..h {
                            let v = y.get(e, k) * (g.get(e, k) - dot[grp as usize * h + k]);
                            gx.set(e, k, gx.get(e, k) + v);
                        }
                    }
                });
            }
            Op::GatherPairSum { a, ai, b, bi } => {
                for (x, index) in [(*a, ai), (*b, bi)] {
                    self.acc(grads, x, |gx| {
                        for (k, &i) in index.iter().enumerate() {
                            for (o, &s) in gx.row_mut(i as usize).iter_mut().zip(g.row(k)) {
                                *o = *o + s;
                            }
                        }
                    });
                }
            }
            Op::GatherWeightedSum {
                coeffs,
                values,
                index,
                seg,
            } => {
                let (c, v) = (self.value(*coeffs), self.value(*values));
                let heads = c.cols();
                let d = v.cols() / heads;
                self.acc(grads, *coeffs, |gc| {
                    for (e, (&grp, &src)) in seg.ids().iter().zip(index.iter()).enumerate() {
                        let grow = g.row(grp as usize);
                        let vrow = v.row(src as usize);
                        let out = gc.row_mut(e);
                        for h in 0..heads {
                            let mut s = T::zero();
                            for (&a, &b) in grow[h * d..(h + 1) * d].iter().zip(&vrow[h * d..(h + 1) * d]) {
                                s = s + a * b;
                            }
                            out[h] = out[h] + s;
                        }
                    }
                });
                self.acc(grads, *values, |gv| {
                    for (e, (&grp, &src)) in seg.ids().iter().zip(index.iter()).enumerate() {
                        let grow = g.row(grp as usize);
                        let crow = c.row(e);
                        let out = gv.row_mut(src as usize);
                        for h in 0..heads {
                            let w = crow[h];
                            for (o, &x) in out[h * d..(h + 1) * d].iter_mut().zip(&grow[h * d..(h + 1) * d]) {
                                *o = *o + w * x;
                            }
                        }
                    }
                });
            }
            Op::SegmentWeightedSum {
                coeffs,
                values,
                seg,
            } => {
                let (c, v) = (self.value(*coeffs), self.value(*values));
                let heads = c.cols();
                let d = v.cols() / heads;
                self.acc(grads, *coeffs, |gc| {
                    for (e, &grp) in seg.ids().iter().enumerate() {
                        let grow = g.row(grp as usize);
                        let vrow = v.row(e);
                        for h in 0..heads {
                            let mut s = T::zero();
                            for k in h * d..(h + 1) * d {
                                s = s + grow[k] * vrow[k];
                            }
                            gc.set(e, h, gc.get(e, h) + s);
                        }
                    }
                });
                self.acc(grads, *values, |gv| {
                    for (e, &grp) in seg.ids().iter().enumerate() {
                        let grow = g.row(grp as usize);
                        let crow = c.row(e);
                        let out = gv.row_mut(e);
                        for h in 0..heads {
                            let w = crow[h];
                            for k in h * d..(h + 1) * d {
                                out[k] = out[k] + w * grow[k];
                            }
                        }
                    }
                });
            }
            Op::Mask { x, mask } => {
                self.acc(grads, *x, |gx| {
                    for ((o, &s), &m) in gx.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *o = *o + s * m;
                    }
                });
            }
            Op::SparseMatMul { m, x } => {
                self.acc(grads, *x, |gx| m.mul_transposed_acc(g, gx));
            }
            Op::Loss { x, local_grad } => {
                let up = g.get(0, 0);
                self.acc(grads, *x, |gx| {
                    for (o, &s) in gx.data_mut().iter_mut().zip(local_grad.data()) {
                        *o = *o + up * s;
                    }
                });
            }
        }
    }
}
