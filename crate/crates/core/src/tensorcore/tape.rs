use super::{Real, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    Affine(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Square(Var),
    Abs(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    RowSoftmax(Var),
    GatherRows { x: Var, idx: Vec<usize> },
    SegmentSum { x: Var, ids: Vec<usize> },
    SegmentMean { x: Var, ids: Vec<usize>, counts: Vec<usize> },
    ReduceSum { x: Var, axis: Option<usize> },
    ReduceMean { x: Var, axis: Option<usize> },
    Reshape(Var),
    ClampStraightThrough(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records primitive applications in evaluation order and replays them in
/// reverse to accumulate gradients on leaves created with `requires_grad`.
///
/// A tape supports exactly one backward pass; build a fresh tape per step.
#[derive(Debug, Default)]
pub struct Tape<T: Real = f64> {
    nodes: Vec<Node<T>>,
    grads: Option<Vec<Option<Vec<T>>>>,
}

fn suffix_of(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn prod(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Gradients are accumulated for it only if `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`. `None` before
    /// backward or for values that do not require gradients.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.as_ref()?.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.value(v).shape().to_vec(), g.clone()).expect("grad shape"))
    }

    // ------------------------------------------------------------------
    // Primitives
    // ------------------------------------------------------------------

    /// `[m, k] · [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (n as isize, 1),
            &mut out,
        );
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    fn broadcast_binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !suffix_of(sa, sb) {
            return Err(TensorError::ShapeMismatch {
                op: name,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let period = vb.len().max(1);
        let data = if vb.is_empty() {
            Vec::new()
        } else {
            va.iter()
                .enumerate()
                .map(|(i, &x)| f(x, vb[i % period]))
                .collect()
        };
        Tensor::new(sa.to_vec(), data)
    }

    /// Elementwise `a + b`; `b`'s shape must be a suffix of `a`'s shape and is
    /// repeated over the leading dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.broadcast_binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.broadcast_binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.broadcast_binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Scales each leading-axis slice of `x` by the matching entry of `w: [n]`.
    pub fn scale_rows(&mut self, x: Var, w: Var) -> Result<Var, TensorError> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.is_empty() || sw != [sx[0]] {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        let xv = self.value(x);
        let width = xv.row_width();
        let wv = self.value(w).data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * wv[i / width.max(1)])
            .collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        Ok(self.push(value, Op::ScaleRows(x, w), &[x, w]))
    }

    /// `scale · x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(value, Op::Affine(x, scale), &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -T::one(), T::zero())
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        });
        self.push(value, Op::Sigmoid(x), &[x])
    }

    /// Natural logarithm. No clamping: non-positive inputs produce `-inf`/NaN.
    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.ln());
        self.push(value, Op::Log(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.exp());
        self.push(value, Op::Exp(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.push(value, Op::Square(x), &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.abs());
        self.push(value, Op::Abs(x), &[x])
    }

    /// Clamps into `[lo, hi]`, passing the upstream gradient through unchanged
    /// (the clamped region takes the gradient at the boundary). Intended for
    /// loss functions only.
    pub fn clamp_straight_through(&mut self, x: Var, lo: T, hi: T) -> Var {
        let value = self.value(x).map(|v| v.max(lo).min(hi));
        self.push(value, Op::ClampStraightThrough(x), &[x])
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = inputs.first().ok_or(TensorError::Empty("concat"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::InvalidAxis {
                op: "concat",
                axis,
                rank: base.len(),
            });
        }
        let mut axis_total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != base.len()
                || s.iter()
                    .zip(&base)
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let outer = prod(&base[..axis]);
        let mut shape = base.clone();
        shape[axis] = axis_total;
        let mut data = Vec::with_capacity(prod(&shape));
        for o in 0..outer {
            for &v in inputs {
                let val = self.value(v);
                let chunk = prod(&val.shape()[axis..]);
                data.extend_from_slice(&val.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Softmax over the last axis.
    pub fn row_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let width = *xv.shape().last().ok_or(TensorError::InvalidAxis {
            op: "row_softmax",
            axis: 0,
            rank: 0,
        })?;
        let mut data = xv.data().to_vec();
        if width > 0 {
            for row in data.chunks_mut(width) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v = *v / sum;
                }
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(value, Op::RowSoftmax(x), &[x]))
    }

    /// Selects leading-axis slices: output row `i` is input row `idx[i]`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let n = *xv.shape().first().ok_or(TensorError::InvalidAxis {
            op: "gather_rows",
            axis: 0,
            rank: 0,
        })?;
        let width = xv.row_width();
        let mut data = Vec::with_capacity(idx.len() * width);
        for &i in idx {
            if i >= n {
                return Err(TensorError::IndexOutOfBounds {
                    op: "gather_rows",
                    index: i,
                    len: n,
                });
            }
            data.extend_from_slice(xv.row(i));
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = idx.len();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            &[x],
        ))
    }

    fn segment_accumulate(
        &self,
        op: &'static str,
        x: Var,
        ids: &[usize],
        num_segments: usize,
    ) -> Result<(Vec<usize>, Vec<T>, Vec<usize>), TensorError> {
        let xv = self.value(x);
        let shape = xv.shape();
        if shape.is_empty() || shape[0] != ids.len() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: shape.to_vec(),
                rhs: vec![ids.len()],
            });
        }
        let width = xv.row_width();
        let mut out = vec![T::zero(); num_segments * width];
        let mut counts = vec![0usize; num_segments];
        for (row, &s) in ids.iter().enumerate() {
            if s >= num_segments {
                return Err(TensorError::IndexOutOfBounds {
                    op,
                    index: s,
                    len: num_segments,
                });
            }
            counts[s] += 1;
            let dst = &mut out[s * width..(s + 1) * width];
            for (d, &v) in dst.iter_mut().zip(xv.row(row)) {
                *d += v;
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[0] = num_segments;
        Ok((out_shape, out, counts))
    }

    /// Sums leading-axis slices into `num_segments` buckets by `ids`.
    pub fn segment_sum(
        &mut self,
        x: Var,
        ids: &[usize],
        num_segments: usize,
    ) -> Result<Var, TensorError> {
        let (shape, data, _) = self.segment_accumulate("segment_sum", x, ids, num_segments)?;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Op::SegmentSum {
                x,
                ids: ids.to_vec(),
            },
            &[x],
        ))
    }

    /// Averages leading-axis slices per segment; empty segments yield zeros.
    pub fn segment_mean(
        &mut self,
        x: Var,
        ids: &[usize],
        num_segments: usize,
    ) -> Result<Var, TensorError> {
        let (shape, mut data, counts) =
            self.segment_accumulate("segment_mean", x, ids, num_segments)?;
        let width = if num_segments == 0 { 0 } else { data.len() / num_segments };
        for (s, &c) in counts.iter().enumerate() {
            if c > 0 {
                let inv = T::one() / T::from_f64(c as f64);
                for v in &mut data[s * width..(s + 1) * width] {
                    *v = *v * inv;
                }
            }
        }
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Op::SegmentMean {
                x,
                ids: ids.to_vec(),
                counts,
            },
            &[x],
        ))
    }

    fn reduce(
        &self,
        op: &'static str,
        x: Var,
        axis: Option<usize>,
    ) -> Result<(Vec<usize>, Vec<T>, usize), TensorError> {
        let xv = self.value(x);
        match axis {
            None => {
                let sum: T = xv.data().iter().copied().sum();
                Ok((Vec::new(), vec![sum], xv.numel()))
            }
            Some(axis) => {
                let shape = xv.shape();
                if axis >= shape.len() {
                    return Err(TensorError::InvalidAxis {
                        op,
                        axis,
                        rank: shape.len(),
                    });
                }
                let (outer, len, inner) = (prod(&shape[..axis]), shape[axis], prod(&shape[axis + 1..]));
                let mut out = vec![T::zero(); outer * inner];
                let d = xv.data();
                for o in 0..outer {
                    for a in 0..len {
                        let src = &d[(o * len + a) * inner..(o * len + a + 1) * inner];
                        for (dst, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *dst += v;
                        }
                    }
                }
                let mut out_shape = shape.to_vec();
                out_shape.remove(axis);
                Ok((out_shape, out, len))
            }
        }
    }

    /// Sum over `axis` (removed from the shape), or over everything to a scalar.
    pub fn reduce_sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        let (shape, data, _) = self.reduce("reduce_sum", x, axis)?;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::ReduceSum { x, axis }, &[x]))
    }

    pub fn reduce_mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        let (shape, mut data, len) = self.reduce("reduce_mean", x, axis)?;
        if len == 0 {
            return Err(TensorError::Empty("reduce_mean"));
        }
        let inv = T::one() / T::from_f64(len as f64);
        for v in data.iter_mut() {
            *v = *v * inv;
        }
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::ReduceMean { x, axis }, &[x]))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        self.reduce_sum(x, None).expect("full reduction is always valid")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    // ------------------------------------------------------------------
    // Backward
    // ------------------------------------------------------------------

    /// Accumulates d(loss)/d(leaf) for every leaf requiring gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.grads.is_some() {
            return Err(TensorError::TapeConsumed);
        }
        let shape = self.shape(loss);
        if prod(shape) != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, contribution: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contribution) {
                    *e += c;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Sums a gradient of shape `a` down to a broadcast operand's length.
    fn reduce_broadcast(g: &[T], period: usize) -> Vec<T> {
        let mut out = vec![T::zero(); period];
        if period > 0 {
            for (i, &v) in g.iter().enumerate() {
                out[i % period] += v;
            }
        }
        out
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.needs(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![T::zero(); m * k];
                    T::gemm(m, n, k, g, (n as isize, 1), bv.data(), (1, n as isize), &mut da);
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    // dB = Aᵀ · G
                    let mut db = vec![T::zero(); k * n];
                    T::gemm(k, m, n, av.data(), (1, k as isize), g, (n as isize, 1), &mut db);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let negate = matches!(node.op, Op::Sub(..));
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.to_vec());
                }
                if self.needs(*b) {
                    let mut db = Self::reduce_broadcast(g, self.value(*b).numel());
                    if negate {
                        db.iter_mut().for_each(|v| *v = -*v);
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let period = bv.len().max(1);
                if self.needs(*a) {
                    let da = g.iter().enumerate().map(|(j, &gv)| gv * bv[j % period]).collect();
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let prodv: Vec<T> = g.iter().zip(av).map(|(&gv, &x)| gv * x).collect();
                    self.accumulate(grads, *b, Self::reduce_broadcast(&prodv, bv.len()));
                }
            }
            Op::ScaleRows(x, w) => {
                let xv = self.value(*x);
                let width = xv.row_width().max(1);
                let wv = self.value(*w).data();
                if self.needs(*x) {
                    let dx = g.iter().enumerate().map(|(j, &gv)| gv * wv[j / width]).collect();
                    self.accumulate(grads, *x, dx);
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); wv.len()];
                    for (j, (&gv, &x)) in g.iter().zip(xv.data()).enumerate() {
                        dw[j / width] += gv * x;
                    }
                    self.accumulate(grads, *w, dw);
                }
            }
            Op::Affine(x, scale) => {
                let dx = g.iter().map(|&gv| gv * *scale).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let dx = g
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let dx = g.iter().zip(out).map(|(&gv, &y)| gv * y * (T::one() - y)).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Log(x) => {
                let xv = self.value(*x).data();
                let dx = g.iter().zip(xv).map(|(&gv, &v)| gv / v).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Exp(x) => {
                let dx = g.iter().zip(out).map(|(&gv, &y)| gv * y).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                let two = T::one() + T::one();
                let dx = g.iter().zip(xv).map(|(&gv, &v)| gv * two * v).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Abs(x) => {
                let xv = self.value(*x).data();
                let dx = g
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &v)| {
                        if v > T::zero() {
                            gv
                        } else if v < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::ClampStraightThrough(x) | Op::Reshape(x) => {
                self.accumulate(grads, *x, g.to_vec());
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let outer = prod(&shape[..*axis]);
                let mut parts: Vec<Vec<T>> = inputs
                    .iter()
                    .map(|v| Vec::with_capacity(self.value(*v).numel()))
                    .collect();
                let mut offset = 0;
                for _ in 0..outer {
                    for (p, v) in parts.iter_mut().zip(inputs) {
                        let chunk = prod(&self.value(*v).shape()[*axis..]);
                        p.extend_from_slice(&g[offset..offset + chunk]);
                        offset += chunk;
                    }
                }
                for (p, v) in parts.into_iter().zip(inputs) {
                    self.accumulate(grads, *v, p);
                }
            }
            Op::RowSoftmax(x) => {
                let width = *node.value.shape().last().unwrap_or(&1);
                let mut dx = vec![T::zero(); g.len()];
                if width > 0 {
                    for ((dr, gr), yr) in dx
                        .chunks_mut(width)
                        .zip(g.chunks(width))
                        .zip(out.chunks(width))
                    {
                        let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for ((d, &gv), &y) in dr.iter_mut().zip(gr).zip(yr) {
                            *d = y * (gv - dot);
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::GatherRows { x, idx } => {
                let xv = self.value(*x);
                let width = xv.row_width();
                let mut dx = vec![T::zero(); xv.numel()];
                for (r, &src) in idx.iter().enumerate() {
                    for c in 0..width {
                        dx[src * width + c] += g[r * width + c];
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::SegmentSum { x, ids } | Op::SegmentMean { x, ids, .. } => {
                let xv = self.value(*x);
                let width = xv.row_width();
                let counts = match &node.op {
                    Op::SegmentMean { counts, .. } => Some(counts),
                    _ => None,
                };
                let mut dx = Vec::with_capacity(xv.numel());
                for &s in ids {
                    let src = &g[s * width..(s + 1) * width];
                    match counts {
                        Some(c) => {
                            let inv = T::one() / T::from_f64(c[s] as f64);
                            dx.extend(src.iter().map(|&v| v * inv));
                        }
                        None => dx.extend_from_slice(src),
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::ReduceSum { x, axis } | Op::ReduceMean { x, axis } => {
                let xv = self.value(*x);
                let mean = matches!(node.op, Op::ReduceMean { .. });
                let dx = match axis {
                    None => {
                        let mut v = g[0];
                        if mean {
                            v = v / T::from_f64(xv.numel() as f64);
                        }
                        vec![v; xv.numel()]
                    }
                    Some(axis) => {
                        let shape = xv.shape();
                        let (outer, len, inner) =
                            (prod(&shape[..*axis]), shape[*axis], prod(&shape[axis + 1..]));
                        let scale = if mean {
                            T::one() / T::from_f64(len as f64)
                        } else {
                            T::one()
                        };
                        let mut dx = Vec::with_capacity(xv.numel());
                        for o in 0..outer {
                            for _ in 0..len {
                                dx.extend(g[o * inner..(o + 1) * inner].iter().map(|&v| v * scale));
                            }
                        }
                        dx
                    }
                };
                self.accumulate(grads, *x, dx);
            }
        }
    }
}
