use super::{gemm, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    BatchMatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    Softmax(Var),
    LayerNorm { input: Var, inv_std: Vec<f64> },
    Concat { inputs: Vec<Var>, axis: usize },
    SliceLast { input: Var, start: usize },
    MeanAxis1(Var),
    Sum(Var),
    Mean(Var),
    Minimum(Var, Var),
    Reshape(Var),
    Clamp { input: Var, lo: f64, hi: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Node creation order is a topological order, so the
/// backward pass is a single reverse sweep.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node that requires one.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(&self.shapes[v.0], g.clone()))
    }

    pub fn get_slice(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

/// Split a shape into (outer, axis, inner) extents around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    fn assert_same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{what}: shape mismatch {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
    }

    /// `a[..., k] · w[k, n]`; leading dimensions of `a` are treated as rows.
    pub fn matmul(&mut self, a: Var, w: Var) -> Var {
        let (av, wv) = (self.value(a), self.value(w));
        assert!(
            wv.rank() == 2 && av.cols() == wv.shape()[0],
            "matmul: shape mismatch {:?} x {:?}",
            av.shape(),
            wv.shape()
        );
        let (m, k, n) = (av.rows(), av.cols(), wv.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, wv.data(), false, &mut out, false);
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(a) || self.rg(w);
        self.push(Tensor::new(&shape, out), Op::MatMul(a, w), rg)
    }

    /// Batched `a[B, n, k] · b[B, k, m]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(
            av.rank() == 3
                && bv.rank() == 3
                && av.shape()[0] == bv.shape()[0]
                && av.shape()[2] == bv.shape()[1],
            "bmm: shape mismatch {:?} x {:?}",
            av.shape(),
            bv.shape()
        );
        let (bs, n, k, m) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
        let mut out = vec![0.0; bs * n * m];
        for i in 0..bs {
            small_gemm(
                n,
                k,
                m,
                &av.data()[i * n * k..(i + 1) * n * k],
                false,
                &bv.data()[i * k * m..(i + 1) * k * m],
                false,
                &mut out[i * n * m..(i + 1) * n * m],
            );
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&[bs, n, m], out), Op::BatchMatMul(a, b), rg)
    }

    /// Swap the last two axes (rank 2 or 3).
    pub fn transpose(&mut self, a: Var) -> Var {
        let av = self.value(a);
        assert!(av.rank() >= 2, "transpose: need rank ≥ 2, got {:?}", av.shape());
        let r = av.rank();
        let (n, m) = (av.shape()[r - 2], av.shape()[r - 1]);
        let bs = av.len() / (n * m);
        let mut out = vec![0.0; av.len()];
        for b in 0..bs {
            let src = &av.data()[b * n * m..(b + 1) * n * m];
            let dst = &mut out[b * n * m..(b + 1) * n * m];
            for i in 0..n {
                for j in 0..m {
                    dst[j * n + i] = src[i * m + j];
                }
            }
        }
        let mut shape = av.shape().to_vec();
        shape.swap(r - 2, r - 1);
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, out), Op::Transpose(a), rg)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(av.shape(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(t, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "add");
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "sub");
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "mul");
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "minimum");
        self.zip(a, b, Op::Minimum(a, b), f64::min)
    }

    fn check_row(&self, a: Var, r: Var, what: &str) {
        let (av, rv) = (self.value(a), self.value(r));
        assert!(
            rv.len() == av.cols(),
            "{what}: row vector {:?} does not match last dim of {:?}",
            rv.shape(),
            av.shape()
        );
    }

    /// Broadcast-add a row vector over the last dimension.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        self.check_row(a, r, "add_row");
        let (av, rv) = (self.value(a), self.value(r));
        let c = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + rv.data()[i % c])
            .collect();
        let t = Tensor::new(av.shape(), data);
        let rg = self.rg(a) || self.rg(r);
        self.push(t, Op::AddRow(a, r), rg)
    }

    /// Broadcast-multiply by a row vector over the last dimension.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Var {
        self.check_row(a, r, "mul_row");
        let (av, rv) = (self.value(a), self.value(r));
        let c = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * rv.data()[i % c])
            .collect();
        let t = Tensor::new(av.shape(), data);
        let rg = self.rg(a) || self.rg(r);
        self.push(t, Op::MulRow(a, r), rg)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    /// `ln(1 + eˣ)`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Clamp with straight-through gradient inside `(lo, hi)` and zero outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp { input: a, lo, hi }, |x| x.clamp(lo, hi))
    }

    /// Row-wise softmax over the last dimension.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let c = av.cols();
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
        }
        let t = Tensor::new(av.shape(), out);
        let rg = self.rg(a);
        self.push(t, Op::Softmax(a), rg)
    }

    /// Row-wise normalization to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, a: Var) -> Var {
        const EPS: f64 = 1e-10;
        let av = self.value(a);
        let c = av.cols();
        let mut out = av.data().to_vec();
        let mut inv_std = Vec::with_capacity(av.rows());
        for row in out.chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + EPS).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * is;
            }
            inv_std.push(is);
        }
        let t = Tensor::new(av.shape(), out);
        let rg = self.rg(a);
        self.push(t, Op::LayerNorm { input: a, inv_std }, rg)
    }

    /// Concatenate same-rank tensors along `axis`.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Var {
        assert!(!inputs.is_empty(), "concat of nothing");
        let first = self.shape(inputs[0]).to_vec();
        assert!(axis < first.len(), "concat axis {axis} out of range for {first:?}");
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let ok = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            assert!(ok, "concat: shape mismatch {:?} vs {:?}", first, s);
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let vt = self.value(v);
                let width = vt.shape()[axis] * inner;
                out.extend_from_slice(&vt.data()[o * width..(o + 1) * width]);
            }
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(
            Tensor::new(&shape, out),
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        )
    }

    /// Columns `start..start + len` of the last dimension.
    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        let c = av.cols();
        assert!(
            start + len <= c && len > 0,
            "slice {start}..{} out of range for {:?}",
            start + len,
            av.shape()
        );
        let mut out = Vec::with_capacity(av.rows() * len);
        for row in av.data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, out), Op::SliceLast { input: a, start }, rg)
    }

    /// Mean over axis 1 of a rank-3 tensor: `[B, T, D] → [B, D]`.
    pub fn mean_axis1(&mut self, a: Var) -> Var {
        let av = self.value(a);
        assert_eq!(av.rank(), 3, "mean_axis1 needs rank 3, got {:?}", av.shape());
        let (b, t, d) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        let mut out = vec![0.0; b * d];
        for i in 0..b {
            for j in 0..t {
                let src = &av.data()[(i * t + j) * d..(i * t + j + 1) * d];
                for (o, s) in out[i * d..(i + 1) * d].iter_mut().zip(src) {
                    *o += s / t as f64;
                }
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(&[b, d], out), Op::MeanAxis1(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let s = av.data().iter().sum::<f64>() / av.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = self.value(a).clone().reshape(shape);
        let rg = self.rg(a);
        self.push(t, Op::Reshape(a), rg)
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            self.value(loss).len(),
            1,
            "backward needs a scalar loss, got {:?}",
            self.shape(loss)
        );
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot =
                grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, w) => {
                let (at, wt) = (&self.nodes[a.0].value, &self.nodes[w.0].value);
                let (m, k, n) = (at.rows(), at.cols(), wt.shape()[1]);
                acc(*a, &|da| gemm(m, n, k, g, false, wt.data(), true, da, true));
                acc(*w, &|dw| gemm(k, m, n, at.data(), true, g, false, dw, true));
            }
            Op::BatchMatMul(a, b) => {
                let (at, bt) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (bs, n, k, m) = (at.shape()[0], at.shape()[1], at.shape()[2], bt.shape()[2]);
                acc(*a, &|da| {
                    for i in 0..bs {
                        let gi = &g[i * n * m..(i + 1) * n * m];
                        let bi = &bt.data()[i * k * m..(i + 1) * k * m];
                        small_gemm(n, m, k, gi, false, bi, true, &mut da[i * n * k..(i + 1) * n * k]);
                    }
                });
                acc(*b, &|db| {
                    for i in 0..bs {
                        let gi = &g[i * n * m..(i + 1) * n * m];
                        let ai = &at.data()[i * n * k..(i + 1) * n * k];
                        small_gemm(k, n, m, ai, true, gi, false, &mut db[i * k * m..(i + 1) * k * m]);
                    }
                });
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                let r = s.len();
                // output is [.., m, n]; input was [.., n, m]
                let (m, n) = (s[r - 2], s[r - 1]);
                let bs = g.len() / (n * m);
                acc(*a, &|da| {
                    for b in 0..bs {
                        for i in 0..m {
                            for j in 0..n {
                                da[b * n * m + j * m + i] += g[b * n * m + i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &|d| add_into(d, g));
                acc(*b, &|d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &|d| add_into(d, g));
                acc(*b, &|d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &|d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &|d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * av[i];
                    }
                });
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &|d| {
                    for i in 0..d.len() {
                        if av[i] <= bv[i] {
                            d[i] += g[i];
                        }
                    }
                });
                acc(*b, &|d| {
                    for i in 0..d.len() {
                        if av[i] > bv[i] {
                            d[i] += g[i];
                        }
                    }
                });
            }
            Op::AddRow(a, r) => {
                acc(*a, &|d| add_into(d, g));
                let c = val(*r).len();
                acc(*r, &|d| {
                    for row in g.chunks(c) {
                        add_into(d, row);
                    }
                });
            }
            Op::MulRow(a, r) => {
                let (av, rv) = (val(*a), val(*r));
                let c = rv.len();
                acc(*a, &|d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * rv[i % c];
                    }
                });
                acc(*r, &|d| {
                    for (i, gi) in g.iter().enumerate() {
                        d[i % c] += gi * av[i];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &|d| d.iter_mut().zip(g).for_each(|(d, g)| *d += c * g)),
            Op::AddScalar(a) | Op::Reshape(a) => acc(*a, &|d| add_into(d, g)),
            Op::Tanh(a) => acc(*a, &|d| {
                for i in 0..d.len() {
                    d[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }),
            Op::Relu(a) => {
                let x = val(*a);
                acc(*a, &|d| {
                    for i in 0..d.len() {
                        if x[i] > 0.0 {
                            d[i] += g[i];
                        }
                    }
                });
            }
            Op::Exp(a) => acc(*a, &|d| {
                for i in 0..d.len() {
                    d[i] += g[i] * y[i];
                }
            }),
            Op::Softplus(a) => {
                let x = val(*a);
                acc(*a, &|d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * sigmoid(x[i]);
                    }
                });
            }
            Op::Square(a) => {
                let x = val(*a);
                acc(*a, &|d| {
                    for i in 0..d.len() {
                        d[i] += 2.0 * x[i] * g[i];
                    }
                });
            }
            Op::Clamp { input, lo, hi } => {
                let x = val(*input);
                acc(*input, &|d| {
                    for i in 0..d.len() {
                        if x[i] > *lo && x[i] < *hi {
                            d[i] += g[i];
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let c = node.value.cols();
                acc(*a, &|d| {
                    for ((drow, yrow), grow) in d.chunks_mut(c).zip(y.chunks(c)).zip(g.chunks(c)) {
                        let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                        for j in 0..c {
                            drow[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { input, inv_std } => {
                let c = node.value.cols();
                acc(*input, &|d| {
                    for (r, ((drow, yrow), grow)) in d
                        .chunks_mut(c)
                        .zip(y.chunks(c))
                        .zip(g.chunks(c))
                        .enumerate()
                    {
                        let gm = grow.iter().sum::<f64>() / c as f64;
                        let gy = grow.iter().zip(yrow).map(|(g, y)| g * y).sum::<f64>() / c as f64;
                        for j in 0..c {
                            drow[j] += inv_std[r] * (grow[j] - gm - yrow[j] * gy);
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let out_shape = node.value.shape();
                let (outer, total, inner) = split_axis(out_shape, *axis);
                let mut offset = 0;
                for &v in inputs {
                    let w = self.nodes[v.0].value.shape()[*axis] * inner;
                    acc(v, &|d| {
                        for o in 0..outer {
                            let src = &g[o * total * inner + offset..o * total * inner + offset + w];
                            add_into(&mut d[o * w..(o + 1) * w], src);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceLast { input, start } => {
                let len = node.value.cols();
                let c = self.nodes[input.0].value.cols();
                acc(*input, &|d| {
                    for (drow, grow) in d.chunks_mut(c).zip(g.chunks(len)) {
                        add_into(&mut drow[*start..start + len], grow);
                    }
                });
            }
            Op::MeanAxis1(a) => {
                let s = self.nodes[a.0].value.shape();
                let (b, t, dd) = (s[0], s[1], s[2]);
                acc(*a, &|d| {
                    for i in 0..b {
                        for j in 0..t {
                            let dst = &mut d[(i * t + j) * dd..(i * t + j + 1) * dd];
                            for (x, gi) in dst.iter_mut().zip(&g[i * dd..(i + 1) * dd]) {
                                *x += gi / t as f64;
                            }
                        }
                    }
                });
            }
            Op::Sum(a) => acc(*a, &|d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len() as f64;
                acc(*a, &|d| d.iter_mut().for_each(|d| *d += g[0] / n));
            }
        }
    }
}

fn add_into(d: &mut [f64], g: &[f64]) {
    for (d, g) in d.iter_mut().zip(g) {
        *d += g;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Accumulating product for the tiny per-sample attention matrices, where
/// the blocked kernel's setup cost dominates.
#[allow(clippy::too_many_arguments)]
fn small_gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
) {
    for i in 0..m {
        for p in 0..k {
            let aip = if a_t { a[p * m + i] } else { a[i * k + p] };
            if aip == 0.0 {
                continue;
            }
            for j in 0..n {
                let bpj = if b_t { b[j * k + p] } else { b[p * n + j] };
                c[i * n + j] += aip * bpj;
            }
        }
    }
}
