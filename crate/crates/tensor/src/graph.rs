use crate::shape::{broadcast_map, broadcast_shape, permute_map, split_axis};
use crate::{Result, Tensor, TensorError};

/// Variance floor used by [`Graph::layer_norm`]. Rows whose variance falls
/// below it are normalized by `sqrt(LAYER_NORM_EPS)` instead.
pub const LAYER_NORM_EPS: f64 = 1e-8;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
        // (a batch, b batch) for every output batch
        pairs: Vec<(usize, usize)>,
    },
    Permute {
        x: Var,
        map: Vec<usize>,
    },
    Reshape(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        clamped: Vec<bool>,
    },
    Gelu(Var),
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    IndexSelect {
        x: Var,
        rows: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation tape. Nodes are appended in evaluation order, so every node's
/// inputs precede it and a single reverse sweep is a valid backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to graph nodes.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or `None` if the loss does not depend on it.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// c[m,n] += a[m,k] * b[k,n]
fn mm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// da[m,k] += dc[m,n] * b[k,n]^T
fn mm_acc_bt(dc: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let drow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let s: f64 = drow.iter().zip(brow).map(|(x, y)| x * y).sum();
            da[i * k + p] += s;
        }
    }
}

/// db[k,n] += a[m,k]^T * dc[m,n]
fn mm_acc_at(a: &[f64], dc: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let drow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &mut db[p * n..(p + 1) * n];
            for (bv, &dv) in brow.iter_mut().zip(drow) {
                *bv += av * dv;
            }
        }
    }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that takes part in differentiation.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    /// Constant leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(name, &sa, &sb)?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data: Vec<f64> = if sa == sb {
            da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let ma = broadcast_map(&sa, &out_shape);
            let mb = broadcast_map(&sb, &out_shape);
            ma.iter().zip(&mb).map(|(&i, &j)| f(da[i], db[j])).collect()
        };
        let value = Tensor::new(out_shape, data)?;
        self.push(name, value, op, &[a, b])
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * c).collect())?;
        self.push("scale", value, Op::Scale(x, c), &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.mul(x, x)
    }

    /// Matrix product over the last two axes; leading axes broadcast.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            left: sa.clone(),
            right: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(mismatch());
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let bo = broadcast_shape("matmul", ba, bb).map_err(|_| mismatch())?;
        let pairs: Vec<(usize, usize)> = broadcast_map(ba, &bo)
            .into_iter()
            .zip(broadcast_map(bb, &bo))
            .collect();
        let mut out = vec![0.0; pairs.len() * m * n];
        {
            let (da, db) = (self.value(a).data(), self.value(b).data());
            for (bi, &(ia, ib)) in pairs.iter().enumerate() {
                mm_acc(
                    &da[ia * m * k..(ia + 1) * m * k],
                    &db[ib * k * n..(ib + 1) * k * n],
                    &mut out[bi * m * n..(bi + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        let mut shape = bo;
        shape.extend([m, n]);
        let value = Tensor::new(shape, out)?;
        self.push("matmul", value, Op::MatMul { a, b, m, k, n, pairs }, &[a, b])
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let mut seen = vec![false; s.len()];
        if axes.len() != s.len() {
            return Err(TensorError::InvalidAxis {
                axis: axes.len(),
                rank: s.len(),
            });
        }
        for &a in axes {
            if a >= s.len() || seen[a] {
                return Err(TensorError::InvalidAxis { axis: a, rank: s.len() });
            }
            seen[a] = true;
        }
        let map = permute_map(&s, axes);
        let src = self.value(x).data();
        let data: Vec<f64> = map.iter().map(|&i| src[i]).collect();
        let shape: Vec<usize> = axes.iter().map(|&a| s[a]).collect();
        let value = Tensor::new(shape, data)?;
        self.push("permute", value, Op::Permute { x, map }, &[x])
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let r = self.shape(x).len();
        if r < 2 {
            return Err(TensorError::InvalidAxis { axis: 1, rank: r });
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(x, &axes)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(x), &[x])
    }

    /// Softmax along `axis`, computed with the row maximum subtracted.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(TensorError::InvalidAxis { axis, rank: s.len() });
        }
        let (outer, len, inner) = split_axis(&s, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut mx = f64::NEG_INFINITY;
                for l in 0..len {
                    mx = mx.max(src[base + l * inner]);
                }
                let mut z = 0.0;
                for l in 0..len {
                    let e = (src[base + l * inner] - mx).exp();
                    out[base + l * inner] = e;
                    z += e;
                }
                for l in 0..len {
                    out[base + l * inner] /= z;
                }
            }
        }
        let value = Tensor::new(s, out)?;
        self.push("softmax", value, Op::Softmax { x, axis }, &[x])
    }

    /// Normalizes each last-axis vector to zero mean and unit variance, then
    /// applies `gain` and `bias`. Variance is floored at [`LAYER_NORM_EPS`].
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        self.layer_norm_impl(x, gain, bias, false)
    }

    /// As [`Graph::layer_norm`], but a row with variance below
    /// [`LAYER_NORM_EPS`] is an error instead of being clamped.
    pub fn layer_norm_strict(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        self.layer_norm_impl(x, gain, bias, true)
    }

    fn layer_norm_impl(&mut self, x: Var, gain: Var, bias: Var, strict: bool) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or(TensorError::InvalidAxis { axis: 0, rank: 0 })?;
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: s.clone(),
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let rows = src.len() / d.max(1);
        let mut xhat = vec![0.0; src.len()];
        let mut out = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; rows];
        let mut clamped = vec![false; rows];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            if var < LAYER_NORM_EPS {
                if strict {
                    return Err(TensorError::DegenerateVariance {
                        variance: var,
                        threshold: LAYER_NORM_EPS,
                    });
                }
                clamped[r] = true;
            }
            let is = 1.0 / var.max(LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g[c] + b[c];
            }
        }
        let value = Tensor::new(s, out)?;
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
                clamped,
            },
            &[x, gain, bias],
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| gelu(v)).collect())?;
        self.push("gelu", value, Op::Gelu(x), &[x])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*xs.first().ok_or(TensorError::InvalidAxis { axis, rank: 0 })?)
            .to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: first.len(),
            });
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: first.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let value = Tensor::new(shape, out)?;
        self.push("concat", value, Op::Concat { xs: xs.to_vec(), axis }, xs)
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(TensorError::InvalidAxis { axis, rank: s.len() });
        }
        if start + len > s[axis] {
            return Err(TensorError::IndexOutOfRange {
                index: start + len,
                size: s[axis],
            });
        }
        let (outer, n, inner) = split_axis(&s, axis);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let value = Tensor::new(shape, out)?;
        self.push("slice", value, Op::Slice { x, axis, start }, &[x])
    }

    /// Gathers entries of the leading axis; indices may repeat.
    pub fn index_select(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.is_empty() {
            return Err(TensorError::InvalidAxis { axis: 0, rank: 0 });
        }
        let inner: usize = s[1..].iter().product();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows.len() * inner);
        for &r in rows {
            if r >= s[0] {
                return Err(TensorError::IndexOutOfRange { index: r, size: s[0] });
            }
            out.extend_from_slice(&src[r * inner..(r + 1) * inner]);
        }
        let mut shape = s;
        shape[0] = rows.len();
        let value = Tensor::new(shape, out)?;
        self.push(
            "index_select",
            value,
            Op::IndexSelect {
                x,
                rows: rows.to_vec(),
            },
            &[x],
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(v), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let v = t.data().iter().sum::<f64>() / t.numel().max(1) as f64;
        self.push("mean", Tensor::scalar(v), Op::Mean(x), &[x])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(TensorError::NotScalar(root.value.shape().to_vec()));
        }
        if !root.requires_grad {
            return Err(TensorError::DetachedLeaf);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].requires_grad)
                    .map(|data| Tensor::new(self.nodes[i].value.shape().to_vec(), data))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out_shape = node.value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate_broadcast(*a, out_shape, g, 1.0, grads);
                self.accumulate_broadcast(*b, out_shape, g, 1.0, grads);
            }
            Op::Sub(a, b) => {
                self.accumulate_broadcast(*a, out_shape, g, 1.0, grads);
                self.accumulate_broadcast(*b, out_shape, g, -1.0, grads);
            }
            Op::Mul(a, b) => {
                for (this, other) in [(*a, *b), (*b, *a)] {
                    if !self.requires_grad(this) {
                        continue;
                    }
                    let so = self.shape(other);
                    let ov = self.value(other).data();
                    let prod: Vec<f64> = if so == out_shape {
                        g.iter().zip(ov).map(|(x, y)| x * y).collect()
                    } else {
                        let m = broadcast_map(so, out_shape);
                        g.iter().zip(&m).map(|(x, &j)| x * ov[j]).collect()
                    };
                    self.accumulate_broadcast(this, out_shape, &prod, 1.0, grads);
                }
            }
            Op::Scale(x, c) => {
                let buf = self.grad_buf(*x, grads);
                for (d, &v) in buf.iter_mut().zip(g) {
                    *d += c * v;
                }
            }
            Op::MatMul { a, b, m, k, n, pairs } => {
                let (m, k, n) = (*m, *k, *n);
                if self.requires_grad(*a) {
                    let bv = self.value(*b).data();
                    let buf = self.grad_buf(*a, grads);
                    for (bi, &(ia, ib)) in pairs.iter().enumerate() {
                        mm_acc_bt(
                            &g[bi * m * n..(bi + 1) * m * n],
                            &bv[ib * k * n..(ib + 1) * k * n],
                            &mut buf[ia * m * k..(ia + 1) * m * k],
                            m,
                            k,
                            n,
                        );
                    }
                }
                if self.requires_grad(*b) {
                    let av = self.value(*a).data();
                    let buf = self.grad_buf(*b, grads);
                    for (bi, &(ia, ib)) in pairs.iter().enumerate() {
                        mm_acc_at(
                            &av[ia * m * k..(ia + 1) * m * k],
                            &g[bi * m * n..(bi + 1) * m * n],
                            &mut buf[ib * k * n..(ib + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                }
            }
            Op::Permute { x, map } => {
                let buf = self.grad_buf(*x, grads);
                for (&i, &v) in map.iter().zip(g) {
                    buf[i] += v;
                }
            }
            Op::Reshape(x) => {
                let buf = self.grad_buf(*x, grads);
                for (d, &v) in buf.iter_mut().zip(g) {
                    *d += v;
                }
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = split_axis(out_shape, *axis);
                let buf = self.grad_buf(*x, grads);
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let dot: f64 = (0..len)
                            .map(|l| g[base + l * inner] * y[base + l * inner])
                            .sum();
                        for l in 0..len {
                            let idx = base + l * inner;
                            buf[idx] += y[idx] * (g[idx] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
                clamped,
            } => {
                let d = *out_shape.last().unwrap();
                let rows = inv_std.len();
                if self.requires_grad(*x) {
                    let gv = self.value(*gain).data();
                    let buf = self.grad_buf(*x, grads);
                    let mut dxhat = vec![0.0; d];
                    for r in 0..rows {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        for c in 0..d {
                            dxhat[c] = gr[c] * gv[c];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dh = if clamped[r] {
                            0.0
                        } else {
                            dxhat.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / d as f64
                        };
                        for c in 0..d {
                            buf[r * d + c] += inv_std[r] * (dxhat[c] - mean_d - hr[c] * mean_dh);
                        }
                    }
                }
                if self.requires_grad(*gain) {
                    let buf = self.grad_buf(*gain, grads);
                    for r in 0..rows {
                        for c in 0..d {
                            buf[c] += g[r * d + c] * xhat[r * d + c];
                        }
                    }
                }
                if self.requires_grad(*bias) {
                    let buf = self.grad_buf(*bias, grads);
                    for r in 0..rows {
                        for c in 0..d {
                            buf[c] += g[r * d + c];
                        }
                    }
                }
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                let buf = self.grad_buf(*x, grads);
                for ((d, &v), &xi) in buf.iter_mut().zip(g).zip(xv) {
                    *d += v * gelu_grad(xi);
                }
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = split_axis(out_shape, *axis);
                let mut offset = 0;
                for &v in xs {
                    let len = self.shape(v)[*axis];
                    if self.requires_grad(v) {
                        let buf = self.grad_buf(v, grads);
                        let chunk = len * inner;
                        for o in 0..outer {
                            let src = &g[o * total * inner + offset * inner..][..chunk];
                            for (d, &s) in buf[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let n = self.shape(*x)[*axis];
                let (outer, len, inner) = split_axis(out_shape, *axis);
                let buf = self.grad_buf(*x, grads);
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    for (d, &s) in buf[dst..dst + len * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            Op::IndexSelect { x, rows } => {
                let inner: usize = out_shape[1..].iter().product();
                let buf = self.grad_buf(*x, grads);
                for (i, &r) in rows.iter().enumerate() {
                    for c in 0..inner {
                        buf[r * inner + c] += g[i * inner + c];
                    }
                }
            }
            Op::Sum(x) => {
                let buf = self.grad_buf(*x, grads);
                buf.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel().max(1) as f64;
                let buf = self.grad_buf(*x, grads);
                buf.iter_mut().for_each(|d| *d += g[0] / n);
            }
        }
    }

    fn grad_buf<'g>(&self, v: Var, grads: &'g mut [Option<Vec<f64>>]) -> &'g mut Vec<f64> {
        let n = self.nodes[v.0].value.numel();
        grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    /// Adds `coef * g` into the gradient of `v`, summing over axes that
    /// were broadcast to reach `out_shape`.
    fn accumulate_broadcast(
        &self,
        v: Var,
        out_shape: &[usize],
        g: &[f64],
        coef: f64,
        grads: &mut [Option<Vec<f64>>],
    ) {
        if !self.requires_grad(v) {
            return;
        }
        let same = self.shape(v) == out_shape;
        let map = if same {
            None
        } else {
            Some(broadcast_map(self.shape(v), out_shape))
        };
        let buf = self.grad_buf(v, grads);
        match map {
            None => {
                for (d, &x) in buf.iter_mut().zip(g) {
                    *d += coef * x;
                }
            }
            Some(map) => {
                for (&i, &x) in map.iter().zip(g) {
                    buf[i] += coef * x;
                }
            }
        }
    }
}
