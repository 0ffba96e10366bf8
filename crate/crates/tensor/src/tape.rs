use crate::error::{dim_err, Result, TensorError};
use crate::ops::conv::{conv2d_backward, conv2d_forward, ConvGeom};
use crate::ops::loss;
use crate::ops::pool::{self, Windows};
use crate::real::{gemm, Real};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Conv2d,
    Linear,
    Add,
    Mul,
    MulScalar,
    Relu,
    Sigmoid,
    ScaleChannels,
    GlobalAvgPool,
    AvgPool,
    AdaptiveAvgPool,
    MaxPool,
    Upsample,
    Concat,
    SliceChannels,
    Reshape,
    Sum,
    Mean,
    SoftmaxCrossEntropy,
    BceWithLogits,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Conv2d => "conv2d",
            OpKind::Linear => "linear",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::MulScalar => "mul_scalar",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::ScaleChannels => "scale_channels",
            OpKind::GlobalAvgPool => "global_avg_pool",
            OpKind::AvgPool => "avg_pool",
            OpKind::AdaptiveAvgPool => "adaptive_avg_pool",
            OpKind::MaxPool => "max_pool",
            OpKind::Upsample => "upsample_bilinear",
            OpKind::Concat => "concat",
            OpKind::SliceChannels => "slice_channels",
            OpKind::Reshape => "reshape",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
            OpKind::BceWithLogits => "bce_with_logits",
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, T),
    Relu(Var),
    Sigmoid(Var),
    ScaleChannels {
        feat: Var,
        gains: Var,
    },
    GlobalAvgPool(Var),
    Pool {
        x: Var,
        windows: Windows,
        adaptive: bool,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Upsample(Var),
    Concat(Vec<Var>),
    SliceChannels {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxCe {
        logits: Var,
        targets: Vec<u8>,
        probs: Tensor<T>,
        count: usize,
    },
    Bce {
        logits: Var,
        target: Tensor<T>,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Linear { .. } => OpKind::Linear,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::MulScalar(..) => OpKind::MulScalar,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::ScaleChannels { .. } => OpKind::ScaleChannels,
            Op::GlobalAvgPool(_) => OpKind::GlobalAvgPool,
            Op::Pool { adaptive: false, .. } => OpKind::AvgPool,
            Op::Pool { adaptive: true, .. } => OpKind::AdaptiveAvgPool,
            Op::MaxPool { .. } => OpKind::MaxPool,
            Op::Upsample(_) => OpKind::Upsample,
            Op::Concat(_) => OpKind::Concat,
            Op::SliceChannels { .. } => OpKind::SliceChannels,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::SoftmaxCe { .. } => OpKind::SoftmaxCrossEntropy,
            Op::Bce { .. } => OpKind::BceWithLogits,
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// Records operations in execution order for reverse-mode differentiation.
///
/// Every op validates shapes up front and, unless disabled, rejects any
/// non-finite output with an error naming the op and node.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
    fault: Option<(OpKind, f64)>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: true,
            fault: None,
        }
    }

    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    /// Scales every gradient emitted by ops of `kind` by `factor`.
    /// Only meant for negative controls of the gradient checker.
    #[doc(hidden)]
    pub fn corrupt_backward(&mut self, kind: OpKind, factor: f64) {
        self.fault = Some((kind, factor));
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
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

    pub fn op_kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Result<Var> {
        let node = self.nodes.len();
        if self.check_finite && !value.is_finite() {
            return Err(TensorError::NonFinite {
                op: op.kind().name(),
                node,
            });
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(node))
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return dim_err(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    fn rank4(&self, v: Var, op: &str) -> Result<(usize, usize, usize, usize)> {
        self.value(v)
            .dims4()
            .map_err(|_| TensorError::Dimension(format!("{op}: expected N x C x H x W input, got {:?}", self.shape(v))))
    }

    /// Cross-correlation of `x` (N×C×H×W) with `w` (K×C×kh×kw) plus optional bias (K).
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let geom = ConvGeom::new(self.value(x), self.value(w), stride, pad)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.k] {
                return dim_err(format!(
                    "conv2d: bias shape {:?}, expected [{}]",
                    self.shape(b),
                    geom.k
                ));
            }
        }
        let out = conv2d_forward(
            &geom,
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
        );
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(out, Op::Conv2d { x, w, b, geom }, &parents)
    }

    /// `x` (N×In) times `w`ᵀ (`w` is Out×In) plus optional bias (Out).
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return dim_err(format!("linear: input {xs:?} incompatible with weight {ws:?}"));
        }
        let (n, cin, cout) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return dim_err(format!("linear: bias shape {:?}, expected [{cout}]", self.shape(b)));
            }
        }
        let mut out = vec![T::zero(); n * cout];
        gemm(n, cin, cout, self.value(x).data(), false, self.value(w).data(), true, &mut out, false);
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_mut(cout) {
                for (o, &bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
        }
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(Tensor::from_parts(vec![n, cout], out), Op::Linear { x, w, b }, &parents)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::from_parts(self.shape(a).to_vec(), data);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn mul_scalar(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::MulScalar(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(loss::sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    /// Multiplies each channel plane of `feat` (N×C×H×W) by `gains[n, c]` (N×C).
    pub fn scale_channels(&mut self, feat: Var, gains: Var) -> Result<Var> {
        let (n, c, h, w) = self.rank4(feat, "scale_channels")?;
        if self.shape(gains) != [n, c] {
            return dim_err(format!(
                "scale_channels: gains {:?} do not broadcast over features {:?}",
                self.shape(gains),
                self.shape(feat)
            ));
        }
        let plane = h * w;
        let g = self.value(gains).data();
        let data = self
            .value(feat)
            .data()
            .chunks(plane)
            .zip(g)
            .flat_map(|(p, &gv)| p.iter().map(move |&v| v * gv))
            .collect();
        let out = Tensor::from_parts(vec![n, c, h, w], data);
        self.push(out, Op::ScaleChannels { feat, gains }, &[feat, gains])
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        self.rank4(x, "global_avg_pool")?;
        let out = pool::global_avg_pool(self.value(x));
        self.push(out, Op::GlobalAvgPool(x), &[x])
    }

    /// Average pooling without padding; border windows are clamped and only
    /// count in-bounds elements.
    pub fn avg_pool(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let (_, _, h, w) = self.rank4(x, "avg_pool")?;
        if kernel == 0 || stride == 0 {
            return dim_err("avg_pool: kernel and stride must be positive");
        }
        let windows = Windows::Strided { kernel, stride };
        let (oh, ow) = windows.out_dims(h, w, (0, 0));
        let out = pool::avg_pool(self.value(x), &windows, oh, ow);
        self.push(out, Op::Pool { x, windows, adaptive: false }, &[x])
    }

    /// Average pooling onto a fixed `oh x ow` grid.
    pub fn adaptive_avg_pool(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        self.rank4(x, "adaptive_avg_pool")?;
        if oh == 0 || ow == 0 {
            return dim_err("adaptive_avg_pool: output must be at least 1x1");
        }
        let windows = Windows::Adaptive;
        let out = pool::avg_pool(self.value(x), &windows, oh, ow);
        self.push(out, Op::Pool { x, windows, adaptive: true }, &[x])
    }

    pub fn max_pool(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        self.rank4(x, "max_pool")?;
        if kernel == 0 || stride == 0 {
            return dim_err("max_pool: kernel and stride must be positive");
        }
        let (out, argmax) = pool::max_pool(self.value(x), kernel, stride);
        self.push(out, Op::MaxPool { x, argmax }, &[x])
    }

    /// Bilinear resize to `oh x ow` using the `align_corners = false` convention.
    pub fn upsample_bilinear(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        self.rank4(x, "upsample_bilinear")?;
        if oh == 0 || ow == 0 {
            return dim_err(format!("upsample_bilinear: target {oh}x{ow} smaller than 1x1"));
        }
        let out = pool::upsample_bilinear(self.value(x), oh, ow);
        self.push(out, Op::Upsample(x), &[x])
    }

    /// Concatenation along axis 1 (channels), in argument order.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return dim_err("concat: no inputs");
        };
        if parts.len() == 1 {
            // Identity node so that the result is still a distinct var.
            let out = self.value(first).clone();
            return self.push(out, Op::Concat(vec![first]), &[first]);
        }
        let base = self.shape(first).to_vec();
        if base.len() < 2 {
            return dim_err(format!("concat: rank {} input has no channel axis", base.len()));
        }
        let mut channels = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len() || s[0] != base[0] || s[2..] != base[2..] {
                return dim_err(format!(
                    "concat: shape {s:?} incompatible with {base:?} outside the channel axis"
                ));
            }
            channels += s[1];
        }
        let n = base[0];
        let inner: usize = base[2..].iter().product();
        let mut data = Vec::with_capacity(n * channels * inner);
        for b in 0..n {
            for &p in parts {
                let c = self.shape(p)[1];
                data.extend_from_slice(&self.value(p).data()[b * c * inner..(b + 1) * c * inner]);
            }
        }
        let mut shape = base;
        shape[1] = channels;
        self.push(Tensor::from_parts(shape, data), Op::Concat(parts.to_vec()), parts)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_channels(start, len)?;
        self.push(out, Op::SliceChannels { x, start }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        self.push(out, Op::Reshape(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.sum() / T::of(t.numel() as f64);
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Mean softmax cross entropy of `logits` (N×K×H×W) against per-pixel
    /// labels (N·H·W, row-major); label 255 is ignored. An all-ignored batch
    /// has loss 0 and zero gradient.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[u8]) -> Result<Var> {
        let (value, probs, count) = loss::softmax_ce(self.value(logits), targets)?;
        let op = Op::SoftmaxCe {
            logits,
            targets: targets.to_vec(),
            probs,
            count,
        };
        self.push(Tensor::scalar(value), op, &[logits])
    }

    /// Mean binary cross entropy between `logits` and same-shape targets in [0, 1].
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor<T>) -> Result<Var> {
        let value = loss::bce_with_logits(self.value(logits), target)?;
        let op = Op::Bce {
            logits,
            target: target.clone(),
        };
        self.push(Tensor::scalar(value), op, &[logits])
    }

    /// Reverse pass from a scalar `loss`, visiting each recorded node once in
    /// reverse order.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return dim_err(format!(
                "backward: loss must be a scalar, got shape {:?}",
                self.shape(loss)
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss).to_vec(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut emitted = self.local_backward(i, &g);
            if let Some((kind, factor)) = self.fault {
                if kind == node.op.kind() {
                    for (_, t) in emitted.iter_mut() {
                        *t = t.map(|v| v * T::of(factor));
                    }
                }
            }
            for (parent, t) in emitted {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn local_backward(&self, i: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, w, b, geom } => {
                let need = [self.needs(*x), self.needs(*w), b.is_some_and(|b| self.needs(b))];
                let (dx, dw, db) = conv2d_backward(geom, self.value(*x), self.value(*w), g, need);
                let mut out = Vec::new();
                out.extend(dx.map(|t| (*x, t)));
                out.extend(dw.map(|t| (*w, t)));
                if let (Some(b), Some(db)) = (b, db) {
                    out.push((*b, db));
                }
                out
            }
            Op::Linear { x, w, b } => {
                let (xs, ws) = (self.shape(*x), self.shape(*w));
                let (n, cin, cout) = (xs[0], xs[1], ws[0]);
                let mut out = Vec::new();
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); n * cin];
                    gemm(n, cout, cin, g.data(), false, self.value(*w).data(), false, &mut dx, false);
                    out.push((*x, Tensor::from_parts(vec![n, cin], dx)));
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); cout * cin];
                    gemm(cout, n, cin, g.data(), true, self.value(*x).data(), false, &mut dw, false);
                    out.push((*w, Tensor::from_parts(vec![cout, cin], dw)));
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); cout];
                    for row in g.data().chunks(cout) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    out.push((*b, Tensor::from_parts(vec![cout], db)));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let da = g.data().iter().zip(vb).map(|(&gv, &y)| gv * y).collect();
                let db = g.data().iter().zip(va).map(|(&gv, &x)| gv * x).collect();
                let shape = g.shape().to_vec();
                vec![
                    (*a, Tensor::from_parts(shape.clone(), da)),
                    (*b, Tensor::from_parts(shape, db)),
                ]
            }
            Op::MulScalar(a, s) => vec![(*a, g.map(|v| v * *s))],
            Op::Relu(a) => {
                let data = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(&gv, &x)| if x > T::zero() { gv } else { T::zero() })
                    .collect();
                vec![(*a, Tensor::from_parts(g.shape().to_vec(), data))]
            }
            Op::Sigmoid(a) => {
                let data = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&gv, &y)| gv * y * (T::one() - y))
                    .collect();
                vec![(*a, Tensor::from_parts(g.shape().to_vec(), data))]
            }
            Op::ScaleChannels { feat, gains } => {
                let f = self.value(*feat);
                let plane = f.shape()[2] * f.shape()[3];
                let gv = self.value(*gains).data();
                let dfeat = g
                    .data()
                    .chunks(plane)
                    .zip(gv)
                    .flat_map(|(p, &s)| p.iter().map(move |&v| v * s))
                    .collect();
                let dgains = g
                    .data()
                    .chunks(plane)
                    .zip(f.data().chunks(plane))
                    .map(|(gp, fp)| gp.iter().zip(fp).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
                    .collect();
                vec![
                    (*feat, Tensor::from_parts(f.shape().to_vec(), dfeat)),
                    (*gains, Tensor::from_parts(self.shape(*gains).to_vec(), dgains)),
                ]
            }
            Op::GlobalAvgPool(x) => vec![(*x, pool::global_avg_pool_backward(self.shape(*x), g))],
            Op::Pool { x, windows, .. } => {
                vec![(*x, pool::avg_pool_backward(self.shape(*x), windows, g))]
            }
            Op::MaxPool { x, argmax } => {
                vec![(*x, pool::max_pool_backward(self.shape(*x), argmax, g))]
            }
            Op::Upsample(x) => vec![(*x, pool::upsample_bilinear_backward(self.shape(*x), g))],
            Op::Concat(parts) => {
                if parts.len() == 1 {
                    return vec![(parts[0], g.clone())];
                }
                let mut start = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let c = self.shape(p)[1];
                        let t = g.slice_channels(start, c).expect("concat slices are in range");
                        start += c;
                        (p, t)
                    })
                    .collect()
            }
            Op::SliceChannels { x, start } => {
                let xs = self.shape(*x);
                let (n, c) = (xs[0], xs[1]);
                let inner: usize = xs[2..].iter().product();
                let len = g.shape()[1];
                let mut dx = vec![T::zero(); xs.iter().product()];
                for b in 0..n {
                    let dst = (b * c + start) * inner;
                    dx[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[b * len * inner..(b + 1) * len * inner]);
                }
                vec![(*x, Tensor::from_parts(xs.to_vec(), dx))]
            }
            Op::Reshape(x) => vec![(
                *x,
                Tensor::from_parts(self.shape(*x).to_vec(), g.data().to_vec()),
            )],
            Op::Sum(x) => vec![(*x, Tensor::full(self.shape(*x).to_vec(), g.item()))],
            Op::Mean(x) => {
                let n = T::of(self.value(*x).numel() as f64);
                vec![(*x, Tensor::full(self.shape(*x).to_vec(), g.item() / n))]
            }
            Op::SoftmaxCe {
                logits,
                targets,
                probs,
                count,
            } => vec![(
                *logits,
                loss::softmax_ce_backward(probs, targets, *count, g.item()),
            )],
            Op::Bce { logits, target } => vec![(
                *logits,
                loss::bce_with_logits_backward(self.value(*logits), target, g.item()),
            )],
        }
    }
}
