use crate::lstm::{lstm_backward, lstm_forward, LstmCache};
use crate::tensor::{Result, Tensor, TensorError};
use rand::Rng;

/// Train/inference switch for layers whose behaviour differs between the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Elementwise nonlinearities supported by the activation op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Swish,
    Tanh,
    Sigmoid,
}

/// Handle to a value stored on a [`GradTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorRef(usize);

/// Running mean/variance owned by a batch-norm layer. Updated in train mode,
/// read in inference mode; never differentiated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], var: vec![1.0; channels] }
    }
}

struct BnCache {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    mode: Mode,
}

enum Op {
    Add { a: usize, b: usize },
    AddRows { m: usize, v: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    Sum { a: usize },
    MatMul { a: usize, b: usize },
    MatVec { m: usize, v: usize },
    Conv2d { input: usize, weights: usize, bias: Option<usize>, stride: usize },
    BatchNorm { input: usize, gamma: usize, beta: usize, cache: BnCache },
    Act { a: usize, kind: Activation },
    Softmax { a: usize },
    MaxPool2d { input: usize, argmax: Vec<usize> },
    Concat { inputs: Vec<usize>, axis: usize },
    Dropout { a: usize, mask: Vec<f64> },
    Lstm { seq: usize, w: usize, r: usize, b: usize, cache: LstmCache },
    ReverseRows { a: usize },
    ScaleRows { m: usize, w: usize },
    MeanRows { a: usize },
    PadSpatial { a: usize, out_w: usize },
    Reshape { a: usize },
    CrossEntropy { logits: usize, labels: Vec<usize>, probs: Vec<f64> },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Option<Op>,
}

/// Reverse-mode autodiff tape. Operations append nodes in execution order;
/// [`GradTape::backward`] replays them in exact reverse order, accumulating
/// gradients additively across fan-out, and consumes the op records so a
/// second backward over the same graph is impossible.
#[derive(Default)]
pub struct GradTape {
    nodes: Vec<Node>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input value. Its `requires_grad` flag decides whether
    /// backward will populate a gradient for it.
    pub fn leaf(&mut self, value: Tensor) -> TensorRef {
        self.push(value, None)
    }

    pub fn value(&self, r: TensorRef) -> &Tensor {
        &self.nodes[r.0].value
    }

    pub fn shape(&self, r: TensorRef) -> &[usize] {
        self.nodes[r.0].value.shape()
    }

    /// Gradient of the last backward pass w.r.t. the referenced tensor.
    pub fn grad(&self, r: TensorRef) -> Option<&[f64]> {
        self.nodes[r.0].grad.as_deref()
    }

    /// Drops every node, allowing the tape to be reused for a fresh graph.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Tensor, op: Option<Op>) -> TensorRef {
        self.nodes.push(Node { value, grad: None, op });
        TensorRef(self.nodes.len() - 1)
    }

    fn out(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> TensorRef {
        let mut t = Tensor::new(shape, data).expect("internal shape bookkeeping");
        t.requires_grad = requires_grad;
        self.push(t, Some(op))
    }

    fn needs(&self, r: TensorRef) -> bool {
        self.nodes[r.0].value.requires_grad
    }

    // ── elementwise and linear algebra ──────────────────────────────────

    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Dimension(format!(
                "add: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.needs(a) || self.needs(b);
        Ok(self.out(self.shape(a).to_vec(), data, rg, Op::Add { a: a.0, b: b.0 }))
    }

    /// Adds a rank-1 vector to every row of a rank-2 matrix.
    pub fn add_rows(&mut self, m: TensorRef, v: TensorRef) -> Result<TensorRef> {
        let (rows, cols) = self.as_matrix(m)?;
        if self.shape(v) != [cols] {
            return Err(TensorError::Dimension(format!(
                "add_rows: vector {:?} does not match row width {cols}",
                self.shape(v)
            )));
        }
        let mut data = self.value(m).data().to_vec();
        let vd = self.value(v).data();
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] += vd[c];
            }
        }
        let rg = self.needs(m) || self.needs(v);
        Ok(self.out(self.shape(m).to_vec(), data, rg, Op::AddRows { m: m.0, v: v.0 }))
    }

    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Dimension(format!(
                "mul: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.needs(a) || self.needs(b);
        Ok(self.out(self.shape(a).to_vec(), data, rg, Op::Mul { a: a.0, b: b.0 }))
    }

    pub fn scale(&mut self, a: TensorRef, c: f64) -> TensorRef {
        let data: Vec<f64> = self.value(a).data().iter().map(|x| x * c).collect();
        let rg = self.needs(a);
        self.out(self.shape(a).to_vec(), data, rg, Op::Scale { a: a.0, c })
    }

    /// Sum of all elements, producing a scalar.
    pub fn sum(&mut self, a: TensorRef) -> TensorRef {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.needs(a);
        self.out(vec![1], vec![s], rg, Op::Sum { a: a.0 })
    }

    fn as_matrix(&self, r: TensorRef) -> Result<(usize, usize)> {
        match self.shape(r) {
            [rows, cols] => Ok((*rows, *cols)),
            other => Err(TensorError::Dimension(format!("expected rank-2 tensor, got {other:?}"))),
        }
    }

    /// `a @ b`. `a` may be rank-1 (treated as a single row) or rank-2; `b`
    /// must be rank-2 with matching inner dimension.
    pub fn matmul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let (bk, n) = self.as_matrix(b)?;
        let (m, k, vec_lhs) = match self.shape(a) {
            [k] => (1, *k, true),
            [m, k] => (*m, *k, false),
            other => {
                return Err(TensorError::Dimension(format!(
                    "matmul lhs must be rank 1 or 2, got {other:?}"
                )))
            }
        };
        if k != bk {
            return Err(TensorError::Dimension(format!(
                "matmul: inner dimensions {k} and {bk} differ"
            )));
        }
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = ad[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                let orow = &mut data[i * n..(i + 1) * n];
                for (o, w) in orow.iter_mut().zip(brow) {
                    *o += x * w;
                }
            }
        }
        let shape = if vec_lhs { vec![n] } else { vec![m, n] };
        let rg = self.needs(a) || self.needs(b);
        Ok(self.out(shape, data, rg, Op::MatMul { a: a.0, b: b.0 }))
    }

    /// Dot product of every row of `m` with `v`: `[T,F] x [F] -> [T]`.
    pub fn matvec(&mut self, m: TensorRef, v: TensorRef) -> Result<TensorRef> {
        let (rows, cols) = self.as_matrix(m)?;
        if self.shape(v) != [cols] {
            return Err(TensorError::Dimension(format!(
                "matvec: vector {:?} does not match row width {cols}",
                self.shape(v)
            )));
        }
        let md = self.value(m).data();
        let vd = self.value(v).data();
        let data: Vec<f64> = (0..rows)
            .map(|r| md[r * cols..(r + 1) * cols].iter().zip(vd).map(|(x, y)| x * y).sum())
            .collect();
        let rg = self.needs(m) || self.needs(v);
        Ok(self.out(vec![rows], data, rg, Op::MatVec { m: m.0, v: v.0 }))
    }

    // ── convolutional primitives ────────────────────────────────────────

    /// Valid-padding 2-D convolution over a `[H,W,Cin]` input with a
    /// `[k,k,Cin,Cout]` kernel: output is `[H',W',Cout]` with
    /// `H' = floor((H-k)/stride)+1`.
    pub fn conv2d(
        &mut self,
        input: TensorRef,
        weights: TensorRef,
        bias: Option<TensorRef>,
        stride: usize,
    ) -> Result<TensorRef> {
        if stride == 0 {
            return Err(TensorError::Config("conv2d stride must be positive".into()));
        }
        let [h, w, cin] = *self.shape(input) else {
            return Err(TensorError::Dimension(format!(
                "conv2d input must be [H,W,Cin], got {:?}",
                self.shape(input)
            )));
        };
        let [kh, kw, wcin, cout] = *self.shape(weights) else {
            return Err(TensorError::Dimension(format!(
                "conv2d weights must be [k,k,Cin,Cout], got {:?}",
                self.shape(weights)
            )));
        };
        if kh != kw {
            return Err(TensorError::Dimension(format!("conv2d kernel must be square, got {kh}x{kw}")));
        }
        if wcin != cin {
            return Err(TensorError::Dimension(format!(
                "conv2d: input has {cin} channels but weights expect {wcin}"
            )));
        }
        if h < kh || w < kw {
            return Err(TensorError::Dimension(format!(
                "conv2d: input {h}x{w} smaller than kernel {kh}x{kw}"
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(TensorError::Dimension(format!(
                    "conv2d bias {:?} does not match {cout} output channels",
                    self.shape(b)
                )));
            }
        }
        let oh = (h - kh) / stride + 1;
        let ow = (w - kw) / stride + 1;
        let xd = self.value(input).data();
        let wd = self.value(weights).data();
        let mut data = match bias {
            Some(b) => {
                let bd = self.value(b).data();
                let mut d = vec![0.0; oh * ow * cout];
                for cell in d.chunks_exact_mut(cout) {
                    cell.copy_from_slice(bd);
                }
                d
            }
            None => vec![0.0; oh * ow * cout],
        };
        for orow in 0..oh {
            for ocol in 0..ow {
                let out_base = (orow * ow + ocol) * cout;
                for krow in 0..kh {
                    let in_row = orow * stride + krow;
                    for kcol in 0..kw {
                        let in_col = ocol * stride + kcol;
                        let in_base = (in_row * w + in_col) * cin;
                        let w_base = (krow * kw + kcol) * cin * cout;
                        for ci in 0..cin {
                            let x = xd[in_base + ci];
                            if x == 0.0 {
                                continue;
                            }
                            let wrow = &wd[w_base + ci * cout..w_base + (ci + 1) * cout];
                            let ocell = &mut data[out_base..out_base + cout];
                            for (o, kw_) in ocell.iter_mut().zip(wrow) {
                                *o += x * kw_;
                            }
                        }
                    }
                }
            }
        }
        let rg = self.needs(input) || self.needs(weights) || bias.is_some_and(|b| self.needs(b));
        Ok(self.out(
            vec![oh, ow, cout],
            data,
            rg,
            Op::Conv2d { input: input.0, weights: weights.0, bias: bias.map(|b| b.0), stride },
        ))
    }

    /// Per-channel batch normalization over the last axis. Train mode uses
    /// the statistics of all leading positions and folds them into `running`
    /// by exponential moving average; inference mode reads `running`.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm(
        &mut self,
        input: TensorRef,
        gamma: TensorRef,
        beta: TensorRef,
        running: &mut RunningStats,
        mode: Mode,
        momentum: f64,
        epsilon: f64,
    ) -> Result<TensorRef> {
        if epsilon <= 0.0 {
            return Err(TensorError::Config(format!("batchnorm epsilon must be > 0, got {epsilon}")));
        }
        let shape = self.shape(input).to_vec();
        let &channels = shape.last().ok_or_else(|| {
            TensorError::Dimension("batchnorm input must have at least one axis".into())
        })?;
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return Err(TensorError::Dimension(format!(
                "batchnorm: gamma/beta must be [{channels}]"
            )));
        }
        if running.mean.len() != channels || running.var.len() != channels {
            return Err(TensorError::Dimension(format!(
                "batchnorm: running stats must cover {channels} channels"
            )));
        }
        let positions = self.value(input).numel() / channels;
        let xd = self.value(input).data();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; channels];
                for cell in xd.chunks_exact(channels) {
                    for (m, x) in mean.iter_mut().zip(cell) {
                        *m += x;
                    }
                }
                for m in &mut mean {
                    *m /= positions as f64;
                }
                let mut var = vec![0.0; channels];
                for cell in xd.chunks_exact(channels) {
                    for ((v, x), m) in var.iter_mut().zip(cell).zip(&mean) {
                        let d = x - m;
                        *v += d * d;
                    }
                }
                for v in &mut var {
                    *v /= positions as f64;
                }
                for c in 0..channels {
                    running.mean[c] = momentum * running.mean[c] + (1.0 - momentum) * mean[c];
                    running.var[c] = momentum * running.var[c] + (1.0 - momentum) * var[c];
                }
                (mean, var)
            }
            Mode::Infer => (running.mean.clone(), running.var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut data = vec![0.0; xd.len()];
        for (ocell, xcell) in data.chunks_exact_mut(channels).zip(xd.chunks_exact(channels)) {
            for c in 0..channels {
                ocell[c] = gd[c] * (xcell[c] - mean[c]) * inv_std[c] + bd[c];
            }
        }
        let rg = self.needs(input) || self.needs(gamma) || self.needs(beta);
        let cache = BnCache { mean, inv_std, mode };
        Ok(self.out(
            shape,
            data,
            rg,
            Op::BatchNorm { input: input.0, gamma: gamma.0, beta: beta.0, cache },
        ))
    }

    pub fn activation(&mut self, a: TensorRef, kind: Activation) -> TensorRef {
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .map(|&x| match kind {
                Activation::Swish => x * sigmoid(x),
                Activation::Tanh => x.tanh(),
                Activation::Sigmoid => sigmoid(x),
            })
            .collect();
        let rg = self.needs(a);
        self.out(self.shape(a).to_vec(), data, rg, Op::Act { a: a.0, kind })
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax(&mut self, a: TensorRef) -> Result<TensorRef> {
        let shape = self.shape(a).to_vec();
        let &k = shape.last().ok_or_else(|| {
            TensorError::Dimension("softmax input must have at least one axis".into())
        })?;
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_exact_mut(k) {
            softmax_in_place(row);
        }
        let rg = self.needs(a);
        Ok(self.out(shape, data, rg, Op::Softmax { a: a.0 }))
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    /// The gradient flows to the first (row-major) maximal element of each
    /// window.
    pub fn maxpool2d(&mut self, input: TensorRef) -> Result<TensorRef> {
        let [h, w, c] = *self.shape(input) else {
            return Err(TensorError::Dimension(format!(
                "maxpool2d input must be [H,W,C], got {:?}",
                self.shape(input)
            )));
        };
        if h < 2 || w < 2 {
            return Err(TensorError::Dimension(format!("maxpool2d: input {h}x{w} smaller than 2x2")));
        }
        let oh = h / 2;
        let ow = w / 2;
        let xd = self.value(input).data();
        let mut data = vec![0.0; oh * ow * c];
        let mut argmax = vec![0usize; oh * ow * c];
        for orow in 0..oh {
            for ocol in 0..ow {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for dr in 0..2 {
                        for dc in 0..2 {
                            let idx = ((orow * 2 + dr) * w + (ocol * 2 + dc)) * c + ch;
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (orow * ow + ocol) * c + ch;
                    data[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        let rg = self.needs(input);
        Ok(self.out(vec![oh, ow, c], data, rg, Op::MaxPool2d { input: input.0, argmax }))
    }

    /// Concatenates tensors along `axis`; all other axes must agree.
    pub fn concat(&mut self, inputs: &[TensorRef], axis: usize) -> Result<TensorRef> {
        let first = *inputs.first().ok_or_else(|| {
            TensorError::Input("concat requires at least one input".into())
        })?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::Dimension(format!(
                "concat axis {axis} out of range for rank {}",
                base.len()
            )));
        }
        let mut axis_total = 0;
        for &r in inputs {
            let s = self.shape(r);
            if s.len() != base.len() {
                return Err(TensorError::Dimension(format!(
                    "concat: rank mismatch {:?} vs {base:?}",
                    s
                )));
            }
            for (d, (&a, &b)) in s.iter().zip(&base).enumerate() {
                if d != axis && a != b {
                    return Err(TensorError::Dimension(format!(
                        "concat: inputs disagree on axis {d}: {a} vs {b}"
                    )));
                }
            }
            axis_total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = axis_total;
        // Row-major copy: outer = product of dims before axis, inner = after.
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = vec![0.0; shape.iter().product()];
        let out_stride = axis_total * inner;
        let mut offset = 0;
        for &r in inputs {
            let a_len = self.shape(r)[axis];
            let src = self.value(r).data();
            let src_stride = a_len * inner;
            for o in 0..outer {
                let dst = o * out_stride + offset;
                data[dst..dst + src_stride]
                    .copy_from_slice(&src[o * src_stride..(o + 1) * src_stride]);
            }
            offset += src_stride;
        }
        let rg = inputs.iter().any(|&r| self.needs(r));
        Ok(self.out(shape, data, rg, Op::Concat { inputs: inputs.iter().map(|r| r.0).collect(), axis }))
    }

    /// Inverted dropout: train mode zeroes each element with probability
    /// `rate` and scales survivors by `1/(1-rate)`; inference is the
    /// identity.
    pub fn dropout<R: Rng>(
        &mut self,
        a: TensorRef,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<TensorRef> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Config(format!("dropout rate must be in [0,1), got {rate}")));
        }
        let n = self.value(a).numel();
        let mask: Vec<f64> = match mode {
            Mode::Infer => vec![1.0; n],
            Mode::Train => {
                let keep = 1.0 / (1.0 - rate);
                (0..n)
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                    .collect()
            }
        };
        let data: Vec<f64> =
            self.value(a).data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let rg = self.needs(a);
        Ok(self.out(self.shape(a).to_vec(), data, rg, Op::Dropout { a: a.0, mask }))
    }

    // ── recurrent primitives ────────────────────────────────────────────

    /// Single-direction LSTM over a `[T,D]` sequence with zero initial
    /// state. Gate order along the `4U` axis is input, forget, cell, output.
    /// `w: [D,4U]`, `r: [U,4U]`, `b: [4U]`; output is `[T,U]`.
    pub fn lstm(
        &mut self,
        seq: TensorRef,
        w: TensorRef,
        r: TensorRef,
        b: TensorRef,
    ) -> Result<TensorRef> {
        let (t_steps, d) = self.as_matrix(seq)?;
        if t_steps == 0 {
            return Err(TensorError::EmptySequence("lstm over zero time steps".into()));
        }
        let (wd_rows, four_u) = self.as_matrix(w)?;
        if four_u % 4 != 0 {
            return Err(TensorError::Dimension(format!(
                "lstm gate axis must be a multiple of 4, got {four_u}"
            )));
        }
        let units = four_u / 4;
        if wd_rows != d {
            return Err(TensorError::Dimension(format!(
                "lstm: input width {d} does not match weight rows {wd_rows}"
            )));
        }
        if self.shape(r) != [units, four_u] {
            return Err(TensorError::Dimension(format!(
                "lstm: recurrent weights must be [{units},{four_u}], got {:?}",
                self.shape(r)
            )));
        }
        if self.shape(b) != [four_u] {
            return Err(TensorError::Dimension(format!(
                "lstm: bias must be [{four_u}], got {:?}",
                self.shape(b)
            )));
        }
        let (hidden, cache) = lstm_forward(
            self.value(seq).data(),
            self.value(w).data(),
            self.value(r).data(),
            self.value(b).data(),
            t_steps,
            d,
            units,
        );
        let rg = self.needs(seq) || self.needs(w) || self.needs(r) || self.needs(b);
        Ok(self.out(
            vec![t_steps, units],
            hidden,
            rg,
            Op::Lstm { seq: seq.0, w: w.0, r: r.0, b: b.0, cache },
        ))
    }

    /// Reverses the row order of a rank-2 tensor (time reversal).
    pub fn reverse_rows(&mut self, a: TensorRef) -> Result<TensorRef> {
        let (rows, cols) = self.as_matrix(a)?;
        let src = self.value(a).data();
        let mut data = vec![0.0; src.len()];
        for r in 0..rows {
            data[(rows - 1 - r) * cols..(rows - r) * cols]
                .copy_from_slice(&src[r * cols..(r + 1) * cols]);
        }
        let rg = self.needs(a);
        Ok(self.out(vec![rows, cols], data, rg, Op::ReverseRows { a: a.0 }))
    }

    /// Multiplies row `t` of `m` by `w[t]`.
    pub fn scale_rows(&mut self, m: TensorRef, w: TensorRef) -> Result<TensorRef> {
        let (rows, cols) = self.as_matrix(m)?;
        if self.shape(w) != [rows] {
            return Err(TensorError::Dimension(format!(
                "scale_rows: weights {:?} do not match {rows} rows",
                self.shape(w)
            )));
        }
        let md = self.value(m).data();
        let wd = self.value(w).data();
        let mut data = vec![0.0; md.len()];
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] = md[r * cols + c] * wd[r];
            }
        }
        let rg = self.needs(m) || self.needs(w);
        Ok(self.out(vec![rows, cols], data, rg, Op::ScaleRows { m: m.0, w: w.0 }))
    }

    /// Arithmetic mean over the first axis: `[T,F] -> [F]`.
    pub fn mean_rows(&mut self, a: TensorRef) -> Result<TensorRef> {
        let (rows, cols) = self.as_matrix(a)?;
        let src = self.value(a).data();
        let mut data = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c] += src[r * cols + c];
            }
        }
        for v in &mut data {
            *v /= rows as f64;
        }
        let rg = self.needs(a);
        Ok(self.out(vec![cols], data, rg, Op::MeanRows { a: a.0 }))
    }

    /// Zero-pads the bottom/right of a `[H,W,C]` tensor up to `[out_h,out_w,C]`.
    pub fn pad_spatial(&mut self, a: TensorRef, out_h: usize, out_w: usize) -> Result<TensorRef> {
        let [h, w, c] = *self.shape(a) else {
            return Err(TensorError::Dimension(format!(
                "pad_spatial input must be [H,W,C], got {:?}",
                self.shape(a)
            )));
        };
        if out_h < h || out_w < w {
            return Err(TensorError::Dimension(format!(
                "pad_spatial: target {out_h}x{out_w} smaller than input {h}x{w}"
            )));
        }
        let src = self.value(a).data();
        let mut data = vec![0.0; out_h * out_w * c];
        for row in 0..h {
            let s = row * w * c;
            let d = row * out_w * c;
            data[d..d + w * c].copy_from_slice(&src[s..s + w * c]);
        }
        let rg = self.needs(a);
        Ok(self.out(vec![out_h, out_w, c], data, rg, Op::PadSpatial { a: a.0, out_w }))
    }

    pub fn reshape(&mut self, a: TensorRef, shape: &[usize]) -> Result<TensorRef> {
        let expected: usize = shape.iter().product();
        if expected != self.value(a).numel() {
            return Err(TensorError::Dimension(format!(
                "reshape: {:?} has {} elements, target {shape:?} needs {expected}",
                self.shape(a),
                self.value(a).numel()
            )));
        }
        let data = self.value(a).data().to_vec();
        let rg = self.needs(a);
        Ok(self.out(shape.to_vec(), data, rg, Op::Reshape { a: a.0 }))
    }

    /// Mean negative log softmax probability of the true class. `logits` is
    /// `[K]` with one label or `[B,K]` with `B` labels.
    pub fn cross_entropy(&mut self, logits: TensorRef, labels: &[usize]) -> Result<TensorRef> {
        let (batch, k) = match *self.shape(logits) {
            [k] => (1, k),
            [b, k] => (b, k),
            ref other => {
                return Err(TensorError::Dimension(format!(
                    "cross_entropy logits must be [K] or [B,K], got {other:?}"
                )))
            }
        };
        if labels.len() != batch {
            return Err(TensorError::Input(format!(
                "cross_entropy: {} labels for batch of {batch}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::Input(format!(
                "cross_entropy: label {bad} out of range for {k} classes"
            )));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = 0.0;
        for (row, &label) in probs.chunks_exact_mut(k).zip(labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            loss -= (row[label] / sum).ln();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        loss /= batch as f64;
        let rg = self.needs(logits);
        Ok(self.out(
            vec![1],
            vec![loss],
            rg,
            Op::CrossEntropy { logits: logits.0, labels: labels.to_vec(), probs },
        ))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Populates `grad` on every
    /// `requires_grad` node reachable from `loss` and consumes the recorded
    /// operations; the tape must be [`GradTape::clear`]ed before reuse.
    pub fn backward(&mut self, loss: TensorRef) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(TensorError::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(op) = self.nodes[idx].op.take() else { continue };
            if self.nodes[idx].grad.is_none() {
                continue;
            }
            let g = self.nodes[idx].grad.clone().expect("checked above");
            self.apply_backward(&op, &g);
        }
        Ok(())
    }

    fn add_grad(&mut self, node: usize, delta: &[f64]) {
        if !self.nodes[node].value.requires_grad {
            return;
        }
        let n = self.nodes[node].value.numel();
        let grad = self.nodes[node].grad.get_or_insert_with(|| vec![0.0; n]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn needs_idx(&self, node: usize) -> bool {
        self.nodes[node].value.requires_grad
    }

    fn apply_backward(&mut self, op: &Op, g: &[f64]) {
        match op {
            Op::Add { a, b } => {
                self.add_grad(*a, g);
                self.add_grad(*b, g);
            }
            Op::AddRows { m, v } => {
                self.add_grad(*m, g);
                if self.needs_idx(*v) {
                    let cols = self.nodes[*v].value.numel();
                    let mut dv = vec![0.0; cols];
                    for row in g.chunks_exact(cols) {
                        for (d, x) in dv.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                    self.add_grad(*v, &dv);
                }
            }
            Op::Mul { a, b } => {
                if self.needs_idx(*a) {
                    let da: Vec<f64> =
                        g.iter().zip(self.nodes[*b].value.data()).map(|(x, y)| x * y).collect();
                    self.add_grad(*a, &da);
                }
                if self.needs_idx(*b) {
                    let db: Vec<f64> =
                        g.iter().zip(self.nodes[*a].value.data()).map(|(x, y)| x * y).collect();
                    self.add_grad(*b, &db);
                }
            }
            Op::Scale { a, c } => {
                if self.needs_idx(*a) {
                    let da: Vec<f64> = g.iter().map(|x| x * c).collect();
                    self.add_grad(*a, &da);
                }
            }
            Op::Sum { a } => {
                if self.needs_idx(*a) {
                    let da = vec![g[0]; self.nodes[*a].value.numel()];
                    self.add_grad(*a, &da);
                }
            }
            Op::MatMul { a, b } => self.backward_matmul(*a, *b, g),
            Op::MatVec { m, v } => {
                let cols = self.nodes[*v].value.numel();
                let rows = g.len();
                if self.needs_idx(*m) {
                    let vd = self.nodes[*v].value.data().to_vec();
                    let mut dm = vec![0.0; rows * cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            dm[r * cols + c] = g[r] * vd[c];
                        }
                    }
                    self.add_grad(*m, &dm);
                }
                if self.needs_idx(*v) {
                    let md = self.nodes[*m].value.data();
                    let mut dv = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            dv[c] += g[r] * md[r * cols + c];
                        }
                    }
                    self.add_grad(*v, &dv);
                }
            }
            Op::Conv2d { input, weights, bias, stride } => {
                self.backward_conv2d(*input, *weights, *bias, *stride, g)
            }
            Op::BatchNorm { input, gamma, beta, cache } => {
                self.backward_batchnorm(*input, *gamma, *beta, cache, g)
            }
            Op::Act { a, kind } => {
                if self.needs_idx(*a) {
                    let da: Vec<f64> = self.nodes[*a]
                        .value
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(&x, &gy)| {
                            let d = match kind {
                                Activation::Swish => {
                                    let s = sigmoid(x);
                                    s + x * s * (1.0 - s)
                                }
                                Activation::Tanh => {
                                    let t = x.tanh();
                                    1.0 - t * t
                                }
                                Activation::Sigmoid => {
                                    let s = sigmoid(x);
                                    s * (1.0 - s)
                                }
                            };
                            gy * d
                        })
                        .collect();
                    self.add_grad(*a, &da);
                }
            }
            Op::Softmax { a } => {
                if self.needs_idx(*a) {
                    // Recompute the forward output; the node holding it is
                    // the op's own output, whose value equals softmax(a).
                    let k = *self.nodes[*a].value.shape().last().expect("non-empty");
                    let mut s = self.nodes[*a].value.data().to_vec();
                    for row in s.chunks_exact_mut(k) {
                        softmax_in_place(row);
                    }
                    let mut da = vec![0.0; s.len()];
                    for ((srow, grow), drow) in
                        s.chunks_exact(k).zip(g.chunks_exact(k)).zip(da.chunks_exact_mut(k))
                    {
                        let dot: f64 = srow.iter().zip(grow).map(|(x, y)| x * y).sum();
                        for c in 0..k {
                            drow[c] = srow[c] * (grow[c] - dot);
                        }
                    }
                    self.add_grad(*a, &da);
                }
            }
            Op::MaxPool2d { input, argmax } => {
                if self.needs_idx(*input) {
                    let mut da = vec![0.0; self.nodes[*input].value.numel()];
                    for (o, &src) in argmax.iter().enumerate() {
                        da[src] += g[o];
                    }
                    self.add_grad(*input, &da);
                }
            }
            Op::Concat { inputs, axis } => {
                let base = self.nodes[inputs[0]].value.shape().to_vec();
                let outer: usize = base[..*axis].iter().product();
                let inner: usize = base[*axis + 1..].iter().product();
                let total_axis: usize =
                    inputs.iter().map(|&i| self.nodes[i].value.shape()[*axis]).sum();
                let out_stride = total_axis * inner;
                let mut offset = 0;
                for &i in inputs {
                    let a_len = self.nodes[i].value.shape()[*axis];
                    let src_stride = a_len * inner;
                    if self.needs_idx(i) {
                        let mut da = vec![0.0; self.nodes[i].value.numel()];
                        for o in 0..outer {
                            let s = o * out_stride + offset;
                            da[o * src_stride..(o + 1) * src_stride]
                                .copy_from_slice(&g[s..s + src_stride]);
                        }
                        self.add_grad(i, &da);
                    }
                    offset += src_stride;
                }
            }
            Op::Dropout { a, mask } => {
                if self.needs_idx(*a) {
                    let da: Vec<f64> = g.iter().zip(mask).map(|(x, m)| x * m).collect();
                    self.add_grad(*a, &da);
                }
            }
            Op::Lstm { seq, w, r, b, cache } => self.backward_lstm(*seq, *w, *r, *b, cache, g),
            Op::ReverseRows { a } => {
                if self.needs_idx(*a) {
                    let [rows, cols] = *self.nodes[*a].value.shape() else { unreachable!() };
                    let mut da = vec![0.0; g.len()];
                    for row in 0..rows {
                        da[(rows - 1 - row) * cols..(rows - row) * cols]
                            .copy_from_slice(&g[row * cols..(row + 1) * cols]);
                    }
                    self.add_grad(*a, &da);
                }
            }
            Op::ScaleRows { m, w } => {
                let [rows, cols] = *self.nodes[*m].value.shape() else { unreachable!() };
                if self.needs_idx(*m) {
                    let wd = self.nodes[*w].value.data().to_vec();
                    let mut dm = vec![0.0; rows * cols];
                    for row in 0..rows {
                        for c in 0..cols {
                            dm[row * cols + c] = g[row * cols + c] * wd[row];
                        }
                    }
                    self.add_grad(*m, &dm);
                }
                if self.needs_idx(*w) {
                    let md = self.nodes[*m].value.data();
                    let mut dw = vec![0.0; rows];
                    for row in 0..rows {
                        for c in 0..cols {
                            dw[row] += g[row * cols + c] * md[row * cols + c];
                        }
                    }
                    self.add_grad(*w, &dw);
                }
            }
            Op::MeanRows { a } => {
                if self.needs_idx(*a) {
                    let [rows, cols] = *self.nodes[*a].value.shape() else { unreachable!() };
                    let inv = 1.0 / rows as f64;
                    let mut da = vec![0.0; rows * cols];
                    for row in 0..rows {
                        for c in 0..cols {
                            da[row * cols + c] = g[c] * inv;
                        }
                    }
                    self.add_grad(*a, &da);
                }
            }
            Op::PadSpatial { a, out_w } => {
                if self.needs_idx(*a) {
                    let [h, w, c] = *self.nodes[*a].value.shape() else { unreachable!() };
                    let mut da = vec![0.0; h * w * c];
                    for row in 0..h {
                        let s = row * out_w * c;
                        da[row * w * c..(row + 1) * w * c].copy_from_slice(&g[s..s + w * c]);
                    }
                    self.add_grad(*a, &da);
                }
            }
            Op::Reshape { a } => self.add_grad(*a, g),
            Op::CrossEntropy { logits, labels, probs } => {
                if self.needs_idx(*logits) {
                    let k = probs.len() / labels.len();
                    let scale = g[0] / labels.len() as f64;
                    let mut dl = probs.clone();
                    for (row, &label) in dl.chunks_exact_mut(k).zip(labels) {
                        row[label] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= scale;
                        }
                    }
                    self.add_grad(*logits, &dl);
                }
            }
        }
    }

    fn backward_matmul(&mut self, a: usize, b: usize, g: &[f64]) {
        let a_shape = self.nodes[a].value.shape().to_vec();
        let (m, k) = match a_shape[..] {
            [k] => (1, k),
            [m, k] => (m, k),
            _ => unreachable!(),
        };
        let n = self.nodes[b].value.shape()[1];
        if self.needs_idx(a) {
            // da = g @ b^T
            let bd = self.nodes[b].value.data().to_vec();
            let mut da = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    let brow = &bd[p * n..(p + 1) * n];
                    let grow = &g[i * n..(i + 1) * n];
                    da[i * k + p] = brow.iter().zip(grow).map(|(x, y)| x * y).sum();
                }
            }
            self.add_grad(a, &da);
        }
        if self.needs_idx(b) {
            // db = a^T @ g
            let ad = self.nodes[a].value.data().to_vec();
            let mut db = vec![0.0; k * n];
            for i in 0..m {
                for p in 0..k {
                    let x = ad[i * k + p];
                    if x == 0.0 {
                        continue;
                    }
                    let grow = &g[i * n..(i + 1) * n];
                    let drow = &mut db[p * n..(p + 1) * n];
                    for (d, gy) in drow.iter_mut().zip(grow) {
                        *d += x * gy;
                    }
                }
            }
            self.add_grad(b, &db);
        }
    }

    fn backward_conv2d(
        &mut self,
        input: usize,
        weights: usize,
        bias: Option<usize>,
        stride: usize,
        g: &[f64],
    ) {
        let [h, w, cin] = *self.nodes[input].value.shape() else { unreachable!() };
        let [kh, kw, _, cout] = *self.nodes[weights].value.shape() else { unreachable!() };
        let oh = (h - kh) / stride + 1;
        let ow = (w - kw) / stride + 1;
        let need_in = self.needs_idx(input);
        let need_w = self.needs_idx(weights);
        let xd = self.nodes[input].value.data().to_vec();
        let wd = self.nodes[weights].value.data().to_vec();
        let mut din = vec![0.0; if need_in { h * w * cin } else { 0 }];
        let mut dw = vec![0.0; if need_w { kh * kw * cin * cout } else { 0 }];
        for orow in 0..oh {
            for ocol in 0..ow {
                let gcell = &g[(orow * ow + ocol) * cout..(orow * ow + ocol + 1) * cout];
                for krow in 0..kh {
                    let in_row = orow * stride + krow;
                    for kcol in 0..kw {
                        let in_col = ocol * stride + kcol;
                        let in_base = (in_row * w + in_col) * cin;
                        let w_base = (krow * kw + kcol) * cin * cout;
                        for ci in 0..cin {
                            let x = xd[in_base + ci];
                            let wrow = &wd[w_base + ci * cout..w_base + (ci + 1) * cout];
                            if need_in {
                                din[in_base + ci] +=
                                    wrow.iter().zip(gcell).map(|(a, b)| a * b).sum::<f64>();
                            }
                            if need_w {
                                let dwrow = &mut dw[w_base + ci * cout..w_base + (ci + 1) * cout];
                                for (d, gy) in dwrow.iter_mut().zip(gcell) {
                                    *d += x * gy;
                                }
                            }
                        }
                    }
                }
            }
        }
        if need_in {
            self.add_grad(input, &din);
        }
        if need_w {
            self.add_grad(weights, &dw);
        }
        if let Some(b) = bias {
            if self.needs_idx(b) {
                let mut db = vec![0.0; cout];
                for cell in g.chunks_exact(cout) {
                    for (d, gy) in db.iter_mut().zip(cell) {
                        *d += gy;
                    }
                }
                self.add_grad(b, &db);
            }
        }
    }

    fn backward_batchnorm(
        &mut self,
        input: usize,
        gamma: usize,
        beta: usize,
        cache: &BnCache,
        g: &[f64],
    ) {
        let channels = cache.mean.len();
        let positions = g.len() / channels;
        let xd = self.nodes[input].value.data().to_vec();
        let gd = self.nodes[gamma].value.data().to_vec();

        // Per-channel reductions over x_hat.
        let mut sum_dy = vec![0.0; channels];
        let mut sum_dy_xhat = vec![0.0; channels];
        for (gcell, xcell) in g.chunks_exact(channels).zip(xd.chunks_exact(channels)) {
            for c in 0..channels {
                let xhat = (xcell[c] - cache.mean[c]) * cache.inv_std[c];
                sum_dy[c] += gcell[c];
                sum_dy_xhat[c] += gcell[c] * xhat;
            }
        }
        if self.needs_idx(beta) {
            self.add_grad(beta, &sum_dy);
        }
        if self.needs_idx(gamma) {
            self.add_grad(gamma, &sum_dy_xhat);
        }
        if self.needs_idx(input) {
            let mut din = vec![0.0; g.len()];
            match cache.mode {
                Mode::Train => {
                    // Gradient through the batch statistics:
                    // dx = (gamma*inv_std/N) * (N*dy - sum_dy - xhat*sum_dy_xhat)
                    let n = positions as f64;
                    for ((dcell, gcell), xcell) in din
                        .chunks_exact_mut(channels)
                        .zip(g.chunks_exact(channels))
                        .zip(xd.chunks_exact(channels))
                    {
                        for c in 0..channels {
                            let xhat = (xcell[c] - cache.mean[c]) * cache.inv_std[c];
                            dcell[c] = gd[c] * cache.inv_std[c] / n
                                * (n * gcell[c] - sum_dy[c] - xhat * sum_dy_xhat[c]);
                        }
                    }
                }
                Mode::Infer => {
                    // Running statistics are constants here.
                    for (dcell, gcell) in
                        din.chunks_exact_mut(channels).zip(g.chunks_exact(channels))
                    {
                        for c in 0..channels {
                            dcell[c] = gd[c] * cache.inv_std[c] * gcell[c];
                        }
                    }
                }
            }
            self.add_grad(input, &din);
        }
    }

    fn backward_lstm(
        &mut self,
        seq: usize,
        w: usize,
        r: usize,
        b: usize,
        cache: &LstmCache,
        g: &[f64],
    ) {
        let xd = self.nodes[seq].value.data().to_vec();
        let wd = self.nodes[w].value.data().to_vec();
        let rd = self.nodes[r].value.data().to_vec();
        let grads = lstm_backward(&xd, &wd, &rd, cache, g);
        if self.needs_idx(seq) {
            self.add_grad(seq, &grads.d_seq);
        }
        if self.needs_idx(w) {
            self.add_grad(w, &grads.d_w);
        }
        if self.needs_idx(r) {
            self.add_grad(r, &grads.d_r);
        }
        if self.needs_idx(b) {
            self.add_grad(b, &grads.d_b);
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
