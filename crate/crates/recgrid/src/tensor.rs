//! Minimal reverse-mode automatic differentiation core.
//!
//! A `Tape` is an arena of nodes recorded in topological order during the
//! forward pass and replayed in reverse by `backward`. The op set is exactly
//! what the DARC/DAMP architectures need: 3x3 same-padding convolution,
//! channel-wise layer norm, exact-erf GeLU, position-wise linear layers, a
//! tied-transpose head, an embedding gather, fused softmax cross-entropy,
//! and elementwise add/mul/scale/sum plumbing.

use crate::error::{Error, Result};

#[cfg(not(feature = "precision-f32"))]
pub type Real = f64;
#[cfg(feature = "precision-f32")]
pub type Real = f32;

/// Standard normal CDF via the exact erf form (not the tanh approximation).
pub fn normal_cdf(x: Real) -> Real {
    let z = f64::from(x) / std::f64::consts::SQRT_2;
    (0.5 * (1.0 + libm::erf(z))) as Real
}

/// Standard normal PDF.
fn normal_pdf(x: Real) -> Real {
    let xf = f64::from(x);
    ((-0.5 * xf * xf).exp() / (2.0 * std::f64::consts::PI).sqrt()) as Real
}

/// GeLU(x) = x * Phi(x), elementwise on a scalar.
pub fn gelu_scalar(x: Real) -> Real {
    x * normal_cdf(x)
}

fn gelu_grad_scalar(x: Real) -> Real {
    normal_cdf(x) + x * normal_pdf(x)
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, Real),
    Sum(TensorId),
    Gelu(TensorId),
    Linear {
        x: TensorId,
        w: TensorId,
        b: Option<TensorId>,
        rows: usize,
        c_in: usize,
        c_out: usize,
    },
    /// out = x . w^T with w stored K x C; shares storage with the embedding.
    LinearTransposed {
        x: TensorId,
        w: TensorId,
        rows: usize,
        c: usize,
        k: usize,
    },
    Conv2d3x3Nhwc {
        x: TensorId,
        w: TensorId,
        b: TensorId,
        batch: usize,
        c_in: usize,
        c_out: usize,
        h: usize,
        wd: usize,
    },
    LayerNorm {
        x: TensorId,
        gain: TensorId,
        shift: TensorId,
        eps: Real,
        c: usize,
    },
    Embed {
        w: TensorId,
        indices: Vec<usize>,
        c: usize,
    },
    SoftmaxCrossEntropy {
        logits: TensorId,
        targets: Vec<usize>,
        k: usize,
        /// Row-wise softmax saved during forward.
        probs: Vec<Real>,
    },
    NchwToNhwc {
        x: TensorId,
        b: usize,
        c: usize,
        h: usize,
        w: usize,
    },
    NhwcToNchw {
        x: TensorId,
        b: usize,
        c: usize,
        h: usize,
        w: usize,
    },
}

struct Node {
    data: Vec<Real>,
    shape: Vec<usize>,
    grad: Option<Vec<Real>>,
    op: Op,
}

/// Computation tape. Single-threaded; one per training step or forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Tape nodes are short-lived buffers of a few hundred KB. Left at its
/// defaults, glibc serves those via mmap and trims the heap on free, so
/// every training step pays thousands of page faults. Raising both
/// thresholds once keeps the buffers on the reusable heap (measured ~6x
/// on the full backward pass).
fn tune_allocator() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        #[cfg(target_os = "linux")]
        unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 256 * 1024 * 1024);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 256 * 1024 * 1024);
        }
    });
}

impl Tape {
    pub fn new() -> Self {
        tune_allocator();
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, id: TensorId) -> &[Real] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[Real]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Scalar value of a single-element tensor.
    pub fn scalar(&self, id: TensorId) -> Real {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    fn push(&mut self, data: Vec<Real>, shape: Vec<usize>, op: Op) -> TensorId {
        debug_assert_eq!(data.len(), numel(&shape));
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            data,
            shape,
            grad: None,
            op,
        });
        id
    }

    pub fn leaf(&mut self, data: Vec<Real>, shape: Vec<usize>) -> Result<TensorId> {
        if data.len() != numel(&shape) {
            return Err(Error::InvalidShape(format!(
                "leaf data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(self.push(data, shape, Op::Leaf))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::InvalidShape(format!(
                "add: shapes {:?} and {:?} differ",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        let data: Vec<Real> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(data, shape, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::InvalidShape(format!(
                "mul: shapes {:?} and {:?} differ",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        let data: Vec<Real> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(data, shape, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: TensorId, factor: Real) -> TensorId {
        let data: Vec<Real> = self.nodes[a.0].data.iter().map(|x| x * factor).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(data, shape, Op::Scale(a, factor))
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let s: Real = self.nodes[a.0].data.iter().sum();
        self.push(vec![s], vec![1], Op::Sum(a))
    }

    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let data: Vec<Real> = self.nodes[a.0].data.iter().map(|&x| gelu_scalar(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(data, shape, Op::Gelu(a))
    }

    /// Position-wise linear layer: x (... x c_in) . w (c_in x c_out) + b.
    pub fn linear(&mut self, x: TensorId, w: TensorId, b: Option<TensorId>) -> Result<TensorId> {
        let xshape = &self.nodes[x.0].shape;
        let wshape = &self.nodes[w.0].shape;
        if wshape.len() != 2 {
            return Err(Error::InvalidShape(format!(
                "linear weight must be 2-d, got {wshape:?}"
            )));
        }
        let (c_in, c_out) = (wshape[0], wshape[1]);
        let last = *xshape.last().ok_or_else(|| {
            Error::InvalidShape("linear input must have at least one axis".into())
        })?;
        if last != c_in {
            return Err(Error::InvalidShape(format!(
                "linear: input last axis {last} does not match weight rows {c_in}"
            )));
        }
        if let Some(bid) = b {
            if self.nodes[bid.0].shape != [c_out] {
                return Err(Error::InvalidShape(format!(
                    "linear bias must have shape [{c_out}], got {:?}",
                    self.nodes[bid.0].shape
                )));
            }
        }
        let rows = numel(xshape) / c_in;
        let mut out = match b {
            Some(bid) => {
                let bias = &self.nodes[bid.0].data;
                let mut v = Vec::with_capacity(rows * c_out);
                for _ in 0..rows {
                    v.extend_from_slice(bias);
                }
                v
            }
            None => vec![0.0; rows * c_out],
        };
        {
            let xd = &self.nodes[x.0].data;
            let wd = &self.nodes[w.0].data;
            for r in 0..rows {
                let xrow = &xd[r * c_in..(r + 1) * c_in];
                let orow = &mut out[r * c_out..(r + 1) * c_out];
                for (k, &xv) in xrow.iter().enumerate() {
                    let wrow = &wd[k * c_out..(k + 1) * c_out];
                    for (o, &wv) in orow.iter_mut().zip(wrow) {
                        *o += xv * wv;
                    }
                }
            }
        }
        let mut shape = xshape.clone();
        *shape.last_mut().unwrap() = c_out;
        Ok(self.push(
            out,
            shape,
            Op::Linear {
                x,
                w,
                b,
                rows,
                c_in,
                c_out,
            },
        ))
    }

    /// Tied output head: x (... x c) . w^T where w is stored k x c.
    pub fn linear_transposed(&mut self, x: TensorId, w: TensorId) -> Result<TensorId> {
        let xshape = &self.nodes[x.0].shape;
        let wshape = &self.nodes[w.0].shape;
        if wshape.len() != 2 {
            return Err(Error::InvalidShape(format!(
                "transposed-linear weight must be 2-d, got {wshape:?}"
            )));
        }
        let (k, c) = (wshape[0], wshape[1]);
        let last = *xshape.last().ok_or_else(|| {
            Error::InvalidShape("transposed-linear input must have at least one axis".into())
        })?;
        if last != c {
            return Err(Error::InvalidShape(format!(
                "transposed-linear: input last axis {last} does not match weight cols {c}"
            )));
        }
        let rows = numel(xshape) / c;
        let mut out = vec![0.0; rows * k];
        {
            let xd = &self.nodes[x.0].data;
            let wd = &self.nodes[w.0].data;
            for r in 0..rows {
                let xrow = &xd[r * c..(r + 1) * c];
                let orow = &mut out[r * k..(r + 1) * k];
                for (ki, o) in orow.iter_mut().enumerate() {
                    let wrow = &wd[ki * c..(ki + 1) * c];
                    *o = xrow.iter().zip(wrow).map(|(a, b)| a * b).sum();
                }
            }
        }
        let mut shape = xshape.clone();
        *shape.last_mut().unwrap() = k;
        Ok(self.push(out, shape, Op::LinearTransposed { x, w, rows, c, k }))
    }

    /// Embedding gather: out row i = w[indices[i], :]. `leading_shape` gives
    /// the logical layout of the index array, so the output is leading x c.
    pub fn embed(
        &mut self,
        w: TensorId,
        indices: Vec<usize>,
        leading_shape: &[usize],
    ) -> Result<TensorId> {
        let wshape = &self.nodes[w.0].shape;
        if wshape.len() != 2 {
            return Err(Error::InvalidShape(format!(
                "embedding weight must be 2-d, got {wshape:?}"
            )));
        }
        let (k, c) = (wshape[0], wshape[1]);
        if indices.len() != numel(leading_shape) {
            return Err(Error::InvalidShape(format!(
                "embed: {} indices do not fill shape {leading_shape:?}",
                indices.len()
            )));
        }
        for (cell, &idx) in indices.iter().enumerate() {
            if idx >= k {
                return Err(Error::InvalidLabel {
                    color: idx,
                    cell,
                    num_classes: k,
                });
            }
        }
        let wd = &self.nodes[w.0].data;
        let mut out = Vec::with_capacity(indices.len() * c);
        for &idx in &indices {
            out.extend_from_slice(&wd[idx * c..(idx + 1) * c]);
        }
        let mut shape = leading_shape.to_vec();
        shape.push(c);
        Ok(self.push(out, shape, Op::Embed { w, indices, c }))
    }

    /// Same-padding 3x3 convolution, stride 1: input b x c_in x h x w,
    /// weight c_out x c_in x 3 x 3, bias c_out. The kernel itself runs in
    /// channel-last layout; this wrapper converts on both sides.
    pub fn conv2d_3x3(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let xshape = &self.nodes[x.0].shape;
        if xshape.len() != 4 {
            return Err(Error::InvalidShape(format!(
                "conv input must be b x c x h x w, got {xshape:?}"
            )));
        }
        let nhwc = self.nchw_to_nhwc(x)?;
        let out = self.conv2d_3x3_nhwc(nhwc, w, b)?;
        self.nhwc_to_nchw(out)
    }

    /// The conv kernel on channel-last activations: input b x h x w x c_in,
    /// weight c_out x c_in x 3 x 3, bias c_out, output b x h x w x c_out.
    /// Each of the nine taps is a matmul over contiguous runs of rows.
    pub fn conv2d_3x3_nhwc(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let xshape = &self.nodes[x.0].shape;
        let wshape = &self.nodes[w.0].shape;
        if xshape.len() != 4 {
            return Err(Error::InvalidShape(format!(
                "conv input must be b x h x w x c, got {xshape:?}"
            )));
        }
        if wshape.len() != 4 || wshape[2] != 3 || wshape[3] != 3 {
            return Err(Error::InvalidShape(format!(
                "conv weight must be c_out x c_in x 3 x 3, got {wshape:?}"
            )));
        }
        let (batch, h, wd_, c_in) = (xshape[0], xshape[1], xshape[2], xshape[3]);
        let (c_out, w_cin) = (wshape[0], wshape[1]);
        if w_cin != c_in {
            return Err(Error::InvalidShape(format!(
                "conv: weight expects {w_cin} input channels, input has {c_in}"
            )));
        }
        if self.nodes[b.0].shape != [c_out] {
            return Err(Error::InvalidShape(format!(
                "conv bias must have shape [{c_out}], got {:?}",
                self.nodes[b.0].shape
            )));
        }
        if h == 0 || wd_ == 0 {
            return Err(Error::InvalidShape("conv: zero spatial extent".into()));
        }
        let mut out = Vec::with_capacity(batch * h * wd_ * c_out);
        {
            let xd = &self.nodes[x.0].data;
            let wv = &self.nodes[w.0].data;
            let bv = &self.nodes[b.0].data;
            for _ in 0..batch * h * wd_ {
                out.extend_from_slice(bv);
            }
            let taps = repack_taps(wv, c_in, c_out);
            conv_taps_apply(&mut out, xd, &taps, batch, h, wd_, c_in, c_out);
        }
        Ok(self.push(
            out,
            vec![batch, h, wd_, c_out],
            Op::Conv2d3x3Nhwc {
                x,
                w,
                b,
                batch,
                c_in,
                c_out,
                h,
                wd: wd_,
            },
        ))
    }

    /// Layer norm over the trailing (channel) axis with biased variance.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gain: TensorId,
        shift: TensorId,
        eps: Real,
    ) -> Result<TensorId> {
        let xshape = &self.nodes[x.0].shape;
        let c = *xshape.last().ok_or_else(|| {
            Error::InvalidShape("layer_norm input must have at least one axis".into())
        })?;
        if c == 0 {
            return Err(Error::InvalidShape(
                "layer_norm: zero-length channel axis".into(),
            ));
        }
        if eps <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "layer_norm eps must be positive, got {eps}"
            )));
        }
        if self.nodes[gain.0].shape != [c] || self.nodes[shift.0].shape != [c] {
            return Err(Error::InvalidShape(format!(
                "layer_norm gain/shift must have shape [{c}]"
            )));
        }
        let rows = numel(xshape) / c;
        let mut out = vec![0.0; rows * c];
        {
            let xd = &self.nodes[x.0].data;
            let g = &self.nodes[gain.0].data;
            let s = &self.nodes[shift.0].data;
            let cf = c as Real;
            for r in 0..rows {
                let xrow = &xd[r * c..(r + 1) * c];
                let mean: Real = xrow.iter().sum::<Real>() / cf;
                let var: Real = xrow.iter().map(|&v| (v - mean) * (v - mean)).sum::<Real>() / cf;
                let inv_std = 1.0 / (var + eps).sqrt();
                let orow = &mut out[r * c..(r + 1) * c];
                for j in 0..c {
                    orow[j] = g[j] * (xrow[j] - mean) * inv_std + s[j];
                }
            }
        }
        let shape = xshape.clone();
        Ok(self.push(
            out,
            shape,
            Op::LayerNorm {
                x,
                gain,
                shift,
                eps,
                c,
            },
        ))
    }

    /// Mean cross-entropy over all cells: logits (... x k), one target per row.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: TensorId,
        targets: &[usize],
        k: usize,
    ) -> Result<TensorId> {
        let lshape = &self.nodes[logits.0].shape;
        let last = *lshape.last().ok_or_else(|| {
            Error::InvalidShape("cross-entropy logits must have at least one axis".into())
        })?;
        if last != k {
            return Err(Error::InvalidShape(format!(
                "cross-entropy: logits last axis {last} does not match {k} classes"
            )));
        }
        let rows = numel(lshape) / k;
        if targets.len() != rows {
            return Err(Error::InvalidShape(format!(
                "cross-entropy: {} targets for {} logit rows",
                targets.len(),
                rows
            )));
        }
        for (cell, &t) in targets.iter().enumerate() {
            if t >= k {
                return Err(Error::InvalidLabel {
                    color: t,
                    cell,
                    num_classes: k,
                });
            }
        }
        let ld = &self.nodes[logits.0].data;
        let mut probs = vec![0.0; rows * k];
        let mut total = 0.0;
        for r in 0..rows {
            let row = &ld[r * k..(r + 1) * k];
            let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let prow = &mut probs[r * k..(r + 1) * k];
            let mut denom = 0.0;
            for (p, &v) in prow.iter_mut().zip(row) {
                *p = (v - max).exp();
                denom += *p;
            }
            for p in prow.iter_mut() {
                *p /= denom;
            }
            total -= (row[targets[r]] - max) - denom.ln();
        }
        let loss = total / rows as Real;
        Ok(self.push(
            vec![loss],
            vec![1],
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                k,
                probs,
            },
        ))
    }

    /// Layout change b x c x h x w -> b x h x w x c.
    pub fn nchw_to_nhwc(&mut self, x: TensorId) -> Result<TensorId> {
        let sh = &self.nodes[x.0].shape;
        if sh.len() != 4 {
            return Err(Error::InvalidShape(format!(
                "nchw_to_nhwc expects 4-d input, got {sh:?}"
            )));
        }
        let (b, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        let xd = &self.nodes[x.0].data;
        let mut out = vec![0.0; xd.len()];
        for bi in 0..b {
            for ci in 0..c {
                let plane = &xd[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                for (pix, &v) in plane.iter().enumerate() {
                    out[(bi * h * w + pix) * c + ci] = v;
                }
            }
        }
        Ok(self.push(out, vec![b, h, w, c], Op::NchwToNhwc { x, b, c, h, w }))
    }

    /// Layout change b x h x w x c -> b x c x h x w.
    pub fn nhwc_to_nchw(&mut self, x: TensorId) -> Result<TensorId> {
        let sh = &self.nodes[x.0].shape;
        if sh.len() != 4 {
            return Err(Error::InvalidShape(format!(
                "nhwc_to_nchw expects 4-d input, got {sh:?}"
            )));
        }
        let (b, h, w, c) = (sh[0], sh[1], sh[2], sh[3]);
        let xd = &self.nodes[x.0].data;
        let mut out = vec![0.0; xd.len()];
        for bi in 0..b {
            for pix in 0..h * w {
                let row = &xd[(bi * h * w + pix) * c..(bi * h * w + pix + 1) * c];
                for (ci, &v) in row.iter().enumerate() {
                    out[(bi * c + ci) * h * w + pix] = v;
                }
            }
        }
        Ok(self.push(out, vec![b, c, h, w], Op::NhwcToNchw { x, b, c, h, w }))
    }

    /// Reverse sweep from a scalar root, seeding its gradient with 1.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        self.backward_seeded(root, 1.0)
    }

    /// Reverse sweep with an explicit seed on the root gradient. Used for
    /// gradient accumulation with weighted sub-batch losses. Running any
    /// backward twice on one tape is forbidden and returns a contract error.
    pub fn backward_seeded(&mut self, root: TensorId, seed: Real) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already ran on this tape; record a fresh tape instead".into(),
            ));
        }
        if self.nodes[root.0].data.len() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].shape
            )));
        }
        self.backward_done = true;
        self.nodes[root.0].grad = Some(vec![seed]);

        for i in (0..=root.0).rev() {
            let Some(gout) = self.nodes[i].grad.take() else {
                continue;
            };
            // swap the op out so its backward method can borrow the arena
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            match &op {
                Op::Leaf => {}
                Op::Add(a, b) => self.bwd_add(*a, *b, &gout),
                Op::Mul(a, b) => self.bwd_mul(*a, *b, &gout),
                Op::Scale(a, factor) => self.bwd_scale(*a, *factor, &gout),
                Op::Sum(a) => self.bwd_sum(*a, gout[0]),
                Op::Gelu(a) => self.bwd_gelu(*a, &gout),
                Op::Linear {
                    x,
                    w,
                    b,
                    rows,
                    c_in,
                    c_out,
                } => self.bwd_linear(*x, *w, *b, *rows, *c_in, *c_out, &gout),
                Op::LinearTransposed { x, w, rows, c, k } => {
                    self.bwd_linear_transposed(*x, *w, *rows, *c, *k, &gout)
                }
                Op::Conv2d3x3 {
                    x,
                    w,
                    b,
                    batch,
                    c_in,
                    c_out,
                    h,
                    wd,
                } => self.bwd_conv(*x, *w, *b, *batch, *c_in, *c_out, *h, *wd, &gout),
                Op::LayerNorm {
                    x,
                    gain,
                    shift,
                    eps,
                    c,
                } => self.bwd_layer_norm(*x, *gain, *shift, *eps, *c, &gout),
                Op::Embed { w, indices, c } => self.bwd_embed(*w, indices, *c, &gout),
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    k,
                    probs,
                } => self.bwd_cross_entropy(*logits, targets, *k, probs, gout[0]),
                Op::NchwToNhwc { x, b, c, h, w } => {
                    self.bwd_nchw_to_nhwc(*x, *b, *c, *h, *w, &gout)
                }
                Op::NhwcToNchw { x, b, c, h, w } => {
                    self.bwd_nhwc_to_nchw(*x, *b, *c, *h, *w, &gout)
                }
            }
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(gout);
        }
        Ok(())
    }

    fn bwd_add(&mut self, a: TensorId, b: TensorId, gout: &[Real]) {
        self.accumulate(a, |g| add_assign(g, gout));
        self.accumulate(b, |g| add_assign(g, gout));
    }

    fn bwd_mul(&mut self, a: TensorId, b: TensorId, gout: &[Real]) {
        let bd = std::mem::take(&mut self.nodes[b.0].data);
        self.accumulate(a, |g| add_prod(g, gout, &bd));
        self.nodes[b.0].data = bd;
        let ad = std::mem::take(&mut self.nodes[a.0].data);
        self.accumulate(b, |g| add_prod(g, gout, &ad));
        self.nodes[a.0].data = ad;
    }

    fn bwd_scale(&mut self, a: TensorId, factor: Real, gout: &[Real]) {
        self.accumulate(a, |g| add_scaled(g, gout, factor));
    }

    fn bwd_sum(&mut self, a: TensorId, seed: Real) {
        self.accumulate(a, |g| {
            for gv in g.iter_mut() {
                *gv += seed;
            }
        });
    }

    fn bwd_gelu(&mut self, a: TensorId, gout: &[Real]) {
        let ad = std::mem::take(&mut self.nodes[a.0].data);
        self.accumulate(a, |g| {
            let n = g.len();
            assert!(gout.len() == n && ad.len() == n);
            for i in 0..n {
                g[i] += gout[i] * gelu_grad_scalar(ad[i]);
            }
        });
        self.nodes[a.0].data = ad;
    }

    #[allow(clippy::too_many_arguments)]
    fn bwd_linear(
        &mut self,
        x: TensorId,
        w: TensorId,
        b: Option<TensorId>,
        rows: usize,
        c_in: usize,
        c_out: usize,
        gout: &[Real],
    ) {
        let xd = std::mem::take(&mut self.nodes[x.0].data);
        let wd = std::mem::take(&mut self.nodes[w.0].data);
        self.accumulate(x, |gx| {
            for r in 0..rows {
                let grow = &gout[r * c_out..(r + 1) * c_out];
                let gxrow = &mut gx[r * c_in..(r + 1) * c_in];
                for (k, gxv) in gxrow.iter_mut().enumerate() {
                    *gxv += dot(grow, &wd[k * c_out..(k + 1) * c_out]);
                }
            }
        });
        self.accumulate(w, |gw| {
            for r in 0..rows {
                let grow = &gout[r * c_out..(r + 1) * c_out];
                let xrow = &xd[r * c_in..(r + 1) * c_in];
                for (k, &xv) in xrow.iter().enumerate() {
                    add_scaled(&mut gw[k * c_out..(k + 1) * c_out], grow, xv);
                }
            }
        });
        if let Some(bid) = b {
            self.accumulate(bid, |gb| {
                for r in 0..rows {
                    add_assign(gb, &gout[r * c_out..(r + 1) * c_out]);
                }
            });
        }
        self.nodes[x.0].data = xd;
        self.nodes[w.0].data = wd;
    }

    fn bwd_linear_transposed(
        &mut self,
        x: TensorId,
        w: TensorId,
        rows: usize,
        c: usize,
        k: usize,
        gout: &[Real],
    ) {
        let xd = std::mem::take(&mut self.nodes[x.0].data);
        let wd = std::mem::take(&mut self.nodes[w.0].data);
        self.accumulate(x, |gx| {
            for r in 0..rows {
                let grow = &gout[r * k..(r + 1) * k];
                let gxrow = &mut gx[r * c..(r + 1) * c];
                for (ki, &gv) in grow.iter().enumerate() {
                    add_scaled(gxrow, &wd[ki * c..(ki + 1) * c], gv);
                }
            }
        });
        self.accumulate(w, |gw| {
            for r in 0..rows {
                let grow = &gout[r * k..(r + 1) * k];
                let xrow = &xd[r * c..(r + 1) * c];
                for (ki, &gv) in grow.iter().enumerate() {
                    add_scaled(&mut gw[ki * c..(ki + 1) * c], xrow, gv);
                }
            }
        });
        self.nodes[x.0].data = xd;
        self.nodes[w.0].data = wd;
    }

    #[allow(clippy::too_many_arguments)]
    fn bwd_conv(
        &mut self,
        x: TensorId,
        w: TensorId,
        b: TensorId,
        batch: usize,
        c_in: usize,
        c_out: usize,
        h: usize,
        wd: usize,
        gout: &[Real],
    ) {
        let plane = h * wd;
        let xd = std::mem::take(&mut self.nodes[x.0].data);
        let wv = std::mem::take(&mut self.nodes[w.0].data);
        self.accumulate(b, |gb| {
            for bi in 0..batch {
                for o in 0..c_out {
                    let gplane = &gout[(bi * c_out + o) * plane..(bi * c_out + o + 1) * plane];
                    gb[o] += gplane.iter().sum::<Real>();
                }
            }
        });
        self.accumulate(w, |gw| {
            conv_backward_weight(gw, &xd, gout, batch, c_in, c_out, h, wd);
        });
        self.accumulate(x, |gx| {
            conv_backward_input(gx, &wv, gout, batch, c_in, c_out, h, wd);
        });
        self.nodes[x.0].data = xd;
        self.nodes[w.0].data = wv;
    }

    fn bwd_layer_norm(
        &mut self,
        x: TensorId,
        gain: TensorId,
        shift: TensorId,
        eps: Real,
        c: usize,
        gout: &[Real],
    ) {
        let xd = std::mem::take(&mut self.nodes[x.0].data);
        let gd = std::mem::take(&mut self.nodes[gain.0].data);
        let rows = xd.len() / c;
        self.accumulate(shift, |gs| {
            for r in 0..rows {
                add_assign(gs, &gout[r * c..(r + 1) * c]);
            }
        });
        // per-row statistics are recomputed; cheaper than saving them
        self.accumulate(gain, |gg| {
            layer_norm_backward_gain(gg, &xd, gout, rows, c, eps);
        });
        self.accumulate(x, |gx| {
            layer_norm_backward_input(gx, &xd, &gd, gout, rows, c, eps);
        });
        self.nodes[x.0].data = xd;
        self.nodes[gain.0].data = gd;
    }

    fn bwd_embed(&mut self, w: TensorId, indices: &[usize], c: usize, gout: &[Real]) {
        self.accumulate(w, |gw| {
            for (row, &idx) in indices.iter().enumerate() {
                add_assign(&mut gw[idx * c..(idx + 1) * c], &gout[row * c..(row + 1) * c]);
            }
        });
    }

    fn bwd_cross_entropy(
        &mut self,
        logits: TensorId,
        targets: &[usize],
        k: usize,
        probs: &[Real],
        upstream: Real,
    ) {
        let rows = targets.len();
        let scale = upstream / rows as Real;
        self.accumulate(logits, |gl| {
            let n = gl.len();
            assert!(probs.len() == n);
            for i in 0..n {
                gl[i] += scale * probs[i];
            }
            for (r, &t) in targets.iter().enumerate() {
                gl[r * k + t] -= scale;
            }
        });
    }

    fn bwd_nchw_to_nhwc(
        &mut self,
        x: TensorId,
        b: usize,
        c: usize,
        h: usize,
        w: usize,
        gout: &[Real],
    ) {
        self.accumulate(x, |gx| {
            for bi in 0..b {
                for ci in 0..c {
                    let base = (bi * c + ci) * h * w;
                    for pix in 0..h * w {
                        gx[base + pix] += gout[(bi * h * w + pix) * c + ci];
                    }
                }
            }
        });
    }

    fn bwd_nhwc_to_nchw(
        &mut self,
        x: TensorId,
        b: usize,
        c: usize,
        h: usize,
        w: usize,
        gout: &[Real],
    ) {
        self.accumulate(x, |gx| {
            for bi in 0..b {
                for pix in 0..h * w {
                    let base = (bi * h * w + pix) * c;
                    for ci in 0..c {
                        gx[base + ci] += gout[(bi * c + ci) * h * w + pix];
                    }
                }
            }
        });
    }

    fn accumulate<F: FnOnce(&mut [Real])>(&mut self, id: TensorId, f: F) {
        // size from the shape: data may be temporarily taken (a op a cases)
        let len = numel(&self.nodes[id.0].shape);
        let mut g = self.nodes[id.0]
            .grad
            .take()
            .unwrap_or_else(|| vec![0.0; len]);
        f(&mut g);
        self.nodes[id.0].grad = Some(g);
    }
}

#[inline]
fn add_assign(dst: &mut [Real], src: &[Real]) {
    let n = dst.len();
    assert!(src.len() == n);
    for i in 0..n {
        dst[i] += src[i];
    }
}

#[inline]
fn add_scaled(dst: &mut [Real], src: &[Real], k: Real) {
    let n = dst.len();
    assert!(src.len() == n);
    for i in 0..n {
        dst[i] += src[i] * k;
    }
}

#[inline]
fn add_prod(dst: &mut [Real], a: &[Real], b: &[Real]) {
    let n = dst.len();
    assert!(a.len() == n && b.len() == n);
    for i in 0..n {
        dst[i] += a[i] * b[i];
    }
}

#[inline]
fn dot(a: &[Real], b: &[Real]) -> Real {
    let n = a.len();
    assert!(b.len() == n);
    let mut acc = 0.0;
    for i in 0..n {
        acc += a[i] * b[i];
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_weight(
    gw: &mut [Real],
    xd: &[Real],
    gout: &[Real],
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    wd: usize,
) {
    let plane = h * wd;
    for bi in 0..batch {
        for o in 0..c_out {
            let gplane = &gout[(bi * c_out + o) * plane..(bi * c_out + o + 1) * plane];
            for i in 0..c_in {
                let iplane = &xd[(bi * c_in + i) * plane..(bi * c_in + i + 1) * plane];
                let wbase = (o * c_in + i) * 9;
                for dy in 0..3usize {
                    let (y0, y1) = conv_range(dy, h);
                    for dx in 0..3usize {
                        let (x0, x1) = conv_range(dx, wd);
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let grow = &gplane[y * wd + x0..y * wd + x1];
                            let ibase = (y + dy - 1) * wd + (x0 + dx - 1);
                            acc += dot(grow, &iplane[ibase..ibase + (x1 - x0)]);
                        }
                        gw[wbase + dy * 3 + dx] += acc;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_input(
    gx: &mut [Real],
    wv: &[Real],
    gout: &[Real],
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    wd: usize,
) {
    let plane = h * wd;
    for bi in 0..batch {
        for o in 0..c_out {
            let gplane = &gout[(bi * c_out + o) * plane..(bi * c_out + o + 1) * plane];
            for i in 0..c_in {
                let gxplane = &mut gx[(bi * c_in + i) * plane..(bi * c_in + i + 1) * plane];
                let wbase = (o * c_in + i) * 9;
                for dy in 0..3usize {
                    let (y0, y1) = conv_range(dy, h);
                    for dx in 0..3usize {
                        let coeff = wv[wbase + dy * 3 + dx];
                        if coeff == 0.0 {
                            continue;
                        }
                        let (x0, x1) = conv_range(dx, wd);
                        for y in y0..y1 {
                            let grow = &gplane[y * wd + x0..y * wd + x1];
                            let ibase = (y + dy - 1) * wd + (x0 + dx - 1);
                            add_scaled(&mut gxplane[ibase..ibase + (x1 - x0)], grow, coeff);
                        }
                    }
                }
            }
        }
    }
}

fn layer_norm_backward_gain(
    gg: &mut [Real],
    xd: &[Real],
    gout: &[Real],
    rows: usize,
    c: usize,
    eps: Real,
) {
    let cf = c as Real;
    for r in 0..rows {
        let xrow = &xd[r * c..(r + 1) * c];
        let grow = &gout[r * c..(r + 1) * c];
        let mean: Real = xrow.iter().sum::<Real>() / cf;
        let var: Real = xrow.iter().map(|&v| (v - mean) * (v - mean)).sum::<Real>() / cf;
        let inv_std = 1.0 / (var + eps).sqrt();
        for j in 0..c {
            gg[j] += grow[j] * (xrow[j] - mean) * inv_std;
        }
    }
}

fn layer_norm_backward_input(
    gx: &mut [Real],
    xd: &[Real],
    gd: &[Real],
    gout: &[Real],
    rows: usize,
    c: usize,
    eps: Real,
) {
    let cf = c as Real;
    for r in 0..rows {
        let xrow = &xd[r * c..(r + 1) * c];
        let grow = &gout[r * c..(r + 1) * c];
        let gxrow = &mut gx[r * c..(r + 1) * c];
        let mean: Real = xrow.iter().sum::<Real>() / cf;
        let var: Real = xrow.iter().map(|&v| (v - mean) * (v - mean)).sum::<Real>() / cf;
        let inv_std = 1.0 / (var + eps).sqrt();
        let mut dxhat_sum = 0.0;
        let mut dxhat_xhat_sum = 0.0;
        for j in 0..c {
            let xhat = (xrow[j] - mean) * inv_std;
            let dxhat = grow[j] * gd[j];
            dxhat_sum += dxhat;
            dxhat_xhat_sum += dxhat * xhat;
        }
        for j in 0..c {
            let xhat = (xrow[j] - mean) * inv_std;
            let dxhat = grow[j] * gd[j];
            gxrow[j] += inv_std / cf * (cf * dxhat - dxhat_sum - xhat * dxhat_xhat_sum);
        }
    }
}

/// Output index range along one axis for kernel offset `d` (0..3) with
/// padding 1: positions where the tap lands in bounds.
#[inline]
fn conv_range(d: usize, extent: usize) -> (usize, usize) {
    let lo = 1usize.saturating_sub(d);
    let hi = (extent + 1 - d).min(extent);
    (lo, hi)
}
