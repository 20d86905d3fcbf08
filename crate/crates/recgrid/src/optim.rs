//! Muon and AdamW optimizers plus the warmup + cosine learning-rate schedule.
//!
//! Muon applies Nesterov momentum followed by Newton-Schulz orthogonalization
//! to matrix-shaped parameters (conv kernels flattened to C_out x 9 C_in).
//! Vectors and the tied embedding fall back to an Adam rule at the same
//! learning rate. AdamW is the standard decoupled-weight-decay variant.

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamKind};
use crate::tensor::Real;
use serde::{Deserialize, Serialize};

// ── Learning-rate schedule ──────────────────────────────────────────────

/// Linear warmup to `peak`, then cosine decay to `final_lr` by the last step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup: usize,
    pub total: usize,
    pub final_lr: f64,
}

impl LrSchedule {
    pub fn new(peak: f64, warmup: usize, total: usize, final_lr: f64) -> Result<Self> {
        if warmup > total {
            return Err(Error::InvalidConfig(format!(
                "warmup {warmup} exceeds total steps {total}"
            )));
        }
        if !(peak > final_lr && final_lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "schedule requires peak > final_lr > 0, got {peak} and {final_lr}"
            )));
        }
        Ok(Self {
            peak,
            warmup,
            total,
            final_lr,
        })
    }

    /// Learning rate at `step` (0-based). Steps at or past `total` error out.
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step >= self.total {
            return Err(Error::OutOfRange {
                step,
                total: self.total,
            });
        }
        if step < self.warmup {
            return Ok(self.peak * (step + 1) as f64 / self.warmup as f64);
        }
        let span = self.total - self.warmup;
        if span <= 1 {
            return Ok(self.final_lr);
        }
        let progress = (step - self.warmup) as f64 / (span - 1) as f64;
        Ok(self.final_lr
            + 0.5 * (self.peak - self.final_lr) * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}

/// Trainer-facing schedule choice; `Constant` exists for diagnostics and
/// null-optimizer tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    Constant { lr: f64 },
    WarmupCosine(LrSchedule),
}

impl Schedule {
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        match self {
            Schedule::Constant { lr } => Ok(*lr),
            Schedule::WarmupCosine(s) => s.lr_at(step),
        }
    }
}

// ── Newton-Schulz orthogonalization ─────────────────────────────────────

/// Quintic iteration coefficients.
pub const NS_COEFFS: (f64, f64, f64) = (3.4445, -4.7750, 2.0315);

/// Approximate the polar factor U V^T of an `rows x cols` matrix via the
/// fixed-coefficient quintic iteration X <- aX + b(XX^T)X + c(XX^T)^2 X
/// starting from M / ||M||_F. A zero matrix comes back as zeros. When
/// rows > cols the iteration runs on the transpose (identical result,
/// smaller Gram matrices).
pub fn newton_schulz(m: &[Real], rows: usize, cols: usize, iters: usize) -> Vec<Real> {
    debug_assert_eq!(m.len(), rows * cols);
    let frob: f64 = m.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>();
    if frob == 0.0 {
        return vec![0.0; m.len()];
    }
    let inv = 1.0 / frob.sqrt();

    let transposed = rows > cols;
    let (r, c) = if transposed { (cols, rows) } else { (rows, cols) };
    let mut x = vec![0.0f64; r * c];
    if transposed {
        for i in 0..rows {
            for j in 0..cols {
                x[j * rows + i] = f64::from(m[i * cols + j]) * inv;
            }
        }
    } else {
        for (xv, &mv) in x.iter_mut().zip(m) {
            *xv = f64::from(mv) * inv;
        }
    }

    let (a, b, cq) = NS_COEFFS;
    let mut gram = vec![0.0f64; r * r];
    let mut gram2 = vec![0.0f64; r * r];
    let mut poly = vec![0.0f64; r * r];
    let mut next = vec![0.0f64; r * c];
    for _ in 0..iters {
        matmul_nt(&x, &x, &mut gram, r, c); // X X^T
        matmul_nn(&gram, &gram, &mut gram2, r, r, r); // (X X^T)^2
        for i in 0..r * r {
            poly[i] = b * gram[i] + cq * gram2[i];
        }
        matmul_nn(&poly, &x, &mut next, r, r, c);
        for i in 0..r * c {
            next[i] += a * x[i];
        }
        std::mem::swap(&mut x, &mut next);
    }

    let mut out = vec![0.0; rows * cols];
    if transposed {
        for i in 0..rows {
            for j in 0..cols {
                out[i * cols + j] = x[j * rows + i] as Real;
            }
        }
    } else {
        for (o, &v) in out.iter_mut().zip(&x) {
            *o = v as Real;
        }
    }
    out
}

/// out = a (r x k) . b (k x c)
fn matmul_nn(a: &[f64], b: &[f64], out: &mut [f64], r: usize, k: usize, c: usize) {
    out.fill(0.0);
    for i in 0..r {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * c..(p + 1) * c];
            let orow = &mut out[i * c..(i + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out = a (r x k) . b^T where b is (c x k); here used with a = b = X.
fn matmul_nt(a: &[f64], b: &[f64], out: &mut [f64], r: usize, k: usize) {
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..r {
            let brow = &b[j * k..(j + 1) * k];
            out[i * r + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
}

// ── Optimizers ──────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MuonConfig {
    /// Momentum coefficient beta.
    pub momentum: f64,
    /// Newton-Schulz iterations per step.
    pub ns_iters: usize,
    /// Adam betas/eps for the non-matrix fallback. Weight decay stays zero
    /// so a zero-gradient step is exactly a no-op.
    pub fallback_beta1: f64,
    pub fallback_beta2: f64,
    pub fallback_eps: f64,
}

impl Default for MuonConfig {
    fn default() -> Self {
        Self {
            momentum: 0.95,
            ns_iters: 5,
            fallback_beta1: 0.9,
            fallback_beta2: 0.999,
            fallback_eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

pub trait Optimizer {
    /// Apply one update. `grads` aligns with `params.buffers()`.
    fn step(&mut self, params: &mut ModelParams, grads: &[Vec<Real>], lr: f64) -> Result<()>;
}

pub struct MuonOptimizer {
    pub config: MuonConfig,
    momentum: Vec<Vec<Real>>,
    adam: AdamCore,
}

impl MuonOptimizer {
    pub fn new(config: MuonConfig) -> Self {
        Self {
            config,
            momentum: Vec::new(),
            adam: AdamCore::new(
                config.fallback_beta1,
                config.fallback_beta2,
                config.fallback_eps,
            ),
        }
    }
}

impl Optimizer for MuonOptimizer {
    fn step(&mut self, params: &mut ModelParams, grads: &[Vec<Real>], lr: f64) -> Result<()> {
        check_grads(params, grads)?;
        let n = params.buffers().len();
        if self.momentum.is_empty() {
            self.momentum = params
                .buffers()
                .iter()
                .map(|b| vec![0.0; b.len()])
                .collect();
            self.adam.init(params);
        }
        self.adam.step += 1;
        for i in 0..n {
            let buf = &mut params.buffers_mut()[i];
            match buf.kind {
                ParamKind::Matrix { rows, cols } => {
                    let beta = self.config.momentum as Real;
                    let m = &mut self.momentum[i];
                    // m <- beta m + g, then the Nesterov lookahead g + beta m
                    let mut lookahead = vec![0.0; m.len()];
                    for ((mv, &gv), la) in m.iter_mut().zip(&grads[i]).zip(&mut lookahead) {
                        *mv = beta * *mv + gv;
                        *la = gv + beta * *mv;
                    }
                    let orth = newton_schulz(&lookahead, rows, cols, self.config.ns_iters);
                    let aspect = (rows as f64 / cols as f64).max(1.0).sqrt();
                    let scale = (lr * aspect) as Real;
                    for (p, &u) in buf.data.iter_mut().zip(&orth) {
                        *p -= scale * u;
                    }
                }
                ParamKind::Vector | ParamKind::Embedding => {
                    // weight decay 0: the fallback must not move without grads
                    self.adam.update(i, &mut buf.data, &grads[i], lr, 0.0);
                }
            }
        }
        Ok(())
    }
}

pub struct AdamWOptimizer {
    pub config: AdamWConfig,
    core: AdamCore,
}

impl AdamWOptimizer {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            core: AdamCore::new(config.beta1, config.beta2, config.eps),
        }
    }
}

impl Optimizer for AdamWOptimizer {
    fn step(&mut self, params: &mut ModelParams, grads: &[Vec<Real>], lr: f64) -> Result<()> {
        check_grads(params, grads)?;
        if self.core.m.is_empty() {
            self.core.init(params);
        }
        self.core.step += 1;
        let wd = self.config.weight_decay;
        for (i, buf) in params.buffers_mut().iter_mut().enumerate() {
            self.core.update(i, &mut buf.data, &grads[i], lr, wd);
        }
        Ok(())
    }
}

/// Shared Adam machinery (used directly by AdamW and as Muon's fallback).
struct AdamCore {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<Real>>,
    v: Vec<Vec<Real>>,
}

impl AdamCore {
    fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    fn init(&mut self, params: &ModelParams) {
        self.m = params
            .buffers()
            .iter()
            .map(|b| vec![0.0; b.len()])
            .collect();
        self.v = self.m.clone();
    }

    /// Decoupled weight decay: p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
    fn update(&mut self, index: usize, data: &mut [Real], grad: &[Real], lr: f64, wd: f64) {
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as Real, self.beta2 as Real);
        let eps = self.eps as Real;
        let lr_r = lr as Real;
        let decay = (1.0 - lr * wd) as Real;
        let m = &mut self.m[index];
        let v = &mut self.v[index];
        for ((p, &g), (mv, vv)) in data
            .iter_mut()
            .zip(grad)
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mv = b1 * *mv + (1.0 - b1) * g;
            *vv = b2 * *vv + (1.0 - b2) * g * g;
            let m_hat = *mv / bc1 as Real;
            let v_hat = *vv / bc2 as Real;
            *p = *p * decay - lr_r * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

fn check_grads(params: &ModelParams, grads: &[Vec<Real>]) -> Result<()> {
    if grads.len() != params.buffers().len() {
        return Err(Error::Contract(format!(
            "{} gradient buffers for {} parameters",
            grads.len(),
            params.buffers().len()
        )));
    }
    for (buf, g) in params.buffers().iter().zip(grads) {
        if buf.len() != g.len() {
            return Err(Error::Contract(format!(
                "gradient length {} does not match parameter '{}' ({})",
                g.len(),
                buf.name,
                buf.len()
            )));
        }
    }
    Ok(())
}
