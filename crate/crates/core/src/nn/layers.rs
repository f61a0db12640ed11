use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the previous running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv1d,
    MaxPool,
    BatchNorm,
    GroupedConv,
    PointwiseConv,
    Dense,
    Dropout,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::MaxPool => "maxpool",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::GroupedConv => "grouped_conv",
            LayerKind::PointwiseConv => "pointwise_conv",
            LayerKind::Dense => "dense",
            LayerKind::Dropout => "dropout",
        }
    }

    fn is_conv(self) -> bool {
        matches!(
            self,
            LayerKind::Conv1d | LayerKind::GroupedConv | LayerKind::PointwiseConv
        )
    }
}

/// Activation fused onto a conv or dense layer. `Softmax` marks an output
/// head; the model applies it to the head logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Infer,
    Train,
}

/// Static description of one layer. Convolutions use "same" padding
/// (`out_len = ceil(in_len / stride)`, extra padding on the right); pooling
/// uses ceil-mode output lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub in_len: usize,
    pub in_ch: usize,
    pub out_len: usize,
    pub out_ch: usize,
    pub groups: usize,
    pub activation: Activation,
    /// Drop probability; only meaningful for dropout layers.
    pub dropout_p: f64,
}

impl LayerSpec {
    pub fn train_only(&self) -> bool {
        self.kind == LayerKind::Dropout
    }

    pub fn output_shape(&self) -> (usize, usize) {
        (self.out_len, self.out_ch)
    }

    fn pad_left(&self) -> usize {
        let needed = (self.out_len - 1) * self.stride + self.kernel;
        needed.saturating_sub(self.in_len) / 2
    }

    /// Multiply-accumulates for one sample:
    /// `C_in * C_out * K_h * K_w * H_out * W_out / g` for convolutions,
    /// `in * out` for dense layers, zero otherwise.
    pub fn macs(&self) -> u64 {
        match self.kind {
            k if k.is_conv() => {
                (self.in_ch * self.out_ch * self.kernel * self.out_len / self.groups) as u64
            }
            LayerKind::Dense => (self.in_len * self.in_ch * self.out_len) as u64,
            _ => 0,
        }
    }
}

/// Per-call state needed by the backward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Conv {
        input: Tensor<T>,
        output: Tensor<T>,
    },
    Pool {
        argmax: Vec<usize>,
        in_shape: [usize; 3],
    },
    BatchNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    },
    Dense {
        input: Tensor<T>,
        output: Tensor<T>,
    },
    Dropout {
        mask: Option<Vec<f64>>,
    },
}

/// A layer with its trainable parameters and non-trainable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T = f32> {
    pub spec: LayerSpec,
    /// conv/dense: `[weight, bias]`; batch norm: `[gamma, beta]`.
    pub params: Vec<Tensor<T>>,
    /// batch norm: `[running_mean, running_var]`.
    pub state: Vec<Tensor<T>>,
}

fn check_input<T: Real>(spec: &LayerSpec, x: &Tensor<T>) -> Result<usize> {
    match x.shape() {
        [b, l, c] if *l == spec.in_len && *c == spec.in_ch => Ok(*b),
        other => Err(Error::param(format!(
            "layer {} expects (batch, {}, {}), got {other:?}",
            spec.name, spec.in_len, spec.in_ch
        ))),
    }
}

impl<T: Real> Layer<T> {
    /// Convolution with zero weights; `kind` picks the reporting label.
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        name: &str,
        kind: LayerKind,
        in_len: usize,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
        activation: Activation,
    ) -> Result<Self> {
        if !kind.is_conv() {
            return Err(Error::param(format!("{kind:?} is not a convolution")));
        }
        if groups == 0 || !in_ch.is_multiple_of(groups) || !out_ch.is_multiple_of(groups) {
            return Err(Error::param(format!(
                "{name}: channels ({in_ch} -> {out_ch}) must divide into {groups} groups"
            )));
        }
        if kernel == 0 || stride == 0 || in_len == 0 {
            return Err(Error::param(format!(
                "{name}: kernel, stride and length must be positive"
            )));
        }
        let spec = LayerSpec {
            name: name.to_string(),
            kind,
            kernel,
            stride,
            in_len,
            in_ch,
            out_len: in_len.div_ceil(stride),
            out_ch,
            groups,
            activation,
            dropout_p: 0.0,
        };
        Ok(Self {
            params: vec![
                Tensor::zeros(vec![out_ch, kernel, in_ch / groups]),
                Tensor::zeros(vec![out_ch]),
            ],
            state: Vec::new(),
            spec,
        })
    }

    pub fn max_pool(name: &str, in_len: usize, ch: usize, kernel: usize, stride: usize) -> Self {
        // A last window that would start past the input is dropped.
        let mut out_len = if in_len <= kernel {
            1
        } else {
            (in_len - kernel).div_ceil(stride) + 1
        };
        if (out_len - 1) * stride >= in_len {
            out_len -= 1;
        }
        Self {
            spec: LayerSpec {
                name: name.to_string(),
                kind: LayerKind::MaxPool,
                kernel,
                stride,
                in_len,
                in_ch: ch,
                out_len,
                out_ch: ch,
                groups: 1,
                activation: Activation::None,
                dropout_p: 0.0,
            },
            params: Vec::new(),
            state: Vec::new(),
        }
    }

    /// Batch norm with scale 1, shift 0, running mean 0 and variance 1.
    pub fn batch_norm(name: &str, len: usize, ch: usize) -> Self {
        Self {
            spec: LayerSpec {
                name: name.to_string(),
                kind: LayerKind::BatchNorm,
                kernel: 1,
                stride: 1,
                in_len: len,
                in_ch: ch,
                out_len: len,
                out_ch: ch,
                groups: 1,
                activation: Activation::None,
                dropout_p: 0.0,
            },
            params: vec![Tensor::filled(vec![ch], T::one()), Tensor::zeros(vec![ch])],
            state: vec![Tensor::zeros(vec![ch]), Tensor::filled(vec![ch], T::one())],
        }
    }

    /// Fully connected layer over the flattened `(in_len, in_ch)` input.
    /// Output shape is `(out, 1)`.
    pub fn dense(
        name: &str,
        in_len: usize,
        in_ch: usize,
        out: usize,
        activation: Activation,
    ) -> Self {
        Self {
            spec: LayerSpec {
                name: name.to_string(),
                kind: LayerKind::Dense,
                kernel: 1,
                stride: 1,
                in_len,
                in_ch,
                out_len: out,
                out_ch: 1,
                groups: 1,
                activation,
                dropout_p: 0.0,
            },
            params: vec![
                Tensor::zeros(vec![out, in_len * in_ch]),
                Tensor::zeros(vec![out]),
            ],
            state: Vec::new(),
        }
    }

    pub fn dropout(name: &str, len: usize, ch: usize, p: f64) -> Self {
        Self {
            spec: LayerSpec {
                name: name.to_string(),
                kind: LayerKind::Dropout,
                kernel: 1,
                stride: 1,
                in_len: len,
                in_ch: ch,
                out_len: len,
                out_ch: ch,
                groups: 1,
                activation: Activation::None,
                dropout_p: p,
            },
            params: Vec::new(),
            state: Vec::new(),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self.spec.kind {
            LayerKind::BatchNorm => &["gamma", "beta"],
            LayerKind::MaxPool | LayerKind::Dropout => &[],
            _ => &["weight", "bias"],
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self.spec.kind {
            LayerKind::BatchNorm => &["running_mean", "running_var"],
            _ => &[],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Glorot-uniform weights, zero biases. Batch norm and parameterless
    /// layers are left untouched.
    pub fn glorot_init(&mut self, rng: &mut ChaCha8Rng) {
        let s = &self.spec;
        let (fan_in, fan_out) = match s.kind {
            k if k.is_conv() => (
                s.kernel * s.in_ch / s.groups,
                s.kernel * s.out_ch / s.groups,
            ),
            LayerKind::Dense => (s.in_len * s.in_ch, s.out_len),
            _ => return,
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in self.params[0].data_mut() {
            *w = T::cast(rng.random_range(-limit..limit));
        }
        self.params[1]
            .data_mut()
            .iter_mut()
            .for_each(|b| *b = T::zero());
    }

    pub fn forward(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor<T>, Cache<T>)> {
        let batch = check_input(&self.spec, x)?;
        Ok(match self.spec.kind {
            LayerKind::Conv1d | LayerKind::GroupedConv | LayerKind::PointwiseConv => {
                let out = self.conv_forward(x, batch);
                (
                    out.clone(),
                    Cache::Conv {
                        input: x.clone(),
                        output: out,
                    },
                )
            }
            LayerKind::MaxPool => self.pool_forward(x, batch),
            LayerKind::BatchNorm => self.bn_forward(x, batch, mode),
            LayerKind::Dense => {
                let out = self.dense_forward(x, batch);
                (
                    out.clone(),
                    Cache::Dense {
                        input: x.clone(),
                        output: out,
                    },
                )
            }
            LayerKind::Dropout => match (mode, rng) {
                (Mode::Train, Some(rng)) if self.spec.dropout_p > 0.0 => {
                    let keep = 1.0 - self.spec.dropout_p;
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let data = x
                        .data()
                        .iter()
                        .zip(&mask)
                        .map(|(v, m)| T::cast(v.widen() * m))
                        .collect();
                    (
                        Tensor::raw(x.shape().to_vec(), data),
                        Cache::Dropout { mask: Some(mask) },
                    )
                }
                (Mode::Train, None) if self.spec.dropout_p > 0.0 => {
                    return Err(Error::param("train-mode dropout needs a random source"))
                }
                _ => (x.clone(), Cache::Dropout { mask: None }),
            },
        })
    }

    fn conv_forward(&self, x: &Tensor<T>, batch: usize) -> Tensor<T> {
        let s = &self.spec;
        let (l_in, c_in, l_out, c_out) = (s.in_len, s.in_ch, s.out_len, s.out_ch);
        let cin_g = c_in / s.groups;
        let cout_g = c_out / s.groups;
        let pad = s.pad_left() as isize;
        let w = self.params[0].data();
        let bias = self.params[1].data();
        let xd = x.data();
        let mut out = Vec::with_capacity(batch * l_out * c_out);
        for b in 0..batch {
            let xb = &xd[b * l_in * c_in..(b + 1) * l_in * c_in];
            for o in 0..l_out {
                let start = (o * s.stride) as isize - pad;
                let k_lo = (-start).max(0) as usize;
                let k_hi = ((l_in as isize - start).min(s.kernel as isize)).max(0) as usize;
                for co in 0..c_out {
                    let g = co / cout_g;
                    let mut acc = bias[co].widen();
                    for k in k_lo..k_hi {
                        let pos = (start + k as isize) as usize;
                        let xrow = &xb[pos * c_in + g * cin_g..pos * c_in + (g + 1) * cin_g];
                        let wrow = &w[(co * s.kernel + k) * cin_g..(co * s.kernel + k + 1) * cin_g];
                        for (xv, wv) in xrow.iter().zip(wrow) {
                            acc += xv.widen() * wv.widen();
                        }
                    }
                    if s.activation == Activation::Relu && acc < 0.0 {
                        acc = 0.0;
                    }
                    out.push(T::cast(acc));
                }
            }
        }
        Tensor::raw(vec![batch, l_out, c_out], out)
    }

    fn pool_forward(&self, x: &Tensor<T>, batch: usize) -> (Tensor<T>, Cache<T>) {
        let s = &self.spec;
        let (l_in, ch, l_out) = (s.in_len, s.in_ch, s.out_len);
        let xd = x.data();
        let mut out = Vec::with_capacity(batch * l_out * ch);
        let mut argmax = Vec::with_capacity(batch * l_out * ch);
        for b in 0..batch {
            for o in 0..l_out {
                let lo = o * s.stride;
                let hi = (lo + s.kernel).min(l_in);
                for c in 0..ch {
                    let mut best = (b * l_in + lo) * ch + c;
                    for p in lo + 1..hi {
                        let idx = (b * l_in + p) * ch + c;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    argmax.push(best);
                    out.push(xd[best]);
                }
            }
        }
        (
            Tensor::raw(vec![batch, l_out, ch], out),
            Cache::Pool {
                argmax,
                in_shape: [batch, l_in, ch],
            },
        )
    }

    fn bn_forward(&self, x: &Tensor<T>, batch: usize, mode: Mode) -> (Tensor<T>, Cache<T>) {
        let ch = self.spec.in_ch;
        let rows = batch * self.spec.in_len;
        let xd = x.data();
        let gamma = self.params[0].data();
        let beta = self.params[1].data();
        let (mean, var, batch_stats) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for r in 0..rows {
                    for c in 0..ch {
                        mean[c] += xd[r * ch + c].widen();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                for r in 0..rows {
                    for c in 0..ch {
                        let d = xd[r * ch + c].widen() - mean[c];
                        var[c] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                (mean.clone(), var.clone(), Some((mean, var)))
            }
            Mode::Infer => (self.state[0].to_f64_vec(), self.state[1].to_f64_vec(), None),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Vec::with_capacity(xd.len());
        let mut out = Vec::with_capacity(xd.len());
        for r in 0..rows {
            for c in 0..ch {
                let h = (xd[r * ch + c].widen() - mean[c]) * inv_std[c];
                xhat.push(h);
                out.push(T::cast(gamma[c].widen() * h + beta[c].widen()));
            }
        }
        (
            Tensor::raw(x.shape().to_vec(), out),
            Cache::BatchNorm {
                xhat,
                inv_std,
                batch_stats,
            },
        )
    }

    fn dense_forward(&self, x: &Tensor<T>, batch: usize) -> Tensor<T> {
        let n_in = self.spec.in_len * self.spec.in_ch;
        let n_out = self.spec.out_len;
        let w = self.params[0].data();
        let bias = self.params[1].data();
        let xd = x.data();
        let mut out = Vec::with_capacity(batch * n_out);
        for b in 0..batch {
            let xb = &xd[b * n_in..(b + 1) * n_in];
            for o in 0..n_out {
                let mut acc = bias[o].widen();
                for (xv, wv) in xb.iter().zip(&w[o * n_in..(o + 1) * n_in]) {
                    acc += xv.widen() * wv.widen();
                }
                if self.spec.activation == Activation::Relu && acc < 0.0 {
                    acc = 0.0;
                }
                out.push(T::cast(acc));
            }
        }
        Tensor::raw(vec![batch, n_out, 1], out)
    }

    /// Folds train-mode batch statistics into the running averages.
    pub fn update_running_stats(&mut self, cache: &Cache<T>) {
        if let Cache::BatchNorm {
            batch_stats: Some((mean, var)),
            ..
        } = cache
        {
            for (r, m) in self.state[0].data_mut().iter_mut().zip(mean) {
                *r = T::cast(BN_MOMENTUM * r.widen() + (1.0 - BN_MOMENTUM) * m);
            }
            for (r, v) in self.state[1].data_mut().iter_mut().zip(var) {
                *r = T::cast(BN_MOMENTUM * r.widen() + (1.0 - BN_MOMENTUM) * v);
            }
        }
    }

    /// Returns the gradient with respect to the input and one gradient per
    /// entry of `params`.
    pub fn backward(&self, cache: &Cache<T>, grad_out: &Tensor<T>) -> (Tensor<T>, Vec<Tensor<T>>) {
        match cache {
            Cache::Conv { input, output } => self.conv_backward(input, output, grad_out),
            Cache::Pool { argmax, in_shape } => {
                let mut g = vec![0.0f64; in_shape.iter().product()];
                for (idx, go) in argmax.iter().zip(grad_out.data()) {
                    g[*idx] += go.widen();
                }
                (
                    Tensor::raw(in_shape.to_vec(), g.into_iter().map(T::cast).collect()),
                    Vec::new(),
                )
            }
            Cache::BatchNorm {
                xhat,
                inv_std,
                batch_stats,
            } => self.bn_backward(xhat, inv_std, batch_stats.is_some(), grad_out),
            Cache::Dense { input, output } => self.dense_backward(input, output, grad_out),
            Cache::Dropout { mask } => {
                let data = match mask {
                    Some(m) => grad_out
                        .data()
                        .iter()
                        .zip(m)
                        .map(|(g, m)| T::cast(g.widen() * m))
                        .collect(),
                    None => grad_out.data().to_vec(),
                };
                (Tensor::raw(grad_out.shape().to_vec(), data), Vec::new())
            }
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn conv_backward(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> (Tensor<T>, Vec<Tensor<T>>) {
        let s = &self.spec;
        let batch = input.shape()[0];
        let (l_in, c_in, l_out, c_out) = (s.in_len, s.in_ch, s.out_len, s.out_ch);
        let cin_g = c_in / s.groups;
        let cout_g = c_out / s.groups;
        let pad = s.pad_left() as isize;
        let w = self.params[0].data();
        let xd = input.data();
        let yd = output.data();
        let gd = grad_out.data();
        let mut gx = vec![0.0f64; xd.len()];
        let mut gw = vec![0.0f64; w.len()];
        let mut gb = vec![0.0f64; c_out];
        for b in 0..batch {
            for o in 0..l_out {
                let start = (o * s.stride) as isize - pad;
                let k_lo = (-start).max(0) as usize;
                let k_hi = ((l_in as isize - start).min(s.kernel as isize)).max(0) as usize;
                for co in 0..c_out {
                    let oi = (b * l_out + o) * c_out + co;
                    if s.activation == Activation::Relu && yd[oi] <= T::zero() {
                        continue;
                    }
                    let g = gd[oi].widen();
                    if g == 0.0 {
                        continue;
                    }
                    gb[co] += g;
                    let grp = co / cout_g;
                    for k in k_lo..k_hi {
                        let pos = (start + k as isize) as usize;
                        let xbase = (b * l_in + pos) * c_in + grp * cin_g;
                        let wbase = (co * s.kernel + k) * cin_g;
                        for ci in 0..cin_g {
                            gw[wbase + ci] += g * xd[xbase + ci].widen();
                            gx[xbase + ci] += g * w[wbase + ci].widen();
                        }
                    }
                }
            }
        }
        (
            Tensor::raw(
                input.shape().to_vec(),
                gx.into_iter().map(T::cast).collect(),
            ),
            vec![
                Tensor::raw(
                    self.params[0].shape().to_vec(),
                    gw.into_iter().map(T::cast).collect(),
                ),
                Tensor::raw(vec![c_out], gb.into_iter().map(T::cast).collect()),
            ],
        )
    }

    fn bn_backward(
        &self,
        xhat: &[f64],
        inv_std: &[f64],
        batch_mode: bool,
        grad_out: &Tensor<T>,
    ) -> (Tensor<T>, Vec<Tensor<T>>) {
        let ch = self.spec.in_ch;
        let gd = grad_out.data();
        let rows = gd.len() / ch;
        let gamma = self.params[0].data();
        let mut dgamma = vec![0.0; ch];
        let mut dbeta = vec![0.0; ch];
        for r in 0..rows {
            for c in 0..ch {
                let g = gd[r * ch + c].widen();
                dgamma[c] += g * xhat[r * ch + c];
                dbeta[c] += g;
            }
        }
        let mut gx = vec![0.0; gd.len()];
        for r in 0..rows {
            for c in 0..ch {
                let i = r * ch + c;
                let dxhat = gd[i].widen() * gamma[c].widen();
                gx[i] = if batch_mode {
                    // d/dx of (x - mean) / std with batch mean and variance.
                    let m = rows as f64;
                    let g = gamma[c].widen();
                    inv_std[c] / m * (m * dxhat - g * dbeta[c] - xhat[i] * g * dgamma[c])
                } else {
                    dxhat * inv_std[c]
                };
            }
        }
        (
            Tensor::raw(
                grad_out.shape().to_vec(),
                gx.into_iter().map(T::cast).collect(),
            ),
            vec![
                Tensor::raw(vec![ch], dgamma.into_iter().map(T::cast).collect()),
                Tensor::raw(vec![ch], dbeta.into_iter().map(T::cast).collect()),
            ],
        )
    }

    fn dense_backward(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> (Tensor<T>, Vec<Tensor<T>>) {
        let n_in = self.spec.in_len * self.spec.in_ch;
        let n_out = self.spec.out_len;
        let batch = input.shape()[0];
        let w = self.params[0].data();
        let xd = input.data();
        let yd = output.data();
        let gd = grad_out.data();
        let mut gx = vec![0.0f64; xd.len()];
        let mut gw = vec![0.0f64; w.len()];
        let mut gb = vec![0.0f64; n_out];
        for b in 0..batch {
            for o in 0..n_out {
                let oi = b * n_out + o;
                if self.spec.activation == Activation::Relu && yd[oi] <= T::zero() {
                    continue;
                }
                let g = gd[oi].widen();
                gb[o] += g;
                for i in 0..n_in {
                    gw[o * n_in + i] += g * xd[b * n_in + i].widen();
                    gx[b * n_in + i] += g * w[o * n_in + i].widen();
                }
            }
        }
        (
            Tensor::raw(
                input.shape().to_vec(),
                gx.into_iter().map(T::cast).collect(),
            ),
            vec![
                Tensor::raw(
                    self.params[0].shape().to_vec(),
                    gw.into_iter().map(T::cast).collect(),
                ),
                Tensor::raw(vec![n_out], gb.into_iter().map(T::cast).collect()),
            ],
        )
    }
}

/// Runs layers in order, keeping every cache.
pub fn forward_stack<T: Real>(
    layers: &[Layer<T>],
    x: &Tensor<T>,
    mode: Mode,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor<T>, Vec<Cache<T>>)> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for layer in layers {
        let (next, cache) = layer.forward(&cur, mode, rng.as_deref_mut())?;
        caches.push(cache);
        cur = next;
    }
    Ok((cur, caches))
}

/// Back-propagates `grad` through `layers`; returns the input gradient and
/// per-layer parameter gradients.
pub fn backward_stack<T: Real>(
    layers: &[Layer<T>],
    caches: &[Cache<T>],
    grad: Tensor<T>,
) -> (Tensor<T>, Vec<Vec<Tensor<T>>>) {
    let mut grads = vec![Vec::new(); layers.len()];
    let mut cur = grad;
    for (i, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
        let (gin, gp) = layer.backward(cache, &cur);
        grads[i] = gp;
        cur = gin;
    }
    (cur, grads)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
