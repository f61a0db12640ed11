//! Independent reference implementations shared by the integration tests.
//! Everything here is written from the formulas directly, with no calls
//! into the code under test beyond data containers.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use heartsplit_core::nn::{
    loss_and_gradients, Activation, Layer, LayerKind, Mode, ModelGraph, Tensor, BN_EPS,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative error with an absolute floor for values near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| rel_err(*x, *y))
        .fold(0.0, f64::max)
}

/// `x[t][c]`, row-major over time. Weights `w[co][k][ci]` with `ci` inside
/// the group. Same padding: output length `ceil(n / stride)`, total padding
/// `(out - 1) * stride + k - n`, the odd sample on the right.
#[allow(clippy::too_many_arguments)]
pub fn conv_oracle(
    x: &[f64],
    n: usize,
    cin: usize,
    w: &[f64],
    b: &[f64],
    cout: usize,
    k: usize,
    stride: usize,
    groups: usize,
    relu: bool,
) -> Vec<f64> {
    let out_len = n.div_ceil(stride);
    let pad_total = ((out_len - 1) * stride + k).saturating_sub(n);
    let pad_left = pad_total / 2;
    let padded_len = n + pad_total;
    let mut padded = vec![vec![0.0; cin]; padded_len];
    for t in 0..n {
        for c in 0..cin {
            padded[t + pad_left][c] = x[t * cin + c];
        }
    }
    let cin_g = cin / groups;
    let cout_g = cout / groups;
    let mut y = vec![0.0; out_len * cout];
    for o in 0..out_len {
        for co in 0..cout {
            let g = co / cout_g;
            let mut s = b[co];
            for kk in 0..k {
                for ci in 0..cin_g {
                    s += padded[o * stride + kk][g * cin_g + ci] * w[(co * k + kk) * cin_g + ci];
                }
            }
            y[o * cout + co] = if relu { s.max(0.0) } else { s };
        }
    }
    y
}

/// Ceil-mode max pooling: the last window may hang off the end.
pub fn pool_oracle(x: &[f64], n: usize, ch: usize, k: usize, stride: usize) -> Vec<f64> {
    let mut out_len = if n <= k {
        1
    } else {
        (n - k).div_ceil(stride) + 1
    };
    if (out_len - 1) * stride >= n {
        out_len -= 1;
    }
    let mut y = Vec::new();
    for o in 0..out_len {
        for c in 0..ch {
            let mut m = f64::NEG_INFINITY;
            for t in o * stride..(o * stride + k).min(n) {
                m = m.max(x[t * ch + c]);
            }
            y.push(m);
        }
    }
    y
}

/// Batch norm over `rows` rows of `ch` channels. `stats` gives the running
/// mean and variance for inference; `None` uses the biased batch statistics.
pub fn bn_oracle(
    x: &[f64],
    ch: usize,
    gamma: &[f64],
    beta: &[f64],
    stats: Option<(&[f64], &[f64])>,
) -> Vec<f64> {
    let rows = x.len() / ch;
    let (mean, var): (Vec<f64>, Vec<f64>) = match stats {
        Some((m, v)) => (m.to_vec(), v.to_vec()),
        None => (0..ch)
            .map(|c| {
                let col: Vec<f64> = (0..rows).map(|r| x[r * ch + c]).collect();
                let m = col.iter().sum::<f64>() / rows as f64;
                let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / rows as f64;
                (m, v)
            })
            .unzip(),
    };
    let mut y = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..ch {
            y[r * ch + c] =
                gamma[c] * (x[r * ch + c] - mean[c]) / (var[c] + BN_EPS).sqrt() + beta[c];
        }
    }
    y
}

pub fn dense_oracle(x: &[f64], w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    let n = x.len();
    (0..out)
        .map(|o| b[o] + (0..n).map(|i| w[o * n + i] * x[i]).sum::<f64>())
        .collect()
}

/// σ_i = sqrt(Σ (x_j − μ_i)² / (N − 1)) over windows of `win` samples
/// spaced `max(1, round(win · (1 − overlap)))` apart.
pub fn moving_std_oracle(x: &[f64], win: usize, overlap: f64) -> Vec<f64> {
    let hop = ((win as f64 * (1.0 - overlap)).round() as usize).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start + win <= x.len() {
        let w = &x[start..start + win];
        let mu = w.iter().sum::<f64>() / win as f64;
        let ss: f64 = w.iter().map(|v| (v - mu) * (v - mu)).sum();
        out.push((ss / (win - 1) as f64).sqrt());
        start += hop;
    }
    out
}

/// Pearson correlation with sample (N − 1) normalisation throughout.
pub fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1.0);
    let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    cov / (sa * sb)
}

/// One bias-corrected Adam step from zero moments.
pub fn adam_first_step(w: f64, g: f64, lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
    let m = (1.0 - b1) * g;
    let v = (1.0 - b2) * g * g;
    let m_hat = m / (1.0 - b1);
    let v_hat = v / (1.0 - b2);
    w - lr * m_hat / (v_hat.sqrt() + eps)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Fills every parameter and running statistic with random values
/// (variances kept positive).
pub fn randomize_layer(layer: &mut Layer<f64>, rng: &mut ChaCha8Rng) {
    let bn = layer.spec.kind == LayerKind::BatchNorm;
    for (j, p) in layer.params.iter_mut().enumerate() {
        for v in p.data_mut() {
            *v = if bn && j == 0 {
                rng.random_range(0.5..1.5)
            } else {
                rng.random_range(-0.5..0.5)
            };
        }
    }
    if bn {
        for v in layer.state[0].data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        for v in layer.state[1].data_mut() {
            *v = rng.random_range(0.2..2.0);
        }
    }
}

/// One random single-layer case: the layer, its input and the reference
/// output. Returns `(layer, input, expected, mode)`.
pub fn random_layer_case(rng: &mut ChaCha8Rng) -> (Layer<f64>, Tensor<f64>, Vec<f64>, Mode) {
    let batch = rng.random_range(1..4);
    let kind = rng.random_range(0..6);
    let n = rng.random_range(4..40);
    let (mut layer, cin) = match kind {
        0 => {
            let cin = rng.random_range(1..4);
            let cout = rng.random_range(1..6);
            let k = rng.random_range(1..12);
            let s = rng.random_range(1..4);
            let relu = if rng.random::<bool>() {
                Activation::Relu
            } else {
                Activation::None
            };
            (
                Layer::conv("c", LayerKind::Conv1d, n, cin, cout, k, s, 1, relu).unwrap(),
                cin,
            )
        }
        1 => {
            let g = rng.random_range(1..5);
            let cin = g * rng.random_range(1..3);
            let cout = g * rng.random_range(1..4);
            let k = rng.random_range(1..10);
            (
                Layer::conv(
                    "g",
                    LayerKind::GroupedConv,
                    n,
                    cin,
                    cout,
                    k,
                    1,
                    g,
                    Activation::None,
                )
                .unwrap(),
                cin,
            )
        }
        2 => {
            let cin = rng.random_range(1..8);
            let cout = rng.random_range(1..6);
            (
                Layer::conv(
                    "p",
                    LayerKind::PointwiseConv,
                    n,
                    cin,
                    cout,
                    1,
                    1,
                    1,
                    Activation::Relu,
                )
                .unwrap(),
                cin,
            )
        }
        3 => {
            let ch = rng.random_range(1..5);
            let k = rng.random_range(1..5);
            let s = rng.random_range(1..4);
            (Layer::max_pool("m", n, ch, k, s), ch)
        }
        _ => {
            let ch = rng.random_range(1..5);
            (Layer::batch_norm("b", n, ch), ch)
        }
    };
    randomize_layer(&mut layer, rng);
    let mode = if kind == 5 { Mode::Train } else { Mode::Infer };
    let x = random_vec(rng, batch * n * cin, 2.0);
    let s = &layer.spec;
    let mut expected = Vec::new();
    match s.kind {
        LayerKind::MaxPool => {
            for b in 0..batch {
                expected.extend(pool_oracle(
                    &x[b * n * cin..(b + 1) * n * cin],
                    n,
                    cin,
                    s.kernel,
                    s.stride,
                ));
            }
        }
        LayerKind::BatchNorm => {
            let gamma = layer.params[0].to_f64_vec();
            let beta = layer.params[1].to_f64_vec();
            let rm = layer.state[0].to_f64_vec();
            let rv = layer.state[1].to_f64_vec();
            let stats = (mode == Mode::Infer).then_some((rm.as_slice(), rv.as_slice()));
            expected = bn_oracle(&x, cin, &gamma, &beta, stats);
        }
        _ => {
            let w = layer.params[0].to_f64_vec();
            let bias = layer.params[1].to_f64_vec();
            for b in 0..batch {
                expected.extend(conv_oracle(
                    &x[b * n * cin..(b + 1) * n * cin],
                    n,
                    cin,
                    &w,
                    &bias,
                    s.out_ch,
                    s.kernel,
                    s.stride,
                    s.groups,
                    s.activation == Activation::Relu,
                ));
            }
        }
    }
    let x = Tensor::new(vec![batch, n, cin], x).unwrap();
    (layer, x, expected, mode)
}

/// Norm-relative discrepancy between analytic and central-difference
/// gradients, worst over parameter tensors, on one random micro-batch.
pub fn gradient_check(seed: u64, batch: usize, samples_per_tensor: usize) -> f64 {
    let mut rng = rng(seed);
    let mut model: ModelGraph<f64> = ModelGraph::table1(seed);
    model.set_dropout(0.0);
    for layer in &mut model.layers {
        randomize_layer(layer, &mut rng);
    }
    let x = Tensor::new(vec![batch, 105, 1], random_vec(&mut rng, batch * 105, 1.0)).unwrap();
    let t2: Vec<usize> = (0..batch).map(|_| rng.random_range(0..4)).collect();
    let t1: Vec<usize> = (0..batch).map(|_| rng.random_range(0..2)).collect();
    let weights = [1.0; 4];
    let loss = |m: &ModelGraph<f64>| {
        loss_and_gradients(m, &x, &t2, Some(&t1), &weights, None)
            .unwrap()
            .loss
    };
    let pass = loss_and_gradients(&model, &x, &t2, Some(&t1), &weights, None).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for li in 0..model.layers.len() {
        for pi in 0..model.layers[li].params.len() {
            let analytic = pass.grads[li][pi].to_f64_vec();
            let len = analytic.len();
            let idx: Vec<usize> = if len <= samples_per_tensor {
                (0..len).collect()
            } else {
                (0..samples_per_tensor)
                    .map(|_| rng.random_range(0..len))
                    .collect()
            };
            let (mut diff, mut a_norm, mut n_norm) = (0.0, 0.0, 0.0);
            for &i in &idx {
                let orig = model.layers[li].params[pi].data()[i];
                model.layers[li].params[pi].data_mut()[i] = orig + h;
                let up = loss(&model);
                model.layers[li].params[pi].data_mut()[i] = orig - h;
                let down = loss(&model);
                model.layers[li].params[pi].data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                diff += (analytic[i] - numeric).powi(2);
                a_norm += analytic[i].powi(2);
                n_norm += numeric.powi(2);
            }
            let denom = a_norm.sqrt().max(n_norm.sqrt()).max(1e-10);
            worst = worst.max(diff.sqrt() / denom);
        }
    }
    worst
}
