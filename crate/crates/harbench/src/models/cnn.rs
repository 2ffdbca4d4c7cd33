//! Minimal 1D convolutional network with hand-rolled backpropagation.
//!
//! Architecture: conv(16 filters, kernel 3, stride 1, same padding) -> ReLU
//! -> maxpool 2 -> conv(32, kernel 3, same padding) -> ReLU -> global
//! average pool -> dense -> softmax, trained with mini-batch SGD (batch 32,
//! learning rate 0.01, momentum 0.9) on cross-entropy.
//!
//! One network is trained per cross-validation fold; folds whose final
//! validation loss lands within `loss_threshold` of the best fold form an
//! ensemble that predicts by majority vote. The reported training curve is
//! the best-loss fold's per-epoch loss/accuracy.

use crate::evaluation::CurvePoint;
use crate::rng::stream;
use crate::{Error, Result};
use ndarray::{Array1, Array2, Array3, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const CONV1_FILTERS: usize = 16;
const CONV2_FILTERS: usize = 32;
const KERNEL: usize = 3;
const BATCH_SIZE: usize = 32;
const LEARNING_RATE: f64 = 0.01;
const MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct CnnConfig {
    pub epochs: usize,
    pub k_fold: usize,
    /// Folds with final validation loss within this bias of the best fold
    /// join the prediction ensemble.
    pub loss_threshold: f64,
}

/// Trainable parameters plus their momentum buffers.
#[derive(Debug, Clone)]
pub struct CnnNetwork {
    conv1_w: Array3<f64>, // filters x channels x kernel
    conv1_b: Array1<f64>,
    conv2_w: Array3<f64>,
    conv2_b: Array1<f64>,
    dense_w: Array2<f64>, // classes x CONV2_FILTERS
    dense_b: Array1<f64>,
}

/// Gradients in the same shapes as the parameters.
pub struct CnnGradients {
    conv1_w: Array3<f64>,
    conv1_b: Array1<f64>,
    conv2_w: Array3<f64>,
    conv2_b: Array1<f64>,
    dense_w: Array2<f64>,
    dense_b: Array1<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> f64 {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    rng.gen_range(-limit..limit)
}

/// Same-padded 1D convolution: out[b,f,t] = b[f] + sum w[f,c,j] x[b,c,t+j-1].
fn conv_forward(x: &Array3<f64>, w: &Array3<f64>, b: &Array1<f64>) -> Array3<f64> {
    let (batch, channels, t) = x.dim();
    let filters = w.dim().0;
    debug_assert_eq!(w.dim().1, channels);
    let mut out = Array3::zeros((batch, filters, t));
    let half = KERNEL / 2;
    for bi in 0..batch {
        for f in 0..filters {
            for ti in 0..t {
                let mut acc = b[f];
                for c in 0..channels {
                    for j in 0..KERNEL {
                        let src = ti + j;
                        if src < half || src - half >= t {
                            continue;
                        }
                        acc += w[[f, c, j]] * x[[bi, c, src - half]];
                    }
                }
                out[[bi, f, ti]] = acc;
            }
        }
    }
    out
}

/// Gradients of a same-padded convolution w.r.t. weights, bias, and input.
fn conv_backward(
    x: &Array3<f64>,
    w: &Array3<f64>,
    d_out: &Array3<f64>,
) -> (Array3<f64>, Array1<f64>, Array3<f64>) {
    let (batch, channels, t) = x.dim();
    let filters = w.dim().0;
    let half = KERNEL / 2;
    let mut dw = Array3::zeros(w.dim());
    let mut db = Array1::zeros(filters);
    let mut dx = Array3::zeros(x.dim());
    for bi in 0..batch {
        for f in 0..filters {
            for ti in 0..t {
                let g = d_out[[bi, f, ti]];
                if g == 0.0 {
                    continue;
                }
                db[f] += g;
                for c in 0..channels {
                    for j in 0..KERNEL {
                        let src = ti + j;
                        if src < half || src - half >= t {
                            continue;
                        }
                        dw[[f, c, j]] += g * x[[bi, c, src - half]];
                        dx[[bi, c, src - half]] += g * w[[f, c, j]];
                    }
                }
            }
        }
    }
    (dw, db, dx)
}

fn relu(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_backward(pre: &Array3<f64>, d_out: &Array3<f64>) -> Array3<f64> {
    let mut dx = d_out.clone();
    dx.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    dx
}

/// Non-overlapping width-2 max pooling; a length-1 input passes through.
/// Returns the pooled values and the argmax offsets for backprop.
fn maxpool_forward(x: &Array3<f64>) -> (Array3<f64>, Array3<usize>) {
    let (batch, channels, t) = x.dim();
    if t < 2 {
        let arg = Array3::zeros((batch, channels, t));
        return (x.clone(), arg);
    }
    let out_t = t / 2;
    let mut out = Array3::zeros((batch, channels, out_t));
    let mut arg = Array3::zeros((batch, channels, out_t));
    for bi in 0..batch {
        for c in 0..channels {
            for u in 0..out_t {
                let a = x[[bi, c, 2 * u]];
                let b = x[[bi, c, 2 * u + 1]];
                // first index wins ties
                if b > a {
                    out[[bi, c, u]] = b;
                    arg[[bi, c, u]] = 2 * u + 1;
                } else {
                    out[[bi, c, u]] = a;
                    arg[[bi, c, u]] = 2 * u;
                }
            }
        }
    }
    (out, arg)
}

fn maxpool_backward(input_dim: (usize, usize, usize), arg: &Array3<usize>, d_out: &Array3<f64>) -> Array3<f64> {
    let mut dx = Array3::zeros(input_dim);
    if input_dim.2 < 2 {
        return d_out.clone();
    }
    let (batch, channels, out_t) = d_out.dim();
    for bi in 0..batch {
        for c in 0..channels {
            for u in 0..out_t {
                dx[[bi, c, arg[[bi, c, u]]]] += d_out[[bi, c, u]];
            }
        }
    }
    dx
}

struct ForwardPass {
    pre1: Array3<f64>,
    act1: Array3<f64>,
    pooled: Array3<f64>,
    pool_arg: Array3<usize>,
    pre2: Array3<f64>,
    act2: Array3<f64>,
    gap: Array2<f64>,
    probs: Array2<f64>,
}

impl CnnNetwork {
    pub fn new(channels: usize, n_classes: usize, rng: &mut ChaCha8Rng) -> CnnNetwork {
        let mut conv1_w = Array3::zeros((CONV1_FILTERS, channels, KERNEL));
        let fan1 = (channels * KERNEL, CONV1_FILTERS * KERNEL);
        for v in conv1_w.iter_mut() {
            *v = glorot(rng, fan1.0, fan1.1);
        }
        let mut conv2_w = Array3::zeros((CONV2_FILTERS, CONV1_FILTERS, KERNEL));
        let fan2 = (CONV1_FILTERS * KERNEL, CONV2_FILTERS * KERNEL);
        for v in conv2_w.iter_mut() {
            *v = glorot(rng, fan2.0, fan2.1);
        }
        let mut dense_w = Array2::zeros((n_classes, CONV2_FILTERS));
        for v in dense_w.iter_mut() {
            *v = glorot(rng, CONV2_FILTERS, n_classes);
        }
        CnnNetwork {
            conv1_w,
            conv1_b: Array1::zeros(CONV1_FILTERS),
            conv2_w,
            conv2_b: Array1::zeros(CONV2_FILTERS),
            dense_w,
            dense_b: Array1::zeros(n_classes),
        }
    }

    fn zeros_like(&self) -> CnnGradients {
        CnnGradients {
            conv1_w: Array3::zeros(self.conv1_w.dim()),
            conv1_b: Array1::zeros(self.conv1_b.dim()),
            conv2_w: Array3::zeros(self.conv2_w.dim()),
            conv2_b: Array1::zeros(self.conv2_b.dim()),
            dense_w: Array2::zeros(self.dense_w.dim()),
            dense_b: Array1::zeros(self.dense_b.dim()),
        }
    }

    fn forward(&self, x: &Array3<f64>) -> ForwardPass {
        let pre1 = conv_forward(x, &self.conv1_w, &self.conv1_b);
        let act1 = relu(&pre1);
        let (pooled, pool_arg) = maxpool_forward(&act1);
        let pre2 = conv_forward(&pooled, &self.conv2_w, &self.conv2_b);
        let act2 = relu(&pre2);
        let (batch, filters, t) = act2.dim();
        let mut gap = Array2::zeros((batch, filters));
        for bi in 0..batch {
            for f in 0..filters {
                let mut acc = 0.0;
                for ti in 0..t {
                    acc += act2[[bi, f, ti]];
                }
                gap[[bi, f]] = acc / t as f64;
            }
        }
        let n_classes = self.dense_b.len();
        let mut probs = Array2::zeros((batch, n_classes));
        for bi in 0..batch {
            let mut logits = vec![0.0f64; n_classes];
            for (k, logit) in logits.iter_mut().enumerate() {
                *logit = self.dense_b[k] + self.dense_w.row(k).dot(&gap.row(bi));
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for logit in logits.iter_mut() {
                *logit = (*logit - max).exp();
                denom += *logit;
            }
            for (k, e) in logits.iter().enumerate() {
                probs[[bi, k]] = e / denom;
            }
        }
        ForwardPass {
            pre1,
            act1,
            pooled,
            pool_arg,
            pre2,
            act2,
            gap,
            probs,
        }
    }

    /// Class probabilities for a batch; rows sum to 1.
    pub fn predict_proba(&self, x: &Array3<f64>) -> Array2<f64> {
        self.forward(x).probs
    }

    pub fn predict(&self, x: &Array3<f64>) -> Vec<usize> {
        let probs = self.predict_proba(x);
        (0..probs.nrows())
            .map(|bi| {
                probs
                    .row(bi)
                    .iter()
                    .copied()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite probs").then(b.0.cmp(&a.0)))
                    .map(|(c, _)| c)
                    .expect("at least one class")
            })
            .collect()
    }

    /// Mean cross-entropy of a labeled batch.
    pub fn loss(&self, x: &Array3<f64>, y: &[usize]) -> f64 {
        let probs = self.forward(x).probs;
        let mut acc = 0.0;
        for (bi, &label) in y.iter().enumerate() {
            acc -= probs[[bi, label]].max(1e-300).ln();
        }
        acc / y.len() as f64
    }

    /// Mean cross-entropy plus analytic gradients of every layer.
    pub fn loss_and_gradients(&self, x: &Array3<f64>, y: &[usize]) -> (f64, CnnGradients) {
        let pass = self.forward(x);
        let batch = y.len();
        let n_classes = self.dense_b.len();
        let mut loss = 0.0;
        let mut d_logits = pass.probs.clone();
        for (bi, &label) in y.iter().enumerate() {
            loss -= pass.probs[[bi, label]].max(1e-300).ln();
            d_logits[[bi, label]] -= 1.0;
        }
        loss /= batch as f64;
        d_logits.mapv_inplace(|v| v / batch as f64);

        let mut grads = self.zeros_like();
        // dense layer
        for bi in 0..batch {
            for k in 0..n_classes {
                let g = d_logits[[bi, k]];
                grads.dense_b[k] += g;
                for f in 0..CONV2_FILTERS {
                    grads.dense_w[[k, f]] += g * pass.gap[[bi, f]];
                }
            }
        }
        // back through GAP
        let (_, _, t2) = pass.act2.dim();
        let mut d_act2 = Array3::zeros(pass.act2.dim());
        for bi in 0..batch {
            for f in 0..CONV2_FILTERS {
                let mut g = 0.0;
                for k in 0..n_classes {
                    g += d_logits[[bi, k]] * self.dense_w[[k, f]];
                }
                let g = g / t2 as f64;
                for ti in 0..t2 {
                    d_act2[[bi, f, ti]] = g;
                }
            }
        }
        let d_pre2 = relu_backward(&pass.pre2, &d_act2);
        let (dw2, db2, d_pooled) = conv_backward(&pass.pooled, &self.conv2_w, &d_pre2);
        grads.conv2_w = dw2;
        grads.conv2_b = db2;
        let d_act1 = maxpool_backward(pass.act1.dim(), &pass.pool_arg, &d_pooled);
        let d_pre1 = relu_backward(&pass.pre1, &d_act1);
        let (dw1, db1, _) = conv_backward(x, &self.conv1_w, &d_pre1);
        grads.conv1_w = dw1;
        grads.conv1_b = db1;
        (loss, grads)
    }

    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            self.conv1_w.as_slice().expect("contiguous"),
            self.conv1_b.as_slice().expect("contiguous"),
            self.conv2_w.as_slice().expect("contiguous"),
            self.conv2_b.as_slice().expect("contiguous"),
            self.dense_w.as_slice().expect("contiguous"),
            self.dense_b.as_slice().expect("contiguous"),
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.conv1_w.as_slice_mut().expect("contiguous"),
            self.conv1_b.as_slice_mut().expect("contiguous"),
            self.conv2_w.as_slice_mut().expect("contiguous"),
            self.conv2_b.as_slice_mut().expect("contiguous"),
            self.dense_w.as_slice_mut().expect("contiguous"),
            self.dense_b.as_slice_mut().expect("contiguous"),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn get_param(&self, index: usize) -> f64 {
        let mut i = index;
        for s in self.param_slices() {
            if i < s.len() {
                return s[i];
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for s in self.param_slices_mut() {
            if i < s.len() {
                s[i] = value;
                return;
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    fn sgd_step(&mut self, grads: &CnnGradients, velocity: &mut CnnGradients) {
        fn update(w: &mut [f64], g: &[f64], v: &mut [f64]) {
            for i in 0..w.len() {
                v[i] = MOMENTUM * v[i] - LEARNING_RATE * g[i];
                w[i] += v[i];
            }
        }
        update(
            self.conv1_w.as_slice_mut().expect("contiguous"),
            grads.conv1_w.as_slice().expect("contiguous"),
            velocity.conv1_w.as_slice_mut().expect("contiguous"),
        );
        update(
            self.conv1_b.as_slice_mut().expect("contiguous"),
            grads.conv1_b.as_slice().expect("contiguous"),
            velocity.conv1_b.as_slice_mut().expect("contiguous"),
        );
        update(
            self.conv2_w.as_slice_mut().expect("contiguous"),
            grads.conv2_w.as_slice().expect("contiguous"),
            velocity.conv2_w.as_slice_mut().expect("contiguous"),
        );
        update(
            self.conv2_b.as_slice_mut().expect("contiguous"),
            grads.conv2_b.as_slice().expect("contiguous"),
            velocity.conv2_b.as_slice_mut().expect("contiguous"),
        );
        update(
            self.dense_w.as_slice_mut().expect("contiguous"),
            grads.dense_w.as_slice().expect("contiguous"),
            velocity.dense_w.as_slice_mut().expect("contiguous"),
        );
        update(
            self.dense_b.as_slice_mut().expect("contiguous"),
            grads.dense_b.as_slice().expect("contiguous"),
            velocity.dense_b.as_slice_mut().expect("contiguous"),
        );
    }
}

impl CnnGradients {
    pub fn get(&self, index: usize) -> f64 {
        let slices: Vec<&[f64]> = vec![
            self.conv1_w.as_slice().expect("contiguous"),
            self.conv1_b.as_slice().expect("contiguous"),
            self.conv2_w.as_slice().expect("contiguous"),
            self.conv2_b.as_slice().expect("contiguous"),
            self.dense_w.as_slice().expect("contiguous"),
            self.dense_b.as_slice().expect("contiguous"),
        ];
        let mut i = index;
        for s in slices {
            if i < s.len() {
                return s[i];
            }
            i -= s.len();
        }
        panic!("gradient index {index} out of range");
    }
}

/// Reshape flattened per-row channel blocks into a (rows, channels, time)
/// batch.
pub fn rows_to_batch(values: ArrayView2<f64>, channels: usize, timesteps: usize) -> Array3<f64> {
    debug_assert_eq!(values.ncols(), channels * timesteps);
    let mut out = Array3::zeros((values.nrows(), channels, timesteps));
    for r in 0..values.nrows() {
        for c in 0..channels {
            for t in 0..timesteps {
                out[[r, c, t]] = values[[r, c * timesteps + t]];
            }
        }
    }
    out
}

/// Train one network on the given rows, recording the per-epoch curve.
fn train_one(
    x: &Array3<f64>,
    y: &[usize],
    n_classes: usize,
    epochs: usize,
    rng: &mut ChaCha8Rng,
    fold: usize,
) -> Result<(CnnNetwork, Vec<CurvePoint>)> {
    let channels = x.dim().1;
    let mut net = CnnNetwork::new(channels, n_classes, rng);
    let mut velocity = net.zeros_like();
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(BATCH_SIZE) {
            let mut bx = Array3::zeros((chunk.len(), channels, x.dim().2));
            let mut by = Vec::with_capacity(chunk.len());
            for (i, &r) in chunk.iter().enumerate() {
                for c in 0..channels {
                    for t in 0..x.dim().2 {
                        bx[[i, c, t]] = x[[r, c, t]];
                    }
                }
                by.push(y[r]);
            }
            let (loss, grads) = net.loss_and_gradients(&bx, &by);
            if !loss.is_finite() {
                return Err(Error::stage(
                    "models",
                    format!("CNN fold {fold}: loss became non-finite at epoch {epoch}"),
                ));
            }
            let preds = net.predict(&bx);
            correct += preds.iter().zip(&by).filter(|(p, t)| p == t).count();
            epoch_loss += loss * chunk.len() as f64;
            net.sgd_step(&grads, &mut velocity);
        }
        curve.push(CurvePoint {
            step: epoch + 1,
            loss: epoch_loss / n as f64,
            accuracy: correct as f64 / n as f64,
        });
    }
    Ok((net, curve))
}

/// CNN training outcome across folds.
pub struct CnnRun {
    pub fold_val_losses: Vec<f64>,
    /// Folds admitted into the prediction ensemble.
    pub ensemble_folds: Vec<usize>,
    pub predictions: Vec<usize>,
    pub curve: Vec<CurvePoint>,
    pub wall_ms: f64,
}

/// Train one network per fold, ensemble the folds whose final validation
/// loss is within `loss_threshold` of the best, and majority-vote the test
/// predictions.
pub fn fit_predict_cnn(
    data: &super::TrainData,
    test_x: ArrayView2<f64>,
    shape: (usize, usize),
    cfg: &CnnConfig,
    seed: u64,
) -> Result<CnnRun> {
    let start = std::time::Instant::now();
    let (channels, timesteps) = shape;
    if data.x.ncols() != channels * timesteps {
        return Err(Error::stage(
            "models",
            format!(
                "CNN input shape {}x{} does not match {} columns",
                channels,
                timesteps,
                data.x.ncols()
            ),
        ));
    }
    let k = cfg.k_fold;
    let outcomes: Vec<Result<(CnnNetwork, Vec<CurvePoint>, f64)>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let fit_rows: Vec<usize> = (0..data.y.len())
                .filter(|&pos| data.folds[pos] != fold)
                .collect();
            let val_rows: Vec<usize> = (0..data.y.len())
                .filter(|&pos| data.folds[pos] == fold)
                .collect();
            if fit_rows.is_empty() || val_rows.is_empty() {
                return Err(Error::stage(
                    "models",
                    format!("CNN fold {fold} has an empty partition"),
                ));
            }
            let gather = |rows: &[usize]| {
                let mut m = Array2::zeros((rows.len(), data.x.ncols()));
                for (i, &r) in rows.iter().enumerate() {
                    m.row_mut(i).assign(&data.x.row(r));
                }
                m
            };
            let fit_x = rows_to_batch(gather(&fit_rows).view(), channels, timesteps);
            let fit_y: Vec<usize> = fit_rows.iter().map(|&pos| data.y[pos]).collect();
            let mut rng = stream(seed, &format!("model:CNN:fold{fold}"));
            let (net, curve) =
                train_one(&fit_x, &fit_y, data.n_classes, cfg.epochs, &mut rng, fold)?;
            let val_x = rows_to_batch(gather(&val_rows).view(), channels, timesteps);
            let val_y: Vec<usize> = val_rows.iter().map(|&pos| data.y[pos]).collect();
            let val_loss = net.loss(&val_x, &val_y);
            Ok((net, curve, val_loss))
        })
        .collect();

    let mut nets = Vec::with_capacity(k);
    let mut curves = Vec::with_capacity(k);
    let mut fold_val_losses = Vec::with_capacity(k);
    for outcome in outcomes {
        let (net, curve, val_loss) = outcome?;
        nets.push(net);
        curves.push(curve);
        fold_val_losses.push(val_loss);
    }

    let best_fold = fold_val_losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite losses").then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one fold");
    let min_loss = fold_val_losses[best_fold];
    let ensemble_folds: Vec<usize> = (0..k)
        .filter(|&f| fold_val_losses[f] <= min_loss + cfg.loss_threshold)
        .collect();

    let test_batch = rows_to_batch(test_x, channels, timesteps);
    let member_preds: Vec<Vec<usize>> = ensemble_folds
        .iter()
        .map(|&f| nets[f].predict(&test_batch))
        .collect();
    let predictions: Vec<usize> = (0..test_x.nrows())
        .map(|r| {
            let mut votes = vec![0usize; data.n_classes];
            for preds in &member_preds {
                votes[preds[r]] += 1;
            }
            votes
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .expect("at least one class")
        })
        .collect();

    Ok(CnnRun {
        fold_val_losses,
        ensemble_folds,
        predictions,
        curve: curves[best_fold].clone(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Two-class sequences: class 0 drifts negative, class 1 positive.
    fn synth_sequences(per_class: usize, t: usize) -> (Array3<f64>, Vec<usize>) {
        let n = per_class * 2;
        let mut x = Array3::zeros((n, 2, t));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % 2;
            let sign = if label == 0 { -1.0 } else { 1.0 };
            for c in 0..2 {
                for ti in 0..t {
                    let jitter = (((i * 31 + c * 17 + ti * 7) % 23) as f64 / 23.0 - 0.5) * 0.4;
                    x[[i, c, ti]] = sign * (0.8 + 0.2 * (ti as f64 / t as f64)) + jitter;
                }
            }
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = stream(1, "cnn-test");
        let net = CnnNetwork::new(2, 3, &mut rng);
        let (x, _) = synth_sequences(4, 12);
        let probs = net.predict_proba(&x);
        for r in 0..probs.nrows() {
            let sum: f64 = probs.row(r).sum();
            assert!((sum - 1.0).abs() < 1e-9, "row {r} sums to {sum}");
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = stream(7, "cnn-grad");
        let mut net = CnnNetwork::new(2, 3, &mut rng);
        let (x, mut y) = synth_sequences(2, 9); // 4 rows; use 3
        let x = x.slice(ndarray::s![..3, .., ..]).to_owned();
        y.truncate(3);
        y[2] = 2; // exercise all three classes
        let (_, grads) = net.loss_and_gradients(&x, &y);
        let h = 1e-5;
        let n_params = net.num_params();
        let mut worst = 0.0f64;
        for i in 0..n_params {
            let orig = net.get_param(i);
            net.set_param(i, orig + h);
            let up = net.loss(&x, &y);
            net.set_param(i, orig - h);
            let down = net.loss(&x, &y);
            net.set_param(i, orig);
            let fd = (up - down) / (2.0 * h);
            let analytic = grads.get(i);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "param {i}: analytic {analytic} vs fd {fd} (rel {rel})"
            );
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn learns_separable_sequences() {
        let (x, y) = synth_sequences(30, 16);
        let mut rng = stream(3, "cnn-learn");
        let (net, curve) = train_one(&x, &y, 2, 40, &mut rng, 0).unwrap();
        // loss strictly decreases over the first 10 epochs
        for e in 1..10 {
            assert!(
                curve[e].loss < curve[e - 1].loss,
                "loss rose at epoch {e}: {} -> {}",
                curve[e - 1].loss,
                curve[e].loss
            );
        }
        let preds = net.predict(&x);
        let acc = preds.iter().zip(&y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64;
        assert!(acc >= 0.95, "training accuracy {acc}");
        assert_eq!(curve.len(), 40);
    }

    #[test]
    fn zero_threshold_keeps_only_the_best_fold() {
        let (x3, y) = synth_sequences(18, 12);
        // flatten to the matrix layout the pipeline uses
        let n = y.len();
        let mut flat = Array2::zeros((n, 2 * 12));
        for r in 0..n {
            for c in 0..2 {
                for t in 0..12 {
                    flat[[r, c * 12 + t]] = x3[[r, c, t]];
                }
            }
        }
        let folds: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let data = crate::models::TrainData {
            x: flat.view(),
            y: &y,
            folds: &folds,
            k_fold: 3,
            n_classes: 2,
            class_names: &names,
        };
        let run = fit_predict_cnn(
            &data,
            flat.view(),
            (2, 12),
            &CnnConfig {
                epochs: 8,
                k_fold: 3,
                loss_threshold: 0.0,
            },
            11,
        )
        .unwrap();
        assert_eq!(run.ensemble_folds.len(), 1);
        assert_eq!(run.curve.len(), 8);
        assert_eq!(run.fold_val_losses.len(), 3);
        // wide threshold admits everyone
        let run_all = fit_predict_cnn(
            &data,
            flat.view(),
            (2, 12),
            &CnnConfig {
                epochs: 8,
                k_fold: 3,
                loss_threshold: 1e9,
            },
            11,
        )
        .unwrap();
        assert_eq!(run_all.ensemble_folds, vec![0, 1, 2]);
    }
}
