//! Single-layer tanh recurrent network with a linear (or sigmoid) head,
//! trained by mini-batch Adam with early stopping on validation loss.
//!
//! Only the real rows of a prefix are fed through the cell, so leading
//! padding never influences the output.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
}

impl Default for RecurrentConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 0.005,
            epochs: 40,
            batch_size: 32,
            patience: 5,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentModel {
    pub width: usize,
    pub hidden: usize,
    /// `[w_x (h*n) | w_h (h*h) | b (h) | v (h) | c]`
    pub params: Vec<f64>,
    pub binary: bool,
    pub target_mean: f64,
    pub target_scale: f64,
    pub epochs_run: usize,
}

struct Layout {
    wx: usize,
    wh: usize,
    b: usize,
    v: usize,
    c: usize,
    total: usize,
}

impl Layout {
    fn new(width: usize, hidden: usize) -> Self {
        let wx = 0;
        let wh = wx + hidden * width;
        let b = wh + hidden * hidden;
        let v = b + hidden;
        let c = v + hidden;
        Self {
            wx,
            wh,
            b,
            v,
            c,
            total: c + 1,
        }
    }
}

/// A training example: the real rows of a prefix and a target.
pub struct Sample<'a> {
    pub rows: &'a [f64],
    pub target: f64,
}

impl RecurrentModel {
    fn layout(&self) -> Layout {
        Layout::new(self.width, self.hidden)
    }

    /// Raw head output over `rows` (real rows only, row-major).
    fn forward(&self, rows: &[f64], states: Option<&mut Vec<f64>>) -> f64 {
        let (n, h) = (self.width, self.hidden);
        let l = self.layout();
        let p = &self.params;
        let mut state = vec![0.0; h];
        let mut next = vec![0.0; h];
        let mut record = states;
        if let Some(s) = record.as_deref_mut() {
            s.clear();
            s.extend_from_slice(&state);
        }
        for x in rows.chunks_exact(n) {
            for k in 0..h {
                let mut a = p[l.b + k];
                let wx = &p[l.wx + k * n..l.wx + (k + 1) * n];
                for (w, xi) in wx.iter().zip(x) {
                    a += w * xi;
                }
                let wh = &p[l.wh + k * h..l.wh + (k + 1) * h];
                for (w, hi) in wh.iter().zip(&state) {
                    a += w * hi;
                }
                next[k] = a.tanh();
            }
            std::mem::swap(&mut state, &mut next);
            if let Some(s) = record.as_deref_mut() {
                s.extend_from_slice(&state);
            }
        }
        p[l.c]
            + p[l.v..l.v + h]
                .iter()
                .zip(&state)
                .map(|(v, s)| v * s)
                .sum::<f64>()
    }

    /// Prediction for a padded prefix whose last `len` rows are real.
    pub fn predict(&self, chi: &[f64], len: usize) -> f64 {
        let start = chi.len() - len * self.width;
        let out = self.forward(&chi[start..], None);
        if self.binary {
            sigmoid(out)
        } else {
            out * self.target_scale + self.target_mean
        }
    }

    /// Loss on one sample and its gradient accumulated into `grad`.
    fn backward(
        &self,
        sample: &Sample,
        states: &mut Vec<f64>,
        grad: &mut [f64],
        scale: f64,
    ) -> f64 {
        let (n, h) = (self.width, self.hidden);
        let l = self.layout();
        let p = &self.params;
        let out = self.forward(sample.rows, Some(states));
        let (loss, dout) = if self.binary {
            let q = sigmoid(out).clamp(1e-12, 1.0 - 1e-12);
            let y = sample.target;
            (-(y * q.ln() + (1.0 - y) * (1.0 - q).ln()), sigmoid(out) - y)
        } else {
            let y = (sample.target - self.target_mean) / self.target_scale;
            ((out - y).powi(2), 2.0 * (out - y))
        };
        let dout = dout * scale;
        let steps = sample.rows.len() / n;
        let last = &states[steps * h..(steps + 1) * h];
        grad[l.c] += dout;
        let mut dh: Vec<f64> = (0..h).map(|k| dout * p[l.v + k]).collect();
        for k in 0..h {
            grad[l.v + k] += dout * last[k];
        }
        let mut da = vec![0.0; h];
        for t in (0..steps).rev() {
            let cur = &states[(t + 1) * h..(t + 2) * h];
            let prev = &states[t * h..(t + 1) * h];
            let x = &sample.rows[t * n..(t + 1) * n];
            for k in 0..h {
                da[k] = dh[k] * (1.0 - cur[k] * cur[k]);
            }
            for k in 0..h {
                grad[l.b + k] += da[k];
                let gx = &mut grad[l.wx + k * n..l.wx + (k + 1) * n];
                for (g, xi) in gx.iter_mut().zip(x) {
                    *g += da[k] * xi;
                }
                let gh = &mut grad[l.wh + k * h..l.wh + (k + 1) * h];
                for (g, hi) in gh.iter_mut().zip(prev) {
                    *g += da[k] * hi;
                }
            }
            for j in 0..h {
                dh[j] = (0..h).map(|k| p[l.wh + k * h + j] * da[k]).sum();
            }
        }
        loss
    }

    fn mean_loss(&self, samples: &[Sample]) -> f64 {
        if samples.is_empty() {
            return f64::NAN;
        }
        let mut states = Vec::new();
        let mut sink = vec![0.0; self.params.len()];
        samples
            .iter()
            .map(|s| self.backward(s, &mut states, &mut sink, 0.0))
            .sum::<f64>()
            / samples.len() as f64
    }
}

/// Trains a recurrent model. Validation samples only drive early stopping;
/// with no validation samples the training loss is monitored instead.
pub fn fit_recurrent(
    config: &RecurrentConfig,
    width: usize,
    binary: bool,
    train: &[Sample],
    validation: &[Sample],
    seed: u64,
) -> RecurrentModel {
    assert!(!train.is_empty());
    let h = config.hidden.max(1);
    let layout = Layout::new(width, h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; layout.total];
    let bound_x = (6.0 / (width + h) as f64).sqrt();
    let bound_h = (3.0 / h as f64).sqrt();
    for w in &mut params[layout.wx..layout.wh] {
        *w = rng.gen_range(-bound_x..bound_x);
    }
    for w in &mut params[layout.wh..layout.b] {
        *w = rng.gen_range(-bound_h..bound_h) * 0.5;
    }
    for w in &mut params[layout.v..layout.c] {
        *w = rng.gen_range(-bound_h..bound_h);
    }

    let (target_mean, target_scale) = if binary {
        (0.0, 1.0)
    } else {
        let n = train.len() as f64;
        let mean = train.iter().map(|s| s.target).sum::<f64>() / n;
        let var = train.iter().map(|s| (s.target - mean).powi(2)).sum::<f64>() / n;
        (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
    };
    if binary {
        let rate = train.iter().map(|s| s.target).sum::<f64>() / train.len() as f64;
        let rate = rate.clamp(1e-6, 1.0 - 1e-6);
        params[layout.c] = (rate / (1.0 - rate)).ln();
    }

    let mut model = RecurrentModel {
        width,
        hidden: h,
        params,
        binary,
        target_mean,
        target_scale,
        epochs_run: 0,
    };
    let monitor = if validation.is_empty() {
        train
    } else {
        validation
    };
    let mut best = (model.mean_loss(monitor), model.params.clone());
    let mut stale = 0;

    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; layout.total];
    let mut v = vec![0.0; layout.total];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; layout.total];
    let mut states = Vec::new();
    let batch = config.batch_size.max(1);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.fill(0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                model.backward(&train[i], &mut states, &mut grad, scale);
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > config.clip_norm {
                let f = config.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= f);
            }
            step += 1;
            let c1 = 1.0 - b1.powi(step);
            let c2 = 1.0 - b2.powi(step);
            for k in 0..layout.total {
                m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
                v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
                model.params[k] -= config.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
        model.epochs_run = epoch + 1;
        let loss = model.mean_loss(monitor);
        if loss < best.0 {
            best = (loss, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    model.params = best.1;
    model
}
