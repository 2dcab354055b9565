//! One-hidden-layer tanh regressor trained with Adam on standardized data,
//! with a cosine learning-rate schedule.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 2000,
            batch_size: 16,
            learning_rate: 3e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut std = vec![0.0; d];
        for r in rows {
            for ((s, x), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (x - m) * (x - m) / n;
            }
        }
        for (k, s) in std.iter_mut().enumerate() {
            *s = s.sqrt();
            if rows.iter().all(|r| r[k] == rows[0][k]) {
                mean[k] = rows[0][k];
                *s = 0.0;
            }
        }
        Self { mean, std }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    }

    fn inverse(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((y, m), s)| m + y * s)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub inputs: usize,
    pub outputs: usize,
    pub hidden: usize,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
    /// `hidden x inputs`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `outputs x hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Set when every output was constant in the training data.
    pub constant: bool,
    /// Final mean squared error on the standardized training outputs.
    pub training_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

impl SurrogateModel {
    fn hidden_layer(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
                (self.b1[j] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()).tanh()
            })
            .collect()
    }

    fn output_layer(&self, h: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                self.b2[k] + row.iter().zip(h).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect()
    }

    /// Prediction in the original output units.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        if self.constant {
            return self.output_norm.mean.clone();
        }
        let xs = self.input_norm.forward(x);
        let y = self.output_layer(&self.hidden_layer(&xs));
        self.output_norm.inverse(&y)
    }

    fn standardized_loss(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let p = self.output_layer(&self.hidden_layer(x));
            total += p.iter().zip(y).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
        }
        total / (xs.len() * self.outputs) as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if model.w1.len() != model.hidden * model.inputs || model.w2.len() != model.outputs * model.hidden {
            return Err(Error::domain("surrogate weights do not match the stated layer widths"));
        }
        Ok(model)
    }
}

/// Fits the regressor to `(inputs, outputs)` rows. Deterministic per seed.
pub fn fit_surrogate(inputs: &[Vec<f64>], outputs: &[Vec<f64>], params: &TrainParams) -> Result<SurrogateModel> {
    if inputs.len() < 10 || inputs.len() != outputs.len() {
        return Err(Error::domain("need at least 10 matching input/output rows"));
    }
    if params.hidden == 0 || params.batch_size == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::domain("hidden width, batch size and learning rate must be positive"));
    }
    let n_in = inputs[0].len();
    let n_out = outputs[0].len();
    let finite = |rows: &[Vec<f64>], d: usize| rows.iter().all(|r| r.len() == d && r.iter().all(|v| v.is_finite()));
    if !finite(inputs, n_in) || !finite(outputs, n_out) {
        return Err(Error::domain("training rows must be finite and of equal width"));
    }
    let input_norm = Standardizer::fit(inputs);
    let output_norm = Standardizer::fit(outputs);
    let h = params.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init1 = Normal::new(0.0, (1.0 / n_in as f64).sqrt()).expect("valid std");
    let init2 = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("valid std");
    let mut model = SurrogateModel {
        inputs: n_in,
        outputs: n_out,
        hidden: h,
        w1: (0..h * n_in).map(|_| init1.sample(&mut rng)).collect(),
        b1: vec![0.0; h],
        w2: (0..n_out * h).map(|_| init2.sample(&mut rng)).collect(),
        b2: vec![0.0; n_out],
        input_norm,
        output_norm,
        constant: false,
        training_loss: 0.0,
    };
    if model.output_norm.std.iter().all(|s| *s == 0.0) {
        log::warn!("all surrogate outputs are constant; fitting a constant predictor");
        model.constant = true;
        return Ok(model);
    }
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| model.input_norm.forward(x)).collect();
    let ys: Vec<Vec<f64>> = outputs.iter().map(|y| model.output_norm.forward(y)).collect();

    let mut opt = [Adam::new(h * n_in), Adam::new(h), Adam::new(n_out * h), Adam::new(n_out)];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut g_w1 = vec![0.0; h * n_in];
    let mut g_b1 = vec![0.0; h];
    let mut g_w2 = vec![0.0; n_out * h];
    let mut g_b2 = vec![0.0; n_out];
    let mut delta_h = vec![0.0; h];
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let lr = 0.5 * params.learning_rate * (1.0 + (std::f64::consts::PI * epoch as f64 / params.epochs as f64).cos());
        for batch in order.chunks(params.batch_size) {
            g_w1.iter_mut().for_each(|g| *g = 0.0);
            g_b1.iter_mut().for_each(|g| *g = 0.0);
            g_w2.iter_mut().for_each(|g| *g = 0.0);
            g_b2.iter_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / (batch.len() * n_out) as f64;
            for &i in batch {
                let x = &xs[i];
                let hid = model.hidden_layer(x);
                let out = model.output_layer(&hid);
                delta_h.iter_mut().for_each(|d| *d = 0.0);
                for k in 0..n_out {
                    let err = scale * (out[k] - ys[i][k]);
                    g_b2[k] += err;
                    let row = k * h;
                    for j in 0..h {
                        g_w2[row + j] += err * hid[j];
                        delta_h[j] += err * model.w2[row + j];
                    }
                }
                for j in 0..h {
                    let d = delta_h[j] * (1.0 - hid[j] * hid[j]);
                    g_b1[j] += d;
                    let row = j * n_in;
                    for (g, xv) in g_w1[row..row + n_in].iter_mut().zip(x) {
                        *g += d * xv;
                    }
                }
            }
            opt[0].step(&mut model.w1, &g_w1, lr);
            opt[1].step(&mut model.b1, &g_b1, lr);
            opt[2].step(&mut model.w2, &g_w2, lr);
            opt[3].step(&mut model.b2, &g_b2, lr);
        }
    }
    model.training_loss = model.standardized_loss(&xs, &ys);
    Ok(model)
}

/// Root-mean-square error of each output column divided by that column's
/// spread (max - min) in `truth`. Columns without spread are skipped.
pub fn normalized_rmse(predicted: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<Option<f64>> {
    let d = truth[0].len();
    (0..d)
        .map(|k| {
            let lo = truth.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
            let hi = truth.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= 0.0 {
                return None;
            }
            let mse = predicted
                .iter()
                .zip(truth)
                .map(|(p, t)| (p[k] - t[k]).powi(2))
                .sum::<f64>()
                / truth.len() as f64;
            Some(mse.sqrt() / (hi - lo))
        })
        .collect()
}
