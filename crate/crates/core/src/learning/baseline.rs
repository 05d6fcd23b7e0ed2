//! Dense 25 → hidden → 10 sigmoid network trained by per-sample SGD on
//! squared error, the software reference for the analog circuits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::metrics::{evaluate, Metrics, ResponseRow, CLASSES};
use super::LearningError;
use crate::data::{Sample, SAMPLE_LEN};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            learning_rate: 0.2,
            epochs: 5,
            rng_seed: 0,
        }
    }
}

/// Weights are stored row-major, `w1[h * 25 + i]`, `w2[o * hidden + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intensities mapped to [0.01, 1.0].
pub fn scale_input(s: &Sample) -> [f64; SAMPLE_LEN] {
    s.values.map(|v| v as f64 / 255.0 * 0.99 + 0.01)
}

pub fn target(label: u8) -> [f64; CLASSES] {
    let mut t = [0.01; CLASSES];
    t[label as usize] = 0.99;
    t
}

impl BaselineModel {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = Normal::new(0.0, (SAMPLE_LEN as f64).powf(-0.5)).expect("positive sigma");
        let n2 = Normal::new(0.0, (hidden as f64).powf(-0.5)).expect("positive sigma");
        Self {
            hidden,
            w1: (0..hidden * SAMPLE_LEN).map(|_| n1.sample(&mut rng)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..CLASSES * hidden).map(|_| n2.sample(&mut rng)).collect(),
            b2: vec![0.0; CLASSES],
        }
    }

    fn forward(&self, x: &[f64; SAMPLE_LEN]) -> (Vec<f64>, [f64; CLASSES]) {
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * SAMPLE_LEN..(j + 1) * SAMPLE_LEN];
                sigmoid(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j])
            })
            .collect();
        let mut y = [0.0; CLASSES];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            *yo = sigmoid(row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + self.b2[o]);
        }
        (h, y)
    }

    pub fn predict(&self, s: &Sample) -> [f64; CLASSES] {
        self.forward(&scale_input(s)).1
    }

    /// `0.5 Σ (y − t)²` summed over `batch`.
    pub fn loss(&self, batch: &[Sample]) -> f64 {
        batch
            .iter()
            .map(|s| {
                let y = self.predict(s);
                let t = target(s.label);
                0.5 * y.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters in the order w1, b1, w2, b2.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    /// Gradient of [`BaselineModel::loss`], flattened like
    /// [`BaselineModel::params_mut`].
    pub fn gradient(&self, batch: &[Sample]) -> Vec<f64> {
        let (n1, nb1, n2) = (self.w1.len(), self.b1.len(), self.w2.len());
        let mut g = vec![0.0; self.param_count()];
        for s in batch {
            let x = scale_input(s);
            let (h, y) = self.forward(&x);
            let t = target(s.label);
            let d_out: Vec<f64> = (0..CLASSES).map(|o| (y[o] - t[o]) * y[o] * (1.0 - y[o])).collect();
            for j in 0..self.hidden {
                let back: f64 = (0..CLASSES).map(|o| d_out[o] * self.w2[o * self.hidden + j]).sum();
                let d_h = back * h[j] * (1.0 - h[j]);
                for i in 0..SAMPLE_LEN {
                    g[j * SAMPLE_LEN + i] += d_h * x[i];
                }
                g[n1 + j] += d_h;
            }
            for o in 0..CLASSES {
                for j in 0..self.hidden {
                    g[n1 + nb1 + o * self.hidden + j] += d_out[o] * h[j];
                }
                g[n1 + nb1 + n2 + o] += d_out[o];
            }
        }
        g
    }

    fn sgd_step(&mut self, s: &Sample, lr: f64) -> f64 {
        let x = scale_input(s);
        let (h, y) = self.forward(&x);
        let t = target(s.label);
        let mut loss = 0.0;
        let mut d_out = [0.0; CLASSES];
        for o in 0..CLASSES {
            loss += 0.5 * (y[o] - t[o]) * (y[o] - t[o]);
            d_out[o] = (y[o] - t[o]) * y[o] * (1.0 - y[o]);
        }
        for j in 0..self.hidden {
            let back: f64 = (0..CLASSES).map(|o| d_out[o] * self.w2[o * self.hidden + j]).sum();
            let d_h = back * h[j] * (1.0 - h[j]);
            let row = &mut self.w1[j * SAMPLE_LEN..(j + 1) * SAMPLE_LEN];
            for (w, xi) in row.iter_mut().zip(&x) {
                *w -= lr * d_h * xi;
            }
            self.b1[j] -= lr * d_h;
        }
        for o in 0..CLASSES {
            let row = &mut self.w2[o * self.hidden..(o + 1) * self.hidden];
            for (w, hj) in row.iter_mut().zip(&h) {
                *w -= lr * d_out[o] * hj;
            }
            self.b2[o] -= lr * d_out[o];
        }
        loss
    }
}

/// Per-sample SGD over shuffled passes of `train`.
pub fn baseline_train(train: &[Sample], cfg: &BaselineConfig) -> Result<BaselineModel, LearningError> {
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) || cfg.hidden == 0 {
        return Err(LearningError::InvalidConfig("learning rate and hidden size must be positive".into()));
    }
    let mut model = BaselineModel::new(cfg.hidden, cfg.rng_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &k in &order {
            total += model.sgd_step(&train[k], cfg.learning_rate);
        }
        if !total.is_finite() {
            return Err(LearningError::NonFinite("training loss".into()));
        }
    }
    Ok(model)
}

pub fn baseline_eval(model: &BaselineModel, test: &[Sample]) -> Result<Metrics, LearningError> {
    let rows: Vec<ResponseRow> = test
        .iter()
        .map(|s| ResponseRow {
            label: s.label,
            responses: model.predict(s).to_vec(),
        })
        .collect();
    Ok(evaluate(&rows, None, "sigmoid")?.1)
}
