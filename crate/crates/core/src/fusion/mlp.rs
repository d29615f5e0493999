use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::fit::FusionSample;
use crate::container::{read_bundle, write_bundle, TensorEntry};
use crate::error::{Error, Result};
use crate::nn::PredictionVector;
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Each input vector is multiplied by a factor drawn from this range.
    pub scale_range: (f64, f64),
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            scale_range: (0.95, 1.05),
        }
    }
}

/// One hidden ReLU layer on the concatenated `[vocal, echoic]` posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpFusionModel {
    pub n_classes: usize,
    pub hidden: usize,
    /// `(hidden, 2·n_classes)` row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `(n_classes, hidden)` row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MlpMeta {
    n_classes: usize,
    hidden: usize,
}

impl MlpFusionModel {
    pub fn zeros(n_classes: usize, hidden: usize) -> Self {
        Self {
            n_classes,
            hidden,
            w1: vec![0.0; hidden * 2 * n_classes],
            b1: vec![0.0; hidden],
            w2: vec![0.0; n_classes * hidden],
            b2: vec![0.0; n_classes],
        }
    }

    fn init<R: Rng + ?Sized>(n_classes: usize, hidden: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(n_classes, hidden);
        let n1 = Normal::new(0.0, (2.0 / (2 * n_classes) as f64).sqrt()).expect("positive std");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("positive std");
        m.w1.iter_mut().for_each(|w| *w = n1.sample(rng));
        m.w2.iter_mut().for_each(|w| *w = n2.sample(rng));
        m
    }

    fn input_len(&self) -> usize {
        2 * self.n_classes
    }

    /// Hidden activations and logits for one input.
    fn run(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.input_len();
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * d..(j + 1) * d];
                (self.b1[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).max(0.0)
            })
            .collect();
        let z = (0..self.n_classes)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                self.b2[k] + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        (h, z)
    }

    pub fn forward(&self, x: &[f64]) -> Result<PredictionVector> {
        if x.len() != self.input_len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} inputs", self.input_len()),
                got: format!("{}", x.len()),
            });
        }
        Ok(PredictionVector {
            probs: softmax(&self.run(x).1),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let d = self.input_len();
        let entry = |name: &str, shape: Vec<usize>| TensorEntry {
            name: name.into(),
            shape,
        };
        write_bundle(
            path,
            "mlp-fusion",
            &MlpMeta {
                n_classes: self.n_classes,
                hidden: self.hidden,
            },
            &[
                (entry("fc1.weight", vec![self.hidden, d]), &self.w1),
                (entry("fc1.bias", vec![self.hidden]), &self.b1),
                (entry("fc2.weight", vec![self.n_classes, self.hidden]), &self.w2),
                (entry("fc2.bias", vec![self.n_classes]), &self.b2),
            ],
        )
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, tensors): (MlpMeta, _) = read_bundle(path, "mlp-fusion")?;
        let mut m = Self::zeros(meta.n_classes, meta.hidden);
        if tensors.len() != 4 {
            return Err(Error::Container(format!("expected 4 MLP tensors, found {}", tensors.len())));
        }
        for ((_, data), dst) in tensors.into_iter().zip([&mut m.w1, &mut m.b1, &mut m.w2, &mut m.b2]) {
            if data.len() != dst.len() {
                return Err(Error::Container("MLP tensor size does not match its metadata".into()));
            }
            *dst = data;
        }
        Ok(m)
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Fused posterior from the concatenation `[vocal, echoic]`.
pub fn mlp_fuse(model: &MlpFusionModel, vocal: &PredictionVector, echoic: &PredictionVector) -> Result<PredictionVector> {
    if vocal.len() != model.n_classes || echoic.len() != model.n_classes {
        return Err(Error::ShapeMismatch {
            expected: format!("two vectors of {} classes", model.n_classes),
            got: format!("{} and {}", vocal.len(), echoic.len()),
        });
    }
    let x: Vec<f64> = vocal.probs.iter().chain(&echoic.probs).copied().collect();
    model.forward(&x)
}

#[derive(Debug, Clone)]
pub struct MlpReport {
    pub model: MlpFusionModel,
    pub losses: Vec<f64>,
    pub final_accuracy: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>], cfg: &MlpConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (w, &gi) in p.iter_mut().zip(g) {
                self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * gi;
                self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * gi * gi;
                *w -= cfg.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + 1e-8);
                k += 1;
            }
        }
    }
}

/// Adam on cross-entropy. Each epoch rescales every input vector by a fresh
/// factor from `scale_range`.
pub fn train_mlp_fusion(samples: &[FusionSample], cfg: &MlpConfig, seed: u64) -> Result<MlpReport> {
    if samples.is_empty() {
        return Err(Error::Empty("fusion training set"));
    }
    if cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(cfg.scale_range.0 <= cfg.scale_range.1) {
        return Err(Error::Config(format!("invalid MLP configuration {cfg:?}")));
    }
    let n_classes = samples[0].vocal.len();
    if samples.iter().any(|s| s.vocal.len() != n_classes || s.echoic.len() != n_classes || s.label >= n_classes) {
        return Err(Error::ShapeMismatch {
            expected: format!("{n_classes}-class samples"),
            got: "inconsistent sample".into(),
        });
    }
    let mut model = MlpFusionModel::init(n_classes, cfg.hidden, &mut rng_for(seed, stream::INIT, 1));
    let d = 2 * n_classes;
    let total = model.w1.len() + model.b1.len() + model.w2.len() + model.b2.len();
    let mut adam = Adam {
        m: vec![0.0; total],
        v: vec![0.0; total],
        t: 0,
    };
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut final_accuracy = 0.0;
    for epoch in 0..cfg.epochs {
        let mut rng = rng_for(seed, stream::FUSION_AUG, epoch as u64);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss, mut correct) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let mut g1 = vec![0.0; model.w1.len()];
            let mut gb1 = vec![0.0; model.b1.len()];
            let mut g2 = vec![0.0; model.w2.len()];
            let mut gb2 = vec![0.0; model.b2.len()];
            let scale = 1.0 / idx.len() as f64;
            for &i in idx {
                let s = &samples[i];
                let fv = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
                let fe = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
                let x: Vec<f64> = s
                    .vocal
                    .probs
                    .iter()
                    .map(|p| p * fv)
                    .chain(s.echoic.probs.iter().map(|p| p * fe))
                    .collect();
                let (h, z) = model.run(&x);
                let p = softmax(&z);
                loss -= p[s.label].max(1e-300).ln();
                let argmax = (0..n_classes).fold(0, |a, k| if p[k] > p[a] { k } else { a });
                correct += usize::from(argmax == s.label);
                let mut dh = vec![0.0; cfg.hidden];
                for k in 0..n_classes {
                    let dz = (p[k] - if k == s.label { 1.0 } else { 0.0 }) * scale;
                    gb2[k] += dz;
                    for j in 0..cfg.hidden {
                        g2[k * cfg.hidden + j] += dz * h[j];
                        dh[j] += dz * model.w2[k * cfg.hidden + j];
                    }
                }
                for j in 0..cfg.hidden {
                    if h[j] <= 0.0 {
                        continue;
                    }
                    gb1[j] += dh[j];
                    for (g, xi) in g1[j * d..(j + 1) * d].iter_mut().zip(&x) {
                        *g += dh[j] * xi;
                    }
                }
            }
            let MlpFusionModel { w1, b1, w2, b2, .. } = &mut model;
            adam.step(&mut [w1, b1, w2, b2], &[g1, gb1, g2, gb2], cfg);
        }
        let mean = loss / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NanLoss { epoch });
        }
        losses.push(mean);
        final_accuracy = correct as f64 / samples.len() as f64;
    }
    Ok(MlpReport {
        model,
        losses,
        final_accuracy,
    })
}
