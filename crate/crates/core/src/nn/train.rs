use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward, build_model, gaussian, logits, normalise_input, softmax_rows, Pass, Plan};
use super::{ModelWeights, NetConfig};
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub warmup_epochs: usize,
    pub peak_lr: f64,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// L2 penalty on convolution and classifier weights.
    pub weight_decay: f64,
    pub seed: u64,
    /// Additive Gaussian noise, σ drawn from `[0, noise_sigma_max]` per sample.
    pub random_noise: bool,
    pub noise_sigma_max: f64,
    /// Zero-filled time shift of up to `max_shift_fraction` of the frames.
    pub random_padding: bool,
    pub max_shift_fraction: f64,
    /// Substitute a pre-rendered noisy variant with probability `overlay_prob`.
    pub background_overlay: bool,
    pub overlay_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup_epochs: 50,
            peak_lr: 0.1,
            total_epochs: 1000,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            random_noise: true,
            noise_sigma_max: 0.02,
            random_padding: true,
            max_shift_fraction: 0.1,
            background_overlay: true,
            overlay_prob: 0.5,
        }
    }
}

impl TrainConfig {
    /// The same schedule shape shortened to a desk-scale budget.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            warmup_epochs: 8,
            total_epochs: 150,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs >= self.total_epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) must be below total_epochs ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if !(self.peak_lr > 0.0) {
            return Err(Error::Config("peak_lr must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.overlay_prob) || !(0.0..=0.5).contains(&self.max_shift_fraction) {
            return Err(Error::Config("augmentation probabilities out of range".into()));
        }
        Ok(())
    }
}

/// Learning rate at `epoch`: linear warm-up from zero, then cosine decay.
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch < cfg.warmup_epochs {
        cfg.peak_lr * epoch as f64 / cfg.warmup_epochs as f64
    } else {
        let span = (cfg.total_epochs - cfg.warmup_epochs) as f64;
        let t = (epoch - cfg.warmup_epochs) as f64 / span;
        cfg.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// Noisy copies of the training features, `variants` per sample, laid out
/// sample-major: variant `j` of sample `i` starts at `(i·variants + j)·len`.
#[derive(Debug, Clone, Copy)]
pub struct BackgroundPool<'a> {
    pub data: &'a [f64],
    pub variants: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    /// Raw features, sample-major `(n, C, H, W)`.
    pub features: &'a [f64],
    pub labels: &'a [usize],
    pub background: Option<BackgroundPool<'a>>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub weights: ModelWeights,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    /// Accuracy on the augmented batches of the last epoch.
    pub final_accuracy: f64,
}

fn channel_stats(features: &[f64], channels: usize, hw: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; channels];
    let mut sq = vec![0.0; channels];
    let mut count = vec![0usize; channels];
    for (i, v) in features.iter().enumerate() {
        let c = (i / hw) % channels;
        sum[c] += v;
        sq[c] += v * v;
        count[c] += 1;
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
    let std = sq
        .iter()
        .zip(&count)
        .zip(&mean)
        .map(|((q, &n), m)| {
            let s = (q / n as f64 - m * m).max(0.0).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

/// Shifts every row of a `(C, H, W)` tensor along W by `shift`, zero-filled.
fn shift_time(x: &mut [f64], width: usize, shift: isize) {
    if shift == 0 {
        return;
    }
    for row in x.chunks_mut(width) {
        if shift > 0 {
            let s = (shift as usize).min(width);
            row.copy_within(0..width - s, s);
            row[..s].fill(0.0);
        } else {
            let s = ((-shift) as usize).min(width);
            row.copy_within(s..width, 0);
            row[width - s..].fill(0.0);
        }
    }
}

/// Mini-batch SGD with momentum on cross-entropy loss.
pub fn train(config: &NetConfig, cfg: &TrainConfig, data: TrainData) -> Result<TrainReport> {
    cfg.validate()?;
    let plan = Plan::build(config)?;
    let len = config.input_len();
    let n = data.labels.len();
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    if data.features.len() != n * len {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} × {len} feature values"),
            got: format!("{}", data.features.len()),
        });
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= config.n_classes) {
        return Err(Error::UnknownLabel(format!("class id {bad}")));
    }
    if let Some(pool) = data.background {
        if pool.variants == 0 || pool.data.len() != n * pool.variants * len {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} × {} × {len} background values", pool.variants),
                got: format!("{}", pool.data.len()),
            });
        }
    }

    let mut weights = build_model(config, cfg.seed)?;
    let (channels, width) = (config.in_channels, config.in_shape.1);
    let hw = config.in_shape.0 * width;
    let (mean, std) = channel_stats(data.features, channels, hw);
    weights.set_input_normalisation(&mean, &std)?;

    let mut decay = vec![false; plan.n_params];
    for &(off, l, _) in &plan.init {
        decay[off..off + l].fill(true);
    }
    let mut velocity = vec![0.0; plan.n_params];
    let mut losses = Vec::with_capacity(cfg.total_epochs);
    let max_shift = (cfg.max_shift_fraction * width as f64).floor() as i64;
    let mut final_accuracy = 0.0;

    for epoch in 0..cfg.total_epochs {
        let lr = lr_at(cfg, epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(cfg.seed, stream::BATCH, epoch as u64));
        let mut aug = rng_for(cfg.seed, stream::AUGMENT, epoch as u64);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let batch = idx.len();
            let mut x = Vec::with_capacity(batch * len);
            for &i in idx {
                let src = match data.background {
                    Some(pool) if cfg.background_overlay && aug.random_bool(cfg.overlay_prob) => {
                        let j = aug.random_range(0..pool.variants);
                        &pool.data[(i * pool.variants + j) * len..][..len]
                    }
                    _ => &data.features[i * len..(i + 1) * len],
                };
                let start = x.len();
                x.extend_from_slice(src);
                let sample = &mut x[start..];
                normalise_input(&plan, &weights.buffers, sample, channels, hw);
                if cfg.random_noise {
                    let sigma = aug.random_range(0.0..=cfg.noise_sigma_max);
                    for v in sample.iter_mut() {
                        *v += sigma * gaussian(&mut aug);
                    }
                }
                if cfg.random_padding && max_shift > 0 {
                    shift_time(sample, width, aug.random_range(-max_shift..=max_shift) as isize);
                }
            }
            let mut caches = Vec::new();
            let mut pass = Pass {
                params: &weights.params,
                buffers: &mut weights.buffers,
                train: true,
                update_stats: true,
            };
            let (lg, pooled) = logits(&plan, &mut pass, x, batch, &mut caches);
            let probs = softmax_rows(&lg, config.n_classes);
            let mut dlogits = vec![0.0; batch * config.n_classes];
            for (b, (&i, p)) in idx.iter().zip(&probs).enumerate() {
                let y = data.labels[i];
                loss_sum -= p[y].max(1e-300).ln();
                let argmax = (0..p.len()).fold(0, |a, k| if p[k] > p[a] { k } else { a });
                correct += usize::from(argmax == y);
                for k in 0..config.n_classes {
                    let t = if k == y { 1.0 } else { 0.0 };
                    dlogits[b * config.n_classes + k] = (p[k] - t) / batch as f64;
                }
            }
            let mut grads = vec![0.0; plan.n_params];
            backward(&plan, &weights.params, caches, &pooled, &dlogits, batch, &mut grads);
            for ((p, v), (g, &d)) in weights
                .params
                .iter_mut()
                .zip(velocity.iter_mut())
                .zip(grads.iter().zip(&decay))
            {
                let g = if d { g + cfg.weight_decay * *p } else { *g };
                *v = cfg.momentum * *v + g;
                *p -= lr * *v;
            }
        }
        let mean_loss = loss_sum / n as f64;
        if !mean_loss.is_finite() || weights.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NanLoss { epoch });
        }
        losses.push(mean_loss);
        final_accuracy = correct as f64 / n as f64;
        if epoch % 10 == 0 || epoch + 1 == cfg.total_epochs {
            log::debug!("epoch {epoch}: lr {lr:.4} loss {mean_loss:.4} acc {final_accuracy:.3}");
        }
    }
    Ok(TrainReport {
        weights,
        losses,
        final_accuracy,
    })
}
