//! Residual CNN family shared by both modalities.
//!
//! Layout is NCHW in `f64`. Convolutions go through im2col and a dense
//! matrix product; depthwise convolutions use direct loops. `count_madd`
//! counts a multiply-add as two operations: `2·K²·Cin·Cout·Hout·Wout/groups`
//! per convolution plus `2·Cin·Cout` for the classifier, nothing else.

mod gradcheck;
pub(crate) mod layers;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gradcheck::{gradient_check, loss_and_gradient};
pub(crate) use model::gaussian;
pub use model::{build_model, forward, predict_batch, LayerInfo, LayerKind, ModelWeights, Slot};
pub use train::{lr_at, train, BackgroundPool, TrainConfig, TrainData, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    /// Four stages of two basic blocks, base widths 64/128/256/512.
    Resnet18,
    /// Two stages of one block, base widths 8/16. For gradient checks.
    Tiny,
}

impl Backbone {
    pub fn base_widths(self) -> &'static [usize] {
        match self {
            Backbone::Resnet18 => &[64, 128, 256, 512],
            Backbone::Tiny => &[8, 16],
        }
    }

    pub fn blocks(self) -> &'static [usize] {
        match self {
            Backbone::Resnet18 => &[2, 2, 2, 2],
            Backbone::Tiny => &[1, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub backbone: Backbone,
    pub width_divisor: usize,
    pub depthwise_separable: bool,
    pub in_channels: usize,
    /// `(height, width)`: shift or coefficient bins by frames.
    pub in_shape: (usize, usize),
    #[serde(default = "default_classes")]
    pub n_classes: usize,
}

fn default_classes() -> usize {
    crate::sim::N_CLASSES
}

impl NetConfig {
    pub fn resnet18(width_divisor: usize, depthwise_separable: bool, in_channels: usize, in_shape: (usize, usize)) -> Self {
        Self {
            backbone: Backbone::Resnet18,
            width_divisor,
            depthwise_separable,
            in_channels,
            in_shape,
            n_classes: default_classes(),
        }
    }

    pub fn tiny(in_channels: usize, in_shape: (usize, usize)) -> Self {
        Self {
            backbone: Backbone::Tiny,
            width_divisor: 1,
            depthwise_separable: false,
            in_channels,
            in_shape,
            n_classes: default_classes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4, 8].contains(&self.width_divisor) {
            return Err(Error::Config(format!(
                "width_divisor must be 1, 2, 4 or 8, got {}",
                self.width_divisor
            )));
        }
        if self.in_channels == 0 || self.in_shape.0 == 0 || self.in_shape.1 == 0 {
            return Err(Error::Config(format!(
                "input must be non-empty, got {} × {:?}",
                self.in_channels, self.in_shape
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        if self.widths().contains(&0) {
            return Err(Error::Config("width divisor leaves a stage without channels".into()));
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<usize> {
        self.backbone
            .base_widths()
            .iter()
            .map(|w| w / self.width_divisor)
            .collect()
    }

    pub fn input_dims(&self) -> [usize; 3] {
        [self.in_channels, self.in_shape.0, self.in_shape.1]
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_shape.0 * self.in_shape.1
    }
}

/// Class posterior of one classifier, aligned with the vocabulary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector {
    pub probs: Vec<f64>,
}

impl PredictionVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("probabilities must be finite and non-negative".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {s}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

fn out_dim(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}

struct Tally {
    params: u64,
    madd: u64,
}

impl Tally {
    fn conv(&mut self, cin: usize, cout: usize, k: usize, groups: usize, hw_out: (usize, usize)) {
        let (cin, cout, k, groups) = (cin as u64, cout as u64, k as u64, groups as u64);
        self.params += k * k * cin / groups * cout;
        self.madd += 2 * k * k * cin * cout * hw_out.0 as u64 * hw_out.1 as u64 / groups;
    }

    fn bn(&mut self, c: usize) {
        self.params += 2 * c as u64;
    }

    fn conv3(&mut self, cin: usize, cout: usize, ds: bool, hw_out: (usize, usize)) {
        if ds {
            self.conv(cin, cin, 3, cin, hw_out);
            self.bn(cin);
            self.conv(cin, cout, 1, 1, hw_out);
        } else {
            self.conv(cin, cout, 3, 1, hw_out);
        }
        self.bn(cout);
    }
}

fn tally(config: &NetConfig) -> Result<Tally> {
    config.validate()?;
    let mut t = Tally { params: 0, madd: 0 };
    let widths = config.widths();
    let ds = config.depthwise_separable;
    let mut hw = config.in_shape;
    t.conv(config.in_channels, widths[0], 3, 1, hw);
    t.bn(widths[0]);
    let mut cin = widths[0];
    for (s, (&w, &n)) in widths.iter().zip(config.backbone.blocks()).enumerate() {
        for i in 0..n {
            let stride = if s > 0 && i == 0 { 2 } else { 1 };
            let out = (out_dim(hw.0, stride), out_dim(hw.1, stride));
            t.conv3(cin, w, ds, out);
            t.conv3(w, w, ds, out);
            if cin != w || stride != 1 {
                t.conv(cin, w, 1, 1, out);
                t.bn(w);
            }
            hw = out;
            cin = w;
        }
    }
    t.params += (cin * config.n_classes + config.n_classes) as u64;
    t.madd += 2 * (cin * config.n_classes) as u64;
    Ok(t)
}

/// Trainable parameter count in closed form.
pub fn count_params(config: &NetConfig) -> Result<u64> {
    Ok(tally(config)?.params)
}

/// Multiply-adds of one forward pass at `config.in_shape`, two per MAC.
pub fn count_madd(config: &NetConfig) -> Result<u64> {
    Ok(tally(config)?.madd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_built_model() {
        for div in [1, 2, 4, 8] {
            for ds in [false, true] {
                let c = NetConfig::resnet18(div, ds, 4, (20, 16));
                let w = build_model(&c, 0).unwrap();
                assert_eq!(w.param_count() as u64, count_params(&c).unwrap());
            }
        }
        let t = NetConfig::tiny(2, (8, 8));
        assert_eq!(build_model(&t, 0).unwrap().param_count() as u64, count_params(&t).unwrap());
    }

    #[test]
    fn invalid_divisor() {
        assert!(matches!(
            count_params(&NetConfig::resnet18(3, false, 1, (8, 8))),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zeroed_head_is_uniform() {
        let c = NetConfig::tiny(1, (6, 6));
        let mut w = build_model(&c, 1).unwrap();
        for (slot, _) in w.tensors().unwrap().into_iter().map(|(s, d)| (s, d.len())).collect::<Vec<_>>() {
            if slot.name.starts_with("fc.") {
                w.params[slot.offset..slot.offset + slot.len].fill(0.0);
            }
        }
        let p = forward(&w, &vec![0.3; c.input_len()]).unwrap();
        for v in &p.probs {
            assert!((v - 1.0 / 12.0).abs() < 1e-12);
        }
    }
}
