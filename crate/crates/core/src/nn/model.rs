use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    bn_backward, bn_forward_eval, bn_forward_train, conv_backward, conv_forward, BnCache, Geometry,
};
use super::{NetConfig, PredictionVector};
use crate::container::{read_bundle, write_bundle, TensorEntry};
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// A named parameter or buffer slice of the flat storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Depthwise,
    BatchNorm,
    Linear,
}

/// One layer of the built network, for inspection and documentation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
    pub out_hw: (usize, usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Conv {
    pub g: Geometry,
    pub w: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Bn {
    pub c: usize,
    pub hw: usize,
    pub gamma: usize,
    pub beta: usize,
    /// Offsets into the buffer vector.
    pub mean: usize,
    pub var: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Conv(Conv),
    Bn(Bn),
    Relu,
    /// `relu(main(x) + shortcut(x))`; an empty shortcut is the identity.
    Block { main: Vec<Node>, shortcut: Vec<Node> },
}

#[derive(Debug, Clone)]
pub(crate) struct Head {
    pub c: usize,
    pub hw: usize,
    pub w: usize,
    pub b: usize,
    pub n_classes: usize,
}

/// The executable layer graph plus the storage layout it indexes into.
#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub body: Vec<Node>,
    pub head: Head,
    pub params: Vec<Slot>,
    pub buffers: Vec<Slot>,
    pub n_params: usize,
    pub n_buffers: usize,
    pub layers: Vec<LayerInfo>,
    /// He-init standard deviation for each conv/linear weight slot.
    pub init: Vec<(usize, usize, f64)>,
    /// BN gamma slots, initialised to one.
    pub ones: Vec<(usize, usize)>,
    /// Running-variance buffers, initialised to one.
    pub buffer_ones: Vec<(usize, usize)>,
    /// Input normalisation buffers `(mean, std)`, one value per input channel.
    pub input_norm: (usize, usize),
}

struct Builder {
    params: Vec<Slot>,
    buffers: Vec<Slot>,
    n_params: usize,
    n_buffers: usize,
    layers: Vec<LayerInfo>,
    init: Vec<(usize, usize, f64)>,
    ones: Vec<(usize, usize)>,
    buffer_ones: Vec<(usize, usize)>,
}

impl Builder {
    fn param(&mut self, name: String, shape: Vec<usize>) -> usize {
        let len = shape.iter().product();
        let offset = self.n_params;
        self.params.push(Slot { name, shape, offset, len });
        self.n_params += len;
        offset
    }

    fn buffer(&mut self, name: String, len: usize) -> usize {
        let offset = self.n_buffers;
        self.buffers.push(Slot {
            name,
            shape: vec![len],
            offset,
            len,
        });
        self.n_buffers += len;
        offset
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        groups: usize,
        hw: (usize, usize),
    ) -> (Node, (usize, usize)) {
        let g = Geometry {
            cin,
            cout,
            k,
            stride,
            pad: k / 2,
            groups,
            h_in: hw.0,
            w_in: hw.1,
        };
        let w = self.param(format!("{name}.weight"), vec![cout, cin / groups, k, k]);
        let fan_in = (cin / groups) * k * k;
        self.init.push((w, g.weight_len(), (2.0 / fan_in as f64).sqrt()));
        let out = (g.h_out(), g.w_out());
        self.layers.push(LayerInfo {
            name: name.to_string(),
            kind: if groups == 1 { LayerKind::Conv } else { LayerKind::Depthwise },
            cin,
            cout,
            kernel: k,
            stride,
            groups,
            out_hw: out,
        });
        (Node::Conv(Conv { g, w }), out)
    }

    fn bn(&mut self, name: &str, c: usize, hw: (usize, usize)) -> Node {
        let gamma = self.param(format!("{name}.weight"), vec![c]);
        let beta = self.param(format!("{name}.bias"), vec![c]);
        let mean = self.buffer(format!("{name}.running_mean"), c);
        let var = self.buffer(format!("{name}.running_var"), c);
        self.ones.push((gamma, c));
        self.buffer_ones.push((var, c));
        self.layers.push(LayerInfo {
            name: name.to_string(),
            kind: LayerKind::BatchNorm,
            cin: c,
            cout: c,
            kernel: 1,
            stride: 1,
            groups: c,
            out_hw: hw,
        });
        Node::Bn(Bn {
            c,
            hw: hw.0 * hw.1,
            gamma,
            beta,
            mean,
            var,
        })
    }

    /// A 3×3 convolution, or its depthwise-separable replacement, each
    /// followed by batch norm.
    fn conv3(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        ds: bool,
        hw: (usize, usize),
        out: &mut Vec<Node>,
    ) -> (usize, usize) {
        if ds {
            let (dw, hw1) = self.conv(&format!("{name}.dw"), cin, cin, 3, stride, cin, hw);
            out.push(dw);
            out.push(self.bn(&format!("{name}.dw_bn"), cin, hw1));
            let (pw, hw2) = self.conv(&format!("{name}.pw"), cin, cout, 1, 1, 1, hw1);
            out.push(pw);
            out.push(self.bn(&format!("{name}.pw_bn"), cout, hw2));
            hw2
        } else {
            let (c, hw1) = self.conv(name, cin, cout, 3, stride, 1, hw);
            out.push(c);
            out.push(self.bn(&format!("{name}.bn"), cout, hw1));
            hw1
        }
    }
}

impl Plan {
    pub fn build(config: &NetConfig) -> Result<Plan> {
        config.validate()?;
        let mut b = Builder {
            params: Vec::new(),
            buffers: Vec::new(),
            n_params: 0,
            n_buffers: 0,
            layers: Vec::new(),
            init: Vec::new(),
            ones: Vec::new(),
            buffer_ones: Vec::new(),
        };
        let widths = config.widths();
        let blocks = config.backbone.blocks();
        let ds = config.depthwise_separable;
        let mut body = Vec::new();
        let mut hw = config.in_shape;
        let (stem, hw1) = b.conv("stem.conv", config.in_channels, widths[0], 3, 1, 1, hw);
        body.push(stem);
        body.push(b.bn("stem.bn", widths[0], hw1));
        body.push(Node::Relu);
        hw = hw1;
        let mut cin = widths[0];
        for (s, (&w, &n)) in widths.iter().zip(blocks).enumerate() {
            for i in 0..n {
                let stride = if s > 0 && i == 0 { 2 } else { 1 };
                let name = format!("stage{}.block{}", s + 1, i);
                let mut main = Vec::new();
                let mid = b.conv3(&format!("{name}.conv1"), cin, w, stride, ds, hw, &mut main);
                main.push(Node::Relu);
                let out = b.conv3(&format!("{name}.conv2"), w, w, 1, ds, mid, &mut main);
                let mut shortcut = Vec::new();
                if cin != w || stride != 1 {
                    let (p, phw) = b.conv(&format!("{name}.proj"), cin, w, 1, stride, 1, hw);
                    shortcut.push(p);
                    shortcut.push(b.bn(&format!("{name}.proj_bn"), w, phw));
                }
                body.push(Node::Block { main, shortcut });
                hw = out;
                cin = w;
            }
        }
        let fc_w = b.param("fc.weight".into(), vec![config.n_classes, cin]);
        let fc_b = b.param("fc.bias".into(), vec![config.n_classes]);
        b.init.push((fc_w, config.n_classes * cin, (1.0 / cin as f64).sqrt()));
        b.layers.push(LayerInfo {
            name: "fc".into(),
            kind: LayerKind::Linear,
            cin,
            cout: config.n_classes,
            kernel: 1,
            stride: 1,
            groups: 1,
            out_hw: (1, 1),
        });
        let in_mean = b.buffer("input.mean".into(), config.in_channels);
        let in_std = b.buffer("input.std".into(), config.in_channels);
        b.buffer_ones.push((in_std, config.in_channels));
        Ok(Plan {
            body,
            head: Head {
                c: cin,
                hw: hw.0 * hw.1,
                w: fc_w,
                b: fc_b,
                n_classes: config.n_classes,
            },
            params: b.params,
            buffers: b.buffers,
            n_params: b.n_params,
            n_buffers: b.n_buffers,
            layers: b.layers,
            init: b.init,
            ones: b.ones,
            buffer_ones: b.buffer_ones,
            input_norm: (in_mean, in_std),
        })
    }
}

/// Trainable parameters and running statistics of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: NetConfig,
    pub params: Vec<f64>,
    /// Batch-norm running statistics and input normalisation.
    pub buffers: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightsMeta {
    config: NetConfig,
}

impl ModelWeights {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Named views of the parameter tensors.
    pub fn tensors(&self) -> Result<Vec<(Slot, &[f64])>> {
        let plan = Plan::build(&self.config)?;
        Ok(plan
            .params
            .into_iter()
            .map(|s| {
                let data = &self.params[s.offset..s.offset + s.len];
                (s, data)
            })
            .collect())
    }

    pub fn layers(&self) -> Result<Vec<LayerInfo>> {
        Ok(Plan::build(&self.config)?.layers)
    }

    pub fn set_input_normalisation(&mut self, mean: &[f64], std: &[f64]) -> Result<()> {
        let plan = Plan::build(&self.config)?;
        let c = self.config.in_channels;
        if mean.len() != c || std.len() != c {
            return Err(Error::ShapeMismatch {
                expected: format!("{c} channel statistics"),
                got: format!("{} / {}", mean.len(), std.len()),
            });
        }
        let (m, s) = plan.input_norm;
        self.buffers[m..m + c].copy_from_slice(mean);
        self.buffers[s..s + c].copy_from_slice(std);
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let plan = Plan::build(&self.config)?;
        let mut tensors: Vec<(TensorEntry, &[f64])> = Vec::new();
        for s in &plan.params {
            tensors.push((
                TensorEntry {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                },
                &self.params[s.offset..s.offset + s.len],
            ));
        }
        for s in &plan.buffers {
            tensors.push((
                TensorEntry {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                },
                &self.buffers[s.offset..s.offset + s.len],
            ));
        }
        write_bundle(
            path,
            "model",
            &WeightsMeta {
                config: self.config.clone(),
            },
            &tensors,
        )
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, tensors): (WeightsMeta, _) = read_bundle(path, "model")?;
        let plan = Plan::build(&meta.config)?;
        let mut params = vec![0.0; plan.n_params];
        let mut buffers = vec![0.0; plan.n_buffers];
        let expected = plan.params.len() + plan.buffers.len();
        if tensors.len() != expected {
            return Err(Error::Container(format!(
                "model file has {} tensors, config implies {expected}",
                tensors.len()
            )));
        }
        for ((entry, _), slot) in tensors.iter().zip(plan.params.iter().chain(&plan.buffers)) {
            if entry.name != slot.name || entry.shape != slot.shape {
                return Err(Error::Container(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    entry.name, entry.shape, slot.name, slot.shape
                )));
            }
        }
        let np = plan.params.len();
        for (i, (_, data)) in tensors.into_iter().enumerate() {
            if i < np {
                let s = &plan.params[i];
                params[s.offset..s.offset + s.len].copy_from_slice(&data);
            } else {
                let s = &plan.buffers[i - np];
                buffers[s.offset..s.offset + s.len].copy_from_slice(&data);
            }
        }
        Ok(Self {
            config: meta.config,
            params,
            buffers,
        })
    }
}

/// He-initialised weights; batch-norm scales one, shifts zero.
pub fn build_model(config: &NetConfig, seed: u64) -> Result<ModelWeights> {
    let plan = Plan::build(config)?;
    let mut rng = rng_for(seed, stream::INIT, 0);
    let mut params = vec![0.0; plan.n_params];
    for &(off, len, std) in &plan.init {
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for p in &mut params[off..off + len] {
            *p = normal.sample(&mut rng);
        }
    }
    for &(off, len) in &plan.ones {
        params[off..off + len].fill(1.0);
    }
    let mut buffers = vec![0.0; plan.n_buffers];
    for &(off, len) in &plan.buffer_ones {
        buffers[off..off + len].fill(1.0);
    }
    Ok(ModelWeights {
        config: config.clone(),
        params,
        buffers,
    })
}

pub(crate) enum Cache {
    Conv(Vec<f64>),
    Bn(BnCache),
    Relu(Vec<f64>),
    Block {
        main: Vec<Cache>,
        shortcut: Vec<Cache>,
        out: Vec<f64>,
    },
}

/// Forward-pass mode. Training uses batch statistics and records what the
/// backward pass needs; running statistics are updated when `update` holds.
pub(crate) struct Pass<'a> {
    pub params: &'a [f64],
    pub buffers: &'a mut [f64],
    pub train: bool,
    pub update_stats: bool,
}

fn forward_nodes(nodes: &[Node], mut x: Vec<f64>, batch: usize, pass: &mut Pass, caches: &mut Vec<Cache>) -> Vec<f64> {
    for node in nodes {
        x = match node {
            Node::Conv(c) => {
                let w = &pass.params[c.w..c.w + c.g.weight_len()];
                let y = conv_forward(&c.g, w, &x, batch);
                if pass.train {
                    caches.push(Cache::Conv(x));
                }
                y
            }
            Node::Bn(bn) => {
                let gamma = &pass.params[bn.gamma..bn.gamma + bn.c];
                let beta = &pass.params[bn.beta..bn.beta + bn.c];
                if pass.train {
                    let (y, cache, mean, var) = bn_forward_train(&x, batch, bn.c, bn.hw, gamma, beta);
                    if pass.update_stats {
                        let n = (batch * bn.hw) as f64;
                        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                        for ch in 0..bn.c {
                            let rm = &mut pass.buffers[bn.mean + ch];
                            *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean[ch];
                            let rv = &mut pass.buffers[bn.var + ch];
                            *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * var[ch] * unbias;
                        }
                    }
                    caches.push(Cache::Bn(cache));
                    y
                } else {
                    bn_forward_eval(
                        &x,
                        batch,
                        bn.c,
                        bn.hw,
                        gamma,
                        beta,
                        &pass.buffers[bn.mean..bn.mean + bn.c],
                        &pass.buffers[bn.var..bn.var + bn.c],
                    )
                }
            }
            Node::Relu => {
                x.iter_mut().for_each(|v| *v = v.max(0.0));
                if pass.train {
                    caches.push(Cache::Relu(x.clone()));
                }
                x
            }
            Node::Block { main, shortcut } => {
                let mut main_c = Vec::new();
                let mut short_c = Vec::new();
                let skip = if shortcut.is_empty() {
                    x.clone()
                } else {
                    forward_nodes(shortcut, x.clone(), batch, pass, &mut short_c)
                };
                let mut y = forward_nodes(main, x, batch, pass, &mut main_c);
                for (a, s) in y.iter_mut().zip(&skip) {
                    *a = (*a + s).max(0.0);
                }
                if pass.train {
                    caches.push(Cache::Block {
                        main: main_c,
                        shortcut: short_c,
                        out: y.clone(),
                    });
                }
                y
            }
        };
    }
    x
}

fn backward_nodes(nodes: &[Node], caches: Vec<Cache>, mut dy: Vec<f64>, batch: usize, params: &[f64], grads: &mut [f64]) -> Vec<f64> {
    for (node, cache) in nodes.iter().zip(caches).rev() {
        dy = match (node, cache) {
            (Node::Conv(c), Cache::Conv(x)) => {
                let len = c.g.weight_len();
                conv_backward(&c.g, &params[c.w..c.w + len], &x, &dy, batch, &mut grads[c.w..c.w + len])
            }
            (Node::Bn(bn), Cache::Bn(cache)) => {
                let (gs, bs) = (bn.gamma, bn.beta);
                let mut dg = vec![0.0; bn.c];
                let mut db = vec![0.0; bn.c];
                let dx = bn_backward(&dy, &cache, batch, bn.c, bn.hw, &params[gs..gs + bn.c], &mut dg, &mut db);
                for ch in 0..bn.c {
                    grads[gs + ch] += dg[ch];
                    grads[bs + ch] += db[ch];
                }
                dx
            }
            (Node::Relu, Cache::Relu(out)) => {
                for (d, o) in dy.iter_mut().zip(&out) {
                    if *o <= 0.0 {
                        *d = 0.0;
                    }
                }
                dy
            }
            (Node::Block { main, shortcut }, Cache::Block { main: mc, shortcut: sc, out }) => {
                for (d, o) in dy.iter_mut().zip(&out) {
                    if *o <= 0.0 {
                        *d = 0.0;
                    }
                }
                let mut dx = backward_nodes(main, mc, dy.clone(), batch, params, grads);
                let ds = if shortcut.is_empty() {
                    dy
                } else {
                    backward_nodes(shortcut, sc, dy, batch, params, grads)
                };
                for (a, b) in dx.iter_mut().zip(&ds) {
                    *a += b;
                }
                dx
            }
            _ => unreachable!("cache does not match layer"),
        };
    }
    dy
}

/// Normalises raw features in place with the stored per-channel statistics.
pub(crate) fn normalise_input(plan: &Plan, buffers: &[f64], x: &mut [f64], channels: usize, hw: usize) {
    let (m, s) = plan.input_norm;
    for (i, v) in x.iter_mut().enumerate() {
        let c = (i / hw) % channels;
        *v = (*v - buffers[m + c]) / buffers[s + c];
    }
}

/// Forward pass to logits. `x` is already normalised.
pub(crate) fn logits(plan: &Plan, pass: &mut Pass, x: Vec<f64>, batch: usize, caches: &mut Vec<Cache>) -> (Vec<f64>, Vec<f64>) {
    let feat_map = forward_nodes(&plan.body, x, batch, pass, caches);
    let h = &plan.head;
    let mut pooled = vec![0.0; batch * h.c];
    for b in 0..batch {
        for c in 0..h.c {
            let s: f64 = feat_map[(b * h.c + c) * h.hw..][..h.hw].iter().sum();
            pooled[b * h.c + c] = s / h.hw as f64;
        }
    }
    let w = &pass.params[h.w..h.w + h.n_classes * h.c];
    let bias = &pass.params[h.b..h.b + h.n_classes];
    let mut out = vec![0.0; batch * h.n_classes];
    for b in 0..batch {
        for k in 0..h.n_classes {
            let row = &w[k * h.c..(k + 1) * h.c];
            out[b * h.n_classes + k] =
                bias[k] + row.iter().zip(&pooled[b * h.c..(b + 1) * h.c]).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    (out, pooled)
}

/// Backward from logit gradients through the head and body.
pub(crate) fn backward(plan: &Plan, params: &[f64], caches: Vec<Cache>, pooled: &[f64], dlogits: &[f64], batch: usize, grads: &mut [f64]) -> Vec<f64> {
    let h = &plan.head;
    let w = &params[h.w..h.w + h.n_classes * h.c];
    let mut dpooled = vec![0.0; batch * h.c];
    for b in 0..batch {
        for k in 0..h.n_classes {
            let g = dlogits[b * h.n_classes + k];
            grads[h.b + k] += g;
            for c in 0..h.c {
                grads[h.w + k * h.c + c] += g * pooled[b * h.c + c];
                dpooled[b * h.c + c] += g * w[k * h.c + c];
            }
        }
    }
    let mut dmap = vec![0.0; batch * h.c * h.hw];
    for b in 0..batch {
        for c in 0..h.c {
            let g = dpooled[b * h.c + c] / h.hw as f64;
            dmap[(b * h.c + c) * h.hw..][..h.hw].fill(g);
        }
    }
    backward_nodes(&plan.body, caches, dmap, batch, params, grads)
}

pub(crate) fn softmax_rows(logits: &[f64], n_classes: usize) -> Vec<Vec<f64>> {
    logits
        .chunks(n_classes)
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Inference on a batch of raw feature tensors.
pub fn predict_batch(weights: &ModelWeights, inputs: &[&[f64]]) -> Result<Vec<PredictionVector>> {
    let plan = Plan::build(&weights.config)?;
    let len = weights.config.input_len();
    for x in inputs {
        if x.len() != len {
            return Err(Error::ShapeMismatch {
                expected: format!("{len} values for {:?}", weights.config.input_dims()),
                got: format!("{} values", x.len()),
            });
        }
    }
    let hw = weights.config.in_shape.0 * weights.config.in_shape.1;
    let mut buffers = weights.buffers.clone();
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(64) {
        let mut x: Vec<f64> = chunk.iter().flat_map(|v| v.iter().copied()).collect();
        normalise_input(&plan, &buffers, &mut x, weights.config.in_channels, hw);
        let mut pass = Pass {
            params: &weights.params,
            buffers: &mut buffers,
            train: false,
            update_stats: false,
        };
        let (lg, _) = logits(&plan, &mut pass, x, chunk.len(), &mut Vec::new());
        out.extend(
            softmax_rows(&lg, weights.config.n_classes)
                .into_iter()
                .map(|probs| PredictionVector { probs }),
        );
    }
    Ok(out)
}

/// Softmax output for one raw feature tensor, batch norm in inference mode.
pub fn forward(weights: &ModelWeights, input: &[f64]) -> Result<PredictionVector> {
    Ok(predict_batch(weights, &[input])?.remove(0))
}

/// Gaussian perturbation helper shared by training and tests.
pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}
