use dualkws::nn::{
    build_model, count_madd, count_params, forward, gradient_check, loss_and_gradient, lr_at, predict_batch, train,
    LayerKind, NetConfig, TrainConfig, TrainData,
};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

const ECHOIC: (usize, (usize, usize)) = (4, (120, 82));

/// ResNet-18 parameter count written out stage by stage: 3×3 stem, two basic
/// blocks per stage, 1×1 projection on the first block of stages 2–4, BN
/// affine pairs, and a linear head with bias.
fn oracle_params(div: usize, ds: bool, cin: usize, classes: usize) -> u64 {
    let w: Vec<u64> = [64u64, 128, 256, 512].iter().map(|c| c / div as u64).collect();
    let conv3 = |a: u64, b: u64| if ds { 9 * a + 2 * a + a * b + 2 * b } else { 9 * a * b + 2 * b };
    let mut total = 9 * cin as u64 * w[0] + 2 * w[0];
    let mut prev = w[0];
    for &c in &w {
        total += conv3(prev, c) + conv3(c, c);
        if prev != c {
            total += prev * c + 2 * c;
        }
        total += conv3(c, c) + conv3(c, c);
        prev = c;
    }
    total + prev * classes as u64 + classes as u64
}

/// Multiply-adds summed over the layers of a built model.
fn oracle_madd(config: &NetConfig) -> u64 {
    let w = build_model(config, 0).unwrap();
    w.layers()
        .unwrap()
        .iter()
        .map(|l| match l.kind {
            LayerKind::Conv | LayerKind::Depthwise => {
                let macs = l.kernel * l.kernel * (l.cin / l.groups) * l.cout * l.out_hw.0 * l.out_hw.1;
                2 * macs as u64
            }
            LayerKind::Linear => 2 * (l.cin * l.cout) as u64,
            _ => 0,
        })
        .sum()
}

fn configs() -> Vec<NetConfig> {
    let mut v = Vec::new();
    for ds in [false, true] {
        for div in [1, 2, 4, 8] {
            v.push(NetConfig::resnet18(div, ds, ECHOIC.0, ECHOIC.1));
        }
    }
    v
}

#[test]
fn params_match_oracle_and_built_model() {
    for c in configs() {
        let want = oracle_params(c.width_divisor, c.depthwise_separable, c.in_channels, c.n_classes);
        assert_eq!(count_params(&c).unwrap(), want, "{c:?}");
        assert_eq!(build_model(&c, 1).unwrap().param_count() as u64, want);
    }
}

#[test]
fn params_shrink_with_width_and_separability() {
    let cs = configs();
    for pair in cs[..4].windows(2).chain(cs[4..].windows(2)) {
        assert!(count_params(&pair[1]).unwrap() < count_params(&pair[0]).unwrap());
    }
    for i in 0..4 {
        assert!(count_params(&cs[i + 4]).unwrap() < count_params(&cs[i]).unwrap());
    }
}

#[test]
fn madd_matches_layerwise_sum() {
    for c in configs() {
        assert_eq!(count_madd(&c).unwrap(), oracle_madd(&c), "{c:?}");
    }
}

#[test]
fn madd_ratios() {
    let m = |div, ds| count_madd(&NetConfig::resnet18(div, ds, ECHOIC.0, ECHOIC.1)).unwrap() as f64;
    let halving = m(2, false) / m(4, false);
    assert!((3.5..=4.5).contains(&halving), "{halving}");
    for div in [1, 2, 4, 8] {
        let r = m(div, true) / m(div, false);
        assert!(r < 0.35, "divisor {div}: {r}");
    }
}

#[test]
fn schedule_shape() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_at(&cfg, 0), 0.0);
    assert!((lr_at(&cfg, cfg.warmup_epochs) - cfg.peak_lr).abs() < 1e-15);
    assert!(lr_at(&cfg, cfg.total_epochs - 1) < 1e-4 * cfg.peak_lr);
    for e in 1..cfg.total_epochs {
        let (a, b) = (lr_at(&cfg, e - 1), lr_at(&cfg, e));
        if e <= cfg.warmup_epochs {
            assert!(b > a);
        } else {
            assert!(b < a);
        }
    }
}

fn toy_set(n: usize, len: usize) -> (Vec<f64>, Vec<usize>) {
    let mut rng = dualkws::seed::rng_for(7, 0, 0);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut features = Vec::with_capacity(n * len);
    for &y in &labels {
        for k in 0..len {
            let base = if (k % 8 < 4) == (y == 0) { 1.0 } else { -1.0 };
            let e: f64 = StandardNormal.sample(&mut rng);
            features.push(base + 0.3 * e);
        }
    }
    (features, labels)
}

fn toy_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        warmup_epochs: 10,
        total_epochs: 200,
        batch_size: 10,
        background_overlay: false,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_toy_set_is_learned() {
    let config = NetConfig { n_classes: 2, ..NetConfig::tiny(1, (8, 8)) };
    let (features, labels) = toy_set(20, config.input_len());
    let report = train(&config, &toy_cfg(3), TrainData { features: &features, labels: &labels, background: None }).unwrap();
    let inputs: Vec<&[f64]> = features.chunks(config.input_len()).collect();
    let preds = predict_batch(&report.weights, &inputs).unwrap();
    let correct = preds.iter().zip(&labels).filter(|(p, &y)| p.argmax() == y).count();
    assert_eq!(correct, labels.len());
    assert_eq!(report.losses.len(), 200);
    assert!(report.losses.last().unwrap() < &report.losses[0]);
}

#[test]
fn training_is_bitwise_reproducible() {
    let config = NetConfig { n_classes: 2, ..NetConfig::tiny(1, (8, 8)) };
    let (features, labels) = toy_set(12, config.input_len());
    let cfg = TrainConfig { total_epochs: 15, warmup_epochs: 2, ..toy_cfg(9) };
    let data = TrainData { features: &features, labels: &labels, background: None };
    let a = train(&config, &cfg, data).unwrap();
    let b = train(&config, &cfg, data).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.losses), bits(&b.losses));
    assert_eq!(bits(&a.weights.params), bits(&b.weights.params));
    let c = train(&config, &TrainConfig { seed: 10, ..cfg }, data).unwrap();
    assert_ne!(bits(&a.losses), bits(&c.losses));
}

#[test]
fn gradient_check_is_tight() {
    let config = NetConfig::tiny(2, (8, 8));
    for seed in 0..3 {
        let weights = build_model(&config, seed).unwrap();
        let mut rng = dualkws::seed::rng_for(seed, 1, 0);
        let input: Vec<f64> = (0..config.input_len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let err = gradient_check(&weights, &input, (seed as usize * 5) % 12, seed).unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

/// Every head parameter against its own central difference, computed here.
#[test]
fn head_gradient_by_finite_differences() {
    let config = NetConfig::tiny(1, (6, 6));
    let weights = build_model(&config, 4).unwrap();
    let input: Vec<f64> = (0..config.input_len()).map(|i| ((i * 37) % 11) as f64 / 5.0 - 1.0).collect();
    let (_, grad) = loss_and_gradient(&weights, &[&input], &[3]).unwrap();
    let slots: Vec<_> = weights.tensors().unwrap().into_iter().map(|(s, _)| s).filter(|s| s.name.starts_with("fc.")).collect();
    let h = 1e-6;
    for s in slots {
        for i in s.offset..s.offset + s.len {
            let mut up = weights.clone();
            up.params[i] += h;
            let mut down = weights.clone();
            down.params[i] -= h;
            let lu = loss_and_gradient(&up, &[&input], &[3]).unwrap().0;
            let ld = loss_and_gradient(&down, &[&input], &[3]).unwrap().0;
            let numeric = (lu - ld) / (2.0 * h);
            assert!((numeric - grad[i]).abs() < 1e-6 * grad[i].abs().max(1.0), "{} [{i}]", s.name);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn softmax_is_a_distribution(seed in 0u64..1000, scale in prop::sample::select(vec![1e-3, 1.0, 1e3])) {
        let config = NetConfig::tiny(1, (5, 7));
        let weights = build_model(&config, seed).unwrap();
        let mut rng = dualkws::seed::rng_for(seed, 2, 0);
        let input: Vec<f64> = (0..config.input_len()).map(|_| { let e: f64 = StandardNormal.sample(&mut rng); scale * e }).collect();
        let p = forward(&weights, &input).unwrap();
        prop_assert_eq!(p.len(), 12);
        prop_assert!(p.probs.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn params_scale_roughly_with_width_squared(ds in any::<bool>(), cin in 1usize..5) {
        let p = |div| count_params(&NetConfig::resnet18(div, ds, cin, (32, 32))).unwrap() as f64;
        let r = p(1) / p(2);
        prop_assert!(r > if ds { 2.5 } else { 3.5 } && r < 4.1, "{}", r);
    }
}
