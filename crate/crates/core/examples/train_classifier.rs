//! Trains a tiny classifier on two synthetic clusters of MFCC-shaped inputs.

use dualkws::nn::{predict_batch, train, NetConfig, TrainConfig, TrainData};
use rand::Rng;

fn main() -> dualkws::Result<()> {
    let config = NetConfig::tiny(1, (13, 16));
    let len = config.input_len();
    let mut rng = dualkws::seed::rng_for(0, 0, 0);
    let labels: Vec<usize> = (0..64).map(|i| i % 2).collect();
    let features: Vec<f64> = labels
        .iter()
        .flat_map(|&y| (0..len).map(move |k| if (k % 13 < 6) == (y == 0) { 1.0 } else { 0.0 }))
        .map(|v| v + 0.3 * rng.random::<f64>())
        .collect();
    let cfg = TrainConfig {
        warmup_epochs: 2,
        total_epochs: 20,
        batch_size: 16,
        background_overlay: false,
        ..TrainConfig::default()
    };
    let report = train(&config, &cfg, TrainData { features: &features, labels: &labels, background: None })?;
    let inputs: Vec<&[f64]> = features.chunks(len).collect();
    let correct = predict_batch(&report.weights, &inputs)?
        .iter()
        .zip(&labels)
        .filter(|(p, &y)| p.argmax() == y)
        .count();
    println!("loss {:.3} -> {:.3}", report.losses[0], report.losses.last().unwrap());
    println!("accuracy {correct}/{}", labels.len());
    Ok(())
}
