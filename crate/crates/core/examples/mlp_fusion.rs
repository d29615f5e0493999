//! Learns a fusion MLP from posterior pairs where only one modality is right.

use dualkws::fusion::{mlp_fuse, train_mlp_fusion, FusionSample, MlpConfig};
use dualkws::nn::PredictionVector;

fn peaked(class: usize, p: f64) -> PredictionVector {
    let mut v = vec![(1.0 - p) / 11.0; 12];
    v[class] = p;
    PredictionVector::new(v).unwrap()
}

fn main() -> dualkws::Result<()> {
    let samples: Vec<FusionSample> = (0..240)
        .map(|i| {
            let y = i % 12;
            let wrong = (y + 1 + i % 5) % 12;
            let (vocal, echoic) = if i % 2 == 0 {
                (peaked(y, 0.9), peaked(wrong, 0.3))
            } else {
                (peaked(wrong, 0.3), peaked(y, 0.9))
            };
            FusionSample { vocal, echoic, label: y }
        })
        .collect();
    let report = train_mlp_fusion(&samples, &MlpConfig::default(), 0)?;
    println!("loss {:.3} -> {:.3}", report.losses[0], report.losses.last().unwrap());
    let fused = mlp_fuse(&report.model, &peaked(4, 0.3), &peaked(7, 0.9))?;
    println!("weak vocal 4, strong echoic 7 -> {}", fused.argmax());
    Ok(())
}
