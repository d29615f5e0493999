//! Reliability indicators and the four fusion outcomes.

use dualkws::fusion::{rb_fuse, FusionParams, ReliabilityIndicators};
use dualkws::nn::PredictionVector;

fn peaked(class: usize, p: f64) -> PredictionVector {
    let mut v = vec![(1.0 - p) / 11.0; 12];
    v[class] = p;
    PredictionVector::new(v).unwrap()
}

fn main() -> dualkws::Result<()> {
    let params = FusionParams {
        t_l_v: 1.0,
        t_d_v: 0.5,
        t_l_e: 1.0,
        t_d_e: 0.5,
        ..FusionParams::default()
    };
    let confident = peaked(2, 0.9);
    let unsure = PredictionVector::uniform(12);
    for (name, v, e) in [
        ("both confident", &confident, &peaked(2, 0.7)),
        ("vocal unsure", &unsure, &confident),
        ("echoic unsure", &confident, &unsure),
        ("both unsure", &unsure, &unsure),
    ] {
        let ind = ReliabilityIndicators::compute(v, e, 4)?;
        let out = rb_fuse(v, e, &params, 4)?;
        println!(
            "{name:<15} L_v {:.2} D_v {:.2} L_e {:.2} D_e {:.2} -> {:?}, decision {:?}, lambda {:?}",
            ind.l_v, ind.d_v, ind.l_e, ind.d_e, out.kind, out.decision(), out.lambda
        );
    }
    Ok(())
}
