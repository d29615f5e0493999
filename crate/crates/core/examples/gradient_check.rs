//! Analytic gradients of a tiny network against central differences.

use dualkws::nn::{build_model, gradient_check, NetConfig};
use rand_distr::{Distribution, StandardNormal};

fn main() -> dualkws::Result<()> {
    let config = NetConfig::tiny(2, (8, 8));
    let weights = build_model(&config, 3)?;
    let mut rng = dualkws::seed::rng_for(3, 0, 0);
    let input: Vec<f64> = (0..config.input_len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let err = gradient_check(&weights, &input, 5, 11)?;
    println!("{} parameters, max relative error {err:.2e}", weights.param_count());
    Ok(())
}
