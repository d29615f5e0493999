//! The genetic optimiser on the 8-dimensional sphere.

use dualkws::fusion::{run_ga, sphere, GaConfig};

fn main() -> dualkws::Result<()> {
    for seed in 0..4 {
        let r = run_ga(sphere, &[(-5.12, 5.12); 8], &GaConfig::default(), seed, &[], 1)?;
        let reached = r.trace.iter().position(|&f| f > -1e-2);
        println!("seed {seed}: best {:.2e}, within 1e-2 at generation {reached:?}", -r.best_fitness);
    }
    Ok(())
}
