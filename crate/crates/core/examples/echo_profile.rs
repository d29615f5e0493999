//! Static reflectors at several distances: the echo-profile peak lands on the
//! round-trip lag in samples.

use dualkws::fmcw::{compute_echo_profile, distance_to_shift, shift_to_distance, ChirpSpec};
use dualkws::sim::{simulate_echo_channel, SceneSpec};

fn main() -> dualkws::Result<()> {
    let spec = ChirpSpec::low_band();
    println!("bin width: {:.4} cm", 100.0 * shift_to_distance(1, spec.rate, 343.0));
    for cm in [1.0, 5.0, 10.0, 20.0, 30.0] {
        let scene = SceneSpec {
            bands: vec![spec.clone()],
            baseline_distance: cm / 100.0,
            face_gain: 0.0,
            ..SceneSpec::default()
        };
        let rx = simulate_echo_channel(&[0.0; 8], &scene)?;
        let profile = compute_echo_profile(&rx, &spec, (0, spec.len() - 1))?;
        println!(
            "{cm:>4} cm: peak at shift {}, expected {}",
            profile.argmax_shift(0, 4),
            distance_to_shift(cm / 100.0, spec.rate, 343.0)
        );
    }
    Ok(())
}
