//! Mixes environmental noise into an utterance at fixed SNRs and re-measures.

use dualkws::audio::{power_ratio_to_db, signal_power};
use dualkws::pipeline::vocal_band;
use dualkws::sim::{add_vocal_band_noise, generate_noise, synthesize_utterance, vocal_band_power, NoiseKind, SceneSpec, SyntheticVocabulary, UtteranceMode};

fn main() -> dualkws::Result<()> {
    let vocab = SyntheticVocabulary::reference(0);
    let scene = SceneSpec::default();
    let record = synthesize_utterance(&vocab, 1, &scene, UtteranceMode::VocalEchoic, 5)?;
    let p_signal = vocal_band_power(&record.audio)?;
    let mut rng = dualkws::seed::rng_for(5, 0, 0);
    for kind in NoiseKind::ALL {
        let noise = generate_noise(kind, record.audio.len(), scene.rate(), &vocab, &mut rng)?;
        for snr in [-10.0, 0.0, 10.0] {
            let (mixed, p_noise) = add_vocal_band_noise(&record.audio, &noise, snr, p_signal)?;
            let total = signal_power(&vocal_band(&mixed)?)?;
            println!(
                "{:>6} {snr:+5.1} dB: achieved {:+.3} dB, mixture {:.2e}",
                kind.name(),
                power_ratio_to_db(p_signal / p_noise),
                total
            );
        }
    }
    Ok(())
}
