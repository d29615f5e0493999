//! Differential echo profiles of a spoken and a silent word side by side.
//! Articulation moves the mouth reflector; the static face path cancels.

use dualkws::pipeline::{echoic_features, EchoicConfig};
use dualkws::sim::{synthesize_utterance, SceneSpec, SyntheticVocabulary, UtteranceMode, SILENCE};

fn main() -> dualkws::Result<()> {
    let vocab = SyntheticVocabulary::reference(1);
    let scene = SceneSpec::default();
    for (class, mode) in [(0, UtteranceMode::VocalEchoic), (0, UtteranceMode::Silent), (SILENCE, UtteranceMode::Silent)] {
        let record = synthesize_utterance(&vocab, class, &scene, mode, 7)?;
        let profile = echoic_features(&record.audio, &scene.bands, &EchoicConfig::default())?;
        println!(
            "{:>8} ({mode:?}): shape {:?}, energy {:.4}",
            vocab.label(class),
            profile.values.dim(),
            profile.frobenius_norm()
        );
    }
    Ok(())
}
