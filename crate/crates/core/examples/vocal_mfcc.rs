//! Vocal front end on a synthetic utterance: low-pass, decimate, MFCC.

use dualkws::pipeline::vocal_features;
use dualkws::mfcc::MfccConfig;
use dualkws::sim::{synthesize_utterance, SceneSpec, SyntheticVocabulary, UtteranceMode};

fn main() -> dualkws::Result<()> {
    let vocab = SyntheticVocabulary::reference(1);
    let scene = SceneSpec::default();
    let record = synthesize_utterance(&vocab, 3, &scene, UtteranceMode::VocalEchoic, 42)?;
    let mfcc = vocal_features(&record.audio, &MfccConfig::default())?;
    println!("'{}': {} coefficients x {} frames", vocab.label(3), mfcc.nrows(), mfcc.ncols());
    for (k, row) in mfcc.outer_iter().take(4).enumerate() {
        let mean = row.sum() / row.len() as f64;
        println!("c{k}: mean {mean:+.3}");
    }
    Ok(())
}
