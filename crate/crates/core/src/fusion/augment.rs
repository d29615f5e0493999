use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::sim::{
    add_vocal_band_noise, generate_noise, other_talker_voice, replace_vocal_band, NoiseKind, SceneSpec,
    SyntheticVocabulary,
};

/// The four ways a fusion training instance may be processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionAugmentation {
    None,
    /// Environmental noise in the vocal band at a random SNR.
    Noise,
    /// Another talker's voice at a fixed gain.
    VocalOverlay,
    /// Vocal band replaced by a low floor.
    VocalDropped,
}

impl FusionAugmentation {
    pub const ALL: [FusionAugmentation; 4] = [Self::None, Self::Noise, Self::VocalOverlay, Self::VocalDropped];

    /// Uniform draw over the four cases.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::ALL[rng.random_range(0..4)]
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Noise => "noise",
            Self::VocalOverlay => "vocal-overlay",
            Self::VocalDropped => "vocal-dropped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Augmented copies per tune record, each with its own draw.
    pub copies: usize,
    pub snr_range: (f64, f64),
    pub noise_kinds: Vec<NoiseKind>,
    pub overlay_gain: f64,
    pub floor_db: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            copies: 4,
            snr_range: (-15.0, 15.0),
            noise_kinds: NoiseKind::ALL.to_vec(),
            overlay_gain: 1.0,
            floor_db: -60.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.copies == 0 || self.noise_kinds.is_empty() || !(self.snr_range.0 <= self.snr_range.1) {
            return Err(Error::Config(format!("invalid fusion augmentation config {self:?}")));
        }
        Ok(())
    }
}

/// Applies one augmentation to a recording. `reference_power` is the
/// vocal-band power the noise SNR is measured against.
pub fn apply_augmentation<R: Rng + ?Sized>(
    audio: &AudioBuffer,
    aug: FusionAugmentation,
    reference_power: f64,
    vocab: &SyntheticVocabulary,
    scene: &SceneSpec,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<AudioBuffer> {
    match aug {
        FusionAugmentation::None => Ok(audio.clone()),
        FusionAugmentation::Noise => {
            let kind = cfg.noise_kinds[rng.random_range(0..cfg.noise_kinds.len())];
            let snr = rng.random_range(cfg.snr_range.0..=cfg.snr_range.1);
            let noise = generate_noise(kind, audio.len(), audio.rate(), vocab, rng)?;
            Ok(add_vocal_band_noise(audio, &noise, snr, reference_power)?.0)
        }
        FusionAugmentation::VocalOverlay => {
            let voice = other_talker_voice(vocab, scene, rng)?;
            let mut out = audio.clone();
            for c in 0..out.channels() {
                for (s, v) in out.channel_mut(c).iter_mut().zip(voice.samples()) {
                    *s += cfg.overlay_gain * v;
                }
            }
            Ok(out)
        }
        FusionAugmentation::VocalDropped => replace_vocal_band(audio, cfg.floor_db, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    #[test]
    fn draws_are_uniform() {
        let mut rng = rng_for(5, 0, 0);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let a = FusionAugmentation::draw(&mut rng);
            counts[FusionAugmentation::ALL.iter().position(|b| *b == a).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.015, "{counts:?}");
        }
    }
}
