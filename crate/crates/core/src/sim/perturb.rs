//! Vocal-band perturbations shared by training augmentation, fusion
//! augmentation and the evaluation scenarios. None of them touches the
//! band above the vocal cutoff.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{synthesize_vocal, SceneSpec, SyntheticVocabulary};
use crate::audio::{apply_filter, signal_power, snr_gain, AudioBuffer, FilterSpec};
use crate::error::{Error, Result};
use crate::pipeline::{vocal_band, VOCAL_CUTOFF_HZ};

/// Power of the low-passed first channel.
pub fn vocal_band_power(audio: &AudioBuffer) -> Result<f64> {
    signal_power(&vocal_band(audio)?)
}

/// Median of the positive entries, or `None` when there are none.
pub fn median_power(powers: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = powers.iter().copied().filter(|p| *p > 0.0 && p.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Adds mono `noise`, low-passed to the vocal band, to every channel so that
/// `reference_power / noise_power = snr_db`. Returns the mixture and the
/// applied noise power.
pub fn add_vocal_band_noise(audio: &AudioBuffer, noise: &AudioBuffer, snr_db: f64, reference_power: f64) -> Result<(AudioBuffer, f64)> {
    if noise.channels() != 1 || noise.rate() != audio.rate() || noise.len() < audio.len() {
        return Err(Error::InvalidArgument(
            "noise must be mono, at the signal rate and at least as long".into(),
        ));
    }
    if !(reference_power > 0.0) {
        return Err(Error::ZeroPower("reference"));
    }
    let seg = AudioBuffer::mono(noise.samples()[..audio.len()].to_vec(), noise.rate())?;
    let low = apply_filter(&seg, &FilterSpec::lowpass(VOCAL_CUTOFF_HZ))?;
    let pn = signal_power(&low)?;
    if pn == 0.0 {
        return Err(Error::ZeroPower("noise"));
    }
    let k = snr_gain(reference_power, pn, snr_db);
    let mut out = audio.clone();
    for c in 0..out.channels() {
        for (s, v) in out.channel_mut(c).iter_mut().zip(low.samples()) {
            *s += k * v;
        }
    }
    Ok((out, k * k * pn))
}

/// Replaces everything below the vocal cutoff with a low-passed white floor
/// at `floor_db` dBFS (RMS before filtering), leaving the echo band intact.
pub fn replace_vocal_band<R: Rng + ?Sized>(audio: &AudioBuffer, floor_db: f64, rng: &mut R) -> Result<AudioBuffer> {
    let spec = FilterSpec::lowpass(VOCAL_CUTOFF_HZ);
    let low = apply_filter(audio, &spec)?;
    let sigma = 10f64.powf(floor_db / 20.0);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let floor: Vec<f64> = (0..audio.samples().len()).map(|_| normal.sample(rng)).collect();
    let floor = apply_filter(&AudioBuffer::new(floor, audio.rate(), audio.channels())?, &spec)?;
    let mut out = audio.clone();
    for c in 0..out.channels() {
        let (l, f) = (low.channel(c), floor.channel(c));
        for (i, s) in out.channel_mut(c).iter_mut().enumerate() {
            *s += f[i] - l[i];
        }
    }
    Ok(out)
}

/// Mono voice of another talker saying a random word (a command with
/// probability 0.8, otherwise an out-of-vocabulary word) at the scene's
/// vocal level, placed at a random onset inside one utterance window.
pub fn other_talker_voice<R: Rng + ?Sized>(vocab: &SyntheticVocabulary, scene: &SceneSpec, rng: &mut R) -> Result<AudioBuffer> {
    let n = scene.utterance_samples();
    let word = if rng.random_bool(0.8) {
        let id = rng.random_range(0..vocab.commands.len());
        vocab.commands[id].other_talker(rng)
    } else {
        vocab.sample_unknown(rng)
    };
    let voice = synthesize_vocal(&word.signature, word.duration, scene.rate())?;
    let mut out = vec![0.0; n];
    let slack = n.saturating_sub(voice.len());
    let start = if slack > 0 { rng.random_range(0..=slack) } else { 0 };
    for (o, v) in out[start..].iter_mut().zip(voice.samples()) {
        *o = scene.vocal_level * v;
    }
    AudioBuffer::mono(out, scene.rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::echo_band;
    use crate::seed::rng_for;
    use crate::sim::{generate_noise, synthesize_utterance, NoiseKind, UtteranceMode};

    fn record() -> AudioBuffer {
        let vocab = SyntheticVocabulary::reference(0);
        synthesize_utterance(&vocab, 3, &SceneSpec::default(), UtteranceMode::VocalEchoic, 9)
            .unwrap()
            .audio
    }

    #[test]
    fn noise_lands_at_requested_power() {
        let vocab = SyntheticVocabulary::reference(0);
        let a = record();
        let noise = generate_noise(NoiseKind::Pink, a.len(), a.rate(), &vocab, &mut rng_for(0, 0, 0)).unwrap();
        let p = vocal_band_power(&a).unwrap();
        let (_, pn) = add_vocal_band_noise(&a, &noise, 5.0, p).unwrap();
        assert!((10.0 * (p / pn).log10() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn echo_band_is_preserved() {
        let a = record();
        let b = replace_vocal_band(&a, -60.0, &mut rng_for(0, 0, 1)).unwrap();
        let (ea, eb) = (echo_band(&a).unwrap(), echo_band(&b).unwrap());
        let diff: f64 = ea.samples().iter().zip(eb.samples()).map(|(x, y)| (x - y).powi(2)).sum();
        let total: f64 = ea.samples().iter().map(|x| x * x).sum();
        assert!(diff / total < 1e-4, "{}", diff / total);
        assert!(vocal_band_power(&b).unwrap() < 1e-3 * vocal_band_power(&a).unwrap());
    }

    #[test]
    fn median_of_positive_powers() {
        assert_eq!(median_power(&[3.0, 0.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median_power(&[0.0]), None);
        assert_eq!(median_power(&[1.0, 4.0]), Some(2.5));
    }
}
