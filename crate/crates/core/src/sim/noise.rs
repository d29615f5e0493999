use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{synthesize_vocal, SyntheticVocabulary};
use crate::audio::AudioBuffer;
use crate::error::Result;

/// Synthetic stand-ins for recorded environmental noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Pink,
    /// Several overlapping talkers saying out-of-vocabulary words.
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Babble => "babble",
        }
    }
}

const BABBLE_TALKERS: usize = 6;
const NOISE_RMS: f64 = 0.1;

fn white<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// White noise reshaped to a 1/f power spectrum (flat below 20 Hz).
fn pink<R: Rng + ?Sized>(len: usize, rate: u32, rng: &mut R) -> Vec<f64> {
    let mut spec: Vec<Complex<f64>> = white(len, rng).into_iter().map(|v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut spec);
    for (k, s) in spec.iter_mut().enumerate() {
        let bin = k.min(len - k);
        let f = (bin as f64 * rate as f64 / len as f64).max(20.0);
        *s *= 1.0 / f.sqrt();
    }
    planner.plan_fft_inverse(len).process(&mut spec);
    spec.into_iter().map(|c| c.re).collect()
}

fn babble<R: Rng + ?Sized>(
    len: usize,
    rate: u32,
    vocab: &SyntheticVocabulary,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    for _ in 0..BABBLE_TALKERS {
        let mut pos = rng.random_range(0..(rate as usize / 4).max(1));
        while pos < len {
            let word = vocab.sample_unknown(rng);
            let voice = synthesize_vocal(&word.signature, word.duration, rate)?;
            let gain = rng.random_range(0.5..1.0);
            for (o, v) in out[pos..].iter_mut().zip(voice.samples()) {
                *o += gain * v;
            }
            pos += voice.len() + rng.random_range(0..(rate as usize / 5));
        }
    }
    Ok(out)
}

/// `len` samples of mono noise of the given kind, scaled to RMS 0.1.
pub fn generate_noise<R: Rng + ?Sized>(
    kind: NoiseKind,
    len: usize,
    rate: u32,
    vocab: &SyntheticVocabulary,
    rng: &mut R,
) -> Result<AudioBuffer> {
    let mut x = match kind {
        NoiseKind::White => white(len, rng),
        NoiseKind::Pink => pink(len, rate, rng),
        NoiseKind::Babble => babble(len, rate, vocab, rng)?,
    };
    if len > 0 {
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        if rms > 0.0 {
            x.iter_mut().for_each(|v| *v *= NOISE_RMS / rms);
        }
    }
    AudioBuffer::mono(x, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{band_energy_fraction, signal_power};
    use crate::seed::rng_for;

    #[test]
    fn kinds_have_expected_spectra() {
        let vocab = SyntheticVocabulary::reference(0);
        let mut rng = rng_for(1, 2, 3);
        let w = generate_noise(NoiseKind::White, 48_000, 48_000, &vocab, &mut rng).unwrap();
        let p = generate_noise(NoiseKind::Pink, 48_000, 48_000, &vocab, &mut rng).unwrap();
        let b = generate_noise(NoiseKind::Babble, 48_000, 48_000, &vocab, &mut rng).unwrap();
        for x in [&w, &p, &b] {
            assert!((signal_power(x).unwrap() - 0.01).abs() < 1e-9);
        }
        // White is flat; pink concentrates energy at low frequency.
        assert!((band_energy_fraction(&w, 0.0, 12_000.0) - 0.5).abs() < 0.02);
        assert!(band_energy_fraction(&p, 0.0, 1_000.0) > 0.5);
        assert!(band_energy_fraction(&b, 0.0, 5_000.0) > 0.99);
    }
}
