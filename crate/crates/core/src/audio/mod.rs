//! Waveform containers and the signal arithmetic shared by both modality
//! pipelines.
//!
//! Every buffer stores its channels back to back (channel-major). A 48 kHz
//! rate is the canonical project rate; nothing here depends on it.

mod filter;
mod wav;

pub use filter::{apply_filter, design_fir, FilterKind, FilterSpec};
pub use wav::{wav_read, wav_write, WavEncoding, WriteReport};

use rand::Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Canonical capture rate of the headset microphones.
pub const PROJECT_RATE: u32 = 48_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    rate: u32,
    channels: usize,
}

impl AudioBuffer {
    /// Builds a buffer from channel-major samples.
    pub fn new(samples: Vec<f64>, rate: u32, channels: usize) -> Result<Self> {
        if rate == 0 {
            return Err(Error::InvalidBuffer("rate must be positive".into()));
        }
        if channels == 0 {
            return Err(Error::InvalidBuffer("channel count must be positive".into()));
        }
        if samples.len() % channels != 0 {
            return Err(Error::InvalidBuffer(format!(
                "{} samples do not divide into {} equal channels",
                samples.len(),
                channels
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidBuffer(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            rate,
            channels,
        })
    }

    pub fn mono(samples: Vec<f64>, rate: u32) -> Result<Self> {
        Self::new(samples, rate, 1)
    }

    pub fn from_channels(channels: Vec<Vec<f64>>, rate: u32) -> Result<Self> {
        let n = channels.len();
        if let Some(first) = channels.first() {
            if channels.iter().any(|c| c.len() != first.len()) {
                return Err(Error::InvalidBuffer("channels differ in length".into()));
            }
        }
        Self::new(channels.into_iter().flatten().collect(), rate, n)
    }

    pub fn zeros(len: usize, rate: u32, channels: usize) -> Result<Self> {
        Self::new(vec![0.0; len * channels], rate, channels)
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.rate as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.len();
        &self.samples[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.len();
        &mut self.samples[c * n..(c + 1) * n]
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Extracts one channel as a mono buffer.
    pub fn channel_buffer(&self, c: usize) -> AudioBuffer {
        AudioBuffer {
            samples: self.channel(c).to_vec(),
            rate: self.rate,
            channels: 1,
        }
    }

    pub fn scaled(&self, gain: f64) -> AudioBuffer {
        AudioBuffer {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            rate: self.rate,
            channels: self.channels,
        }
    }

    /// Sample-wise sum of two buffers with identical layout.
    pub fn add(&self, other: &AudioBuffer) -> Result<AudioBuffer> {
        self.check_compatible(other)?;
        Ok(AudioBuffer {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            rate: self.rate,
            channels: self.channels,
        })
    }

    pub fn add_scaled_in_place(&mut self, other: &AudioBuffer, gain: f64) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += gain * b;
        }
        Ok(())
    }

    fn check_compatible(&self, other: &AudioBuffer) -> Result<()> {
        if self.rate != other.rate || self.channels != other.channels || self.len() != other.len()
        {
            return Err(Error::InvalidBuffer(format!(
                "layout mismatch: {}ch×{}@{} vs {}ch×{}@{}",
                self.channels,
                self.len(),
                self.rate,
                other.channels,
                other.len(),
                other.rate
            )));
        }
        Ok(())
    }

    /// Keeps every `factor`-th sample. The caller is responsible for the
    /// anti-aliasing filter.
    pub fn decimate(&self, factor: usize) -> Result<AudioBuffer> {
        if factor == 0 || self.rate % factor as u32 != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot decimate {} Hz by {factor}",
                self.rate
            )));
        }
        let mut chans = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            chans.push(self.channel(c).iter().step_by(factor).copied().collect());
        }
        AudioBuffer::from_channels(chans, self.rate / factor as u32)
    }
}

/// Mean squared amplitude over every channel.
pub fn signal_power(buffer: &AudioBuffer) -> Result<f64> {
    if buffer.is_empty() {
        return Err(Error::Empty("signal_power on empty buffer"));
    }
    let sum: f64 = buffer.samples.iter().map(|s| s * s).sum();
    Ok(sum / buffer.samples.len() as f64)
}

pub fn db_to_power_ratio(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn power_ratio_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Result of [`mix_at_snr`], carrying what is needed to re-measure the SNR.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixture: AudioBuffer,
    /// The cropped noise segment before scaling.
    pub noise_segment: AudioBuffer,
    pub noise_gain: f64,
    pub offset: usize,
}

/// Noise gain that places noise of power `noise_power` at `snr_db` below a
/// signal of power `signal_power`.
pub fn snr_gain(signal_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (signal_power / (noise_power * db_to_power_ratio(snr_db))).sqrt()
}

/// Adds a randomly cropped noise segment scaled so that the signal-to-noise
/// power ratio equals `snr_db`.
///
/// Mono noise is broadcast across the channels of a multichannel signal.
pub fn mix_at_snr<R: Rng + ?Sized>(
    signal: &AudioBuffer,
    noise: &AudioBuffer,
    snr_db: f64,
    rng: &mut R,
) -> Result<Mixture> {
    if signal.rate != noise.rate {
        return Err(Error::InvalidArgument(format!(
            "rate mismatch: signal {} Hz, noise {} Hz",
            signal.rate, noise.rate
        )));
    }
    if noise.channels != 1 && noise.channels != signal.channels {
        return Err(Error::InvalidArgument(
            "noise must be mono or match the signal channel count".into(),
        ));
    }
    if noise.len() < signal.len() {
        return Err(Error::InvalidArgument(format!(
            "noise ({} samples) shorter than signal ({})",
            noise.len(),
            signal.len()
        )));
    }
    let n = signal.len();
    let offset = rng.random_range(0..=noise.len() - n);
    let mut seg = Vec::with_capacity(n * signal.channels);
    for c in 0..signal.channels {
        let src = if noise.channels == 1 { 0 } else { c };
        seg.extend_from_slice(&noise.channel(src)[offset..offset + n]);
    }
    let noise_segment = AudioBuffer::new(seg, signal.rate, signal.channels)?;

    let ps = signal_power(signal)?;
    let pn = signal_power(&noise_segment)?;
    if ps == 0.0 {
        return Err(Error::ZeroPower("signal"));
    }
    if pn == 0.0 {
        return Err(Error::ZeroPower("noise"));
    }
    let k = snr_gain(ps, pn, snr_db);
    let mut mixture = signal.clone();
    mixture.add_scaled_in_place(&noise_segment, k)?;
    Ok(Mixture {
        mixture,
        noise_segment,
        noise_gain: k,
        offset,
    })
}

/// Fraction of spectral energy (summed over channels) that falls in
/// `[f_lo, f_hi)` Hz.
pub fn band_energy_fraction(buffer: &AudioBuffer, f_lo: f64, f_hi: f64) -> f64 {
    let n = buffer.len();
    if n == 0 {
        return 0.0;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut total = 0.0;
    let mut band = 0.0;
    for c in 0..buffer.channels {
        let mut spec: Vec<Complex<f64>> = buffer
            .channel(c)
            .iter()
            .map(|&s| Complex::new(s, 0.0))
            .collect();
        fft.process(&mut spec);
        for (k, v) in spec.iter().enumerate().take(n / 2 + 1) {
            let f = k as f64 * buffer.rate as f64 / n as f64;
            let e = v.norm_sqr();
            total += e;
            if f >= f_lo && f < f_hi {
                band += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        band / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, amp: f64, n: usize, rate: u32) -> AudioBuffer {
        let s = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioBuffer::mono(s, rate).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(AudioBuffer::mono(vec![0.0, f64::NAN], 48_000).is_err());
        assert!(AudioBuffer::new(vec![0.0; 5], 48_000, 2).is_err());
        assert!(AudioBuffer::new(vec![0.0; 4], 0, 1).is_err());
    }

    #[test]
    fn power_of_constant_zero_and_sine() {
        let c = AudioBuffer::mono(vec![0.5; 100], 48_000).unwrap();
        assert!((signal_power(&c).unwrap() - 0.25).abs() < 1e-15);
        let z = AudioBuffer::mono(vec![0.0; 100], 48_000).unwrap();
        assert_eq!(signal_power(&z).unwrap(), 0.0);
        // 100 full periods of 1 kHz
        let s = sine(1000.0, 1.0, 4800, 48_000);
        assert!((signal_power(&s).unwrap() - 0.5).abs() < 1e-3);
        assert!(signal_power(&AudioBuffer::mono(vec![], 48_000).unwrap()).is_err());
    }

    #[test]
    fn snr_gain_closed_forms() {
        assert!((snr_gain(1.0, 1.0, 0.0) - 1.0).abs() < 1e-12);
        assert!((snr_gain(1.0, 1.0, -10.0) - 10f64.sqrt()).abs() < 1e-12);
        assert!((snr_gain(1.0, 1.0, 10.0) - 0.316_227_766).abs() < 1e-8);
    }

    #[test]
    fn mixing_hits_target_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sig = sine(440.0, 0.3, 4800, 48_000);
        let noise = AudioBuffer::mono(
            (0..9600).map(|_| rng.random_range(-1.0..1.0)).collect(),
            48_000,
        )
        .unwrap();
        for target in [-10.0, 0.0, 10.0] {
            let m = mix_at_snr(&sig, &noise, target, &mut rng).unwrap();
            let scaled = m.noise_segment.scaled(m.noise_gain);
            let snr = power_ratio_to_db(
                signal_power(&sig).unwrap() / signal_power(&scaled).unwrap(),
            );
            assert!((snr - target).abs() < 0.01, "{snr} vs {target}");
        }
    }

    #[test]
    fn mixing_rejects_degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sig = sine(440.0, 0.3, 100, 48_000);
        let silent = AudioBuffer::mono(vec![0.0; 200], 48_000).unwrap();
        assert!(matches!(
            mix_at_snr(&sig, &silent, 0.0, &mut rng),
            Err(Error::ZeroPower("noise"))
        ));
        let short = sine(100.0, 1.0, 50, 48_000);
        assert!(mix_at_snr(&sig, &short, 0.0, &mut rng).is_err());
        let other_rate = sine(100.0, 1.0, 200, 16_000);
        assert!(mix_at_snr(&sig, &other_rate, 0.0, &mut rng).is_err());
    }

    #[test]
    fn decimation_keeps_every_third() {
        let b = AudioBuffer::mono((0..9).map(f64::from).collect(), 48_000).unwrap();
        let d = b.decimate(3).unwrap();
        assert_eq!(d.rate(), 16_000);
        assert_eq!(d.samples(), &[0.0, 3.0, 6.0]);
    }

    #[test]
    fn band_fraction_of_pure_tone() {
        let s = sine(3000.0, 1.0, 4800, 48_000);
        assert!(band_energy_fraction(&s, 2900.0, 3100.0) > 0.999);
    }
}
