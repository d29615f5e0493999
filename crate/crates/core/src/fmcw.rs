//! FMCW chirp synthesis and cross-correlation echo profiles.
//!
//! A chirp sweeps linearly from `f_low` to `f_high` over one period `T`:
//!
//! ```text
//! f(t) = f_low + (f_high - f_low) * t / T
//! phi(t) = 2*pi*(f_low*t + (f_high - f_low) * t^2 / (2T))
//! ```
//!
//! The receiver is assumed chirp-synchronised: frame `f` of the received
//! signal is samples `[f*L, (f+1)*L)` where `L = T * rate`. Each frame is
//! circularly cross-correlated with the template chirp; lag `s` of that
//! correlation measures reflections whose round-trip delay is `s` samples.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{s, Array3, Axis};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, FilterSpec};
use crate::container::{read_tensor, write_tensor, TensorHeader};
use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Default retained lag range, about 0–42.5 cm one-way at 48 kHz.
pub const DEFAULT_SHIFT_WINDOW: (usize, usize) = (0, 119);

/// Half-width added around each chirp band when isolating it.
pub const BAND_MARGIN_HZ: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec {
    pub f_low: f64,
    pub f_high: f64,
    /// Chirp period in seconds.
    pub period: f64,
    pub rate: u32,
    pub amplitude: f64,
}

impl ChirpSpec {
    /// Lower headset band, 17–20 kHz, 12 ms at 48 kHz.
    pub fn low_band() -> Self {
        Self {
            f_low: 17_000.0,
            f_high: 20_000.0,
            period: 0.012,
            rate: 48_000,
            amplitude: 1.0,
        }
    }

    /// Upper headset band, 20.5–23.5 kHz, 12 ms at 48 kHz.
    pub fn high_band() -> Self {
        Self {
            f_low: 20_500.0,
            f_high: 23_500.0,
            ..Self::low_band()
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.rate as f64 / 2.0;
        if !(self.f_low > 0.0 && self.f_low <= self.f_high && self.f_high < nyquist) {
            return Err(Error::InvalidChirp(format!(
                "need 0 < f_low <= f_high < {nyquist}, got {}..{}",
                self.f_low, self.f_high
            )));
        }
        let n = self.period * self.rate as f64;
        if !(n >= 1.0 && (n - n.round()).abs() < 1e-6) {
            return Err(Error::InvalidChirp(format!(
                "period × rate = {n} is not a positive integer"
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidChirp("amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Chirp length in samples.
    pub fn len(&self) -> usize {
        (self.period * self.rate as f64).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.f_low + (self.f_high - self.f_low) * t / self.period
    }

    /// Filter isolating this band from the rest of the microphone signal.
    /// Bands whose upper margin would reach Nyquist use a high-pass instead.
    pub fn isolation_filter(&self) -> FilterSpec {
        let nyquist = self.rate as f64 / 2.0;
        let upper = self.f_high + BAND_MARGIN_HZ;
        if upper < 0.98 * nyquist {
            FilterSpec::bandpass(self.f_low - BAND_MARGIN_HZ, upper)
        } else {
            FilterSpec::highpass(self.f_low - BAND_MARGIN_HZ)
        }
    }
}

/// One period of the linear chirp.
pub fn generate_chirp(spec: &ChirpSpec) -> Result<AudioBuffer> {
    spec.validate()?;
    let rate = spec.rate as f64;
    let sweep = spec.f_high - spec.f_low;
    let samples = (0..spec.len())
        .map(|n| {
            let t = n as f64 / rate;
            let phase = 2.0 * PI * (spec.f_low * t + sweep * t * t / (2.0 * spec.period));
            spec.amplitude * phase.sin()
        })
        .collect();
    AudioBuffer::mono(samples, spec.rate)
}

/// `n_chirps` back-to-back repetitions of the chirp. Consecutive frames are
/// identical; the stream is phase-continuous whenever
/// `period * (f_low + f_high) / 2` is an integer, which holds for both
/// headset bands.
pub fn generate_fmcw_stream(spec: &ChirpSpec, n_chirps: usize) -> Result<AudioBuffer> {
    if n_chirps == 0 {
        return Err(Error::InvalidArgument("n_chirps must be at least 1".into()));
    }
    let chirp = generate_chirp(spec)?;
    let mut samples = Vec::with_capacity(chirp.len() * n_chirps);
    for _ in 0..n_chirps {
        samples.extend_from_slice(chirp.samples());
    }
    AudioBuffer::mono(samples, spec.rate)
}

/// Correlation magnitudes indexed `(channel, shift, frame)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoProfile {
    pub values: Array3<f64>,
    /// Inclusive lag range kept on the shift axis.
    pub shift_window: (usize, usize),
    /// Seconds between consecutive frames.
    pub frame_period: f64,
}

impl EchoProfile {
    pub fn channels(&self) -> usize {
        self.values.len_of(Axis(0))
    }

    pub fn shifts(&self) -> usize {
        self.values.len_of(Axis(1))
    }

    pub fn frames(&self) -> usize {
        self.values.len_of(Axis(2))
    }

    /// Lag (absolute, in samples) of the strongest value in a frame.
    pub fn argmax_shift(&self, channel: usize, frame: usize) -> usize {
        let col = self.values.slice(s![channel, .., frame]);
        let (idx, _) = col
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        self.shift_window.0 + idx
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Stacks profiles along the channel axis.
    pub fn stack(profiles: &[EchoProfile]) -> Result<EchoProfile> {
        let first = profiles
            .first()
            .ok_or(Error::Empty("no profiles to stack"))?;
        let views: Vec<_> = profiles.iter().map(|p| p.values.view()).collect();
        let values = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch {
            expected: format!("{:?}", first.values.shape()),
            got: e.to_string(),
        })?;
        Ok(EchoProfile {
            values,
            shift_window: first.shift_window,
            frame_period: first.frame_period,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = TensorHeader {
            dims: self.values.shape().to_vec(),
            window: (self.shift_window.0 as i64, self.shift_window.1 as i64),
            frame_period: self.frame_period,
        };
        write_tensor(path, &header, self.values.iter().copied())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (header, values) = read_tensor(path)?;
        if header.dims.len() != 3 || header.window.0 < 0 || header.window.1 < header.window.0 {
            return Err(Error::Container(format!(
                "not an echo profile: dims {:?}, window {:?}",
                header.dims, header.window
            )));
        }
        let dims = (header.dims[0], header.dims[1], header.dims[2]);
        let values = Array3::from_shape_vec(dims, values)
            .map_err(|e| Error::Container(e.to_string()))?;
        Ok(Self {
            values,
            shift_window: (header.window.0 as usize, header.window.1 as usize),
            frame_period: header.frame_period,
        })
    }
}

/// Cross-correlates each chirp-length frame of every channel with the
/// template chirp and keeps the lags in `shift_window`.
pub fn compute_echo_profile(
    received: &AudioBuffer,
    spec: &ChirpSpec,
    shift_window: (usize, usize),
) -> Result<EchoProfile> {
    let template = generate_chirp(spec)?;
    let l = template.len();
    let (lo, hi) = shift_window;
    if lo > hi || hi >= l {
        return Err(Error::InvalidArgument(format!(
            "shift window {lo}..={hi} outside [0, {l})"
        )));
    }
    if received.rate() != spec.rate {
        return Err(Error::InvalidArgument(format!(
            "received at {} Hz, chirp at {} Hz",
            received.rate(),
            spec.rate
        )));
    }
    let frames = received.len() / l;
    if frames == 0 {
        return Err(Error::InvalidArgument(format!(
            "received signal ({} samples) shorter than one chirp ({l})",
            received.len()
        )));
    }

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(l);
    let inv = planner.plan_fft_inverse(l);
    let mut tmpl: Vec<Complex<f64>> = template
        .samples()
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    fwd.process(&mut tmpl);
    let tmpl_conj: Vec<Complex<f64>> = tmpl.iter().map(|c| c.conj()).collect();

    let width = hi - lo + 1;
    let mut values = Array3::zeros((received.channels(), width, frames));
    let mut buf = vec![Complex::new(0.0, 0.0); l];
    let scale = 1.0 / l as f64;
    for c in 0..received.channels() {
        let x = received.channel(c);
        for f in 0..frames {
            for (b, &v) in buf.iter_mut().zip(&x[f * l..(f + 1) * l]) {
                *b = Complex::new(v, 0.0);
            }
            fwd.process(&mut buf);
            for (b, t) in buf.iter_mut().zip(&tmpl_conj) {
                *b *= t;
            }
            inv.process(&mut buf);
            for (i, shift) in (lo..=hi).enumerate() {
                values[[c, i, f]] = (buf[shift].re * scale).abs();
            }
        }
    }
    Ok(EchoProfile {
        values,
        shift_window,
        frame_period: spec.period,
    })
}

/// Frame-to-frame difference along the time axis; cancels static paths.
pub fn differential_echo_profile(profile: &EchoProfile) -> Result<EchoProfile> {
    let frames = profile.frames();
    if frames < 2 {
        return Err(Error::InvalidArgument(format!(
            "differential profile needs at least 2 frames, got {frames}"
        )));
    }
    let later = profile.values.slice(s![.., .., 1..]);
    let earlier = profile.values.slice(s![.., .., ..frames - 1]);
    Ok(EchoProfile {
        values: &later - &earlier,
        shift_window: profile.shift_window,
        frame_period: profile.frame_period,
    })
}

/// One-way reflector distance for a round-trip lag of `shift` samples.
pub fn shift_to_distance(shift: usize, rate: u32, speed_of_sound: f64) -> f64 {
    shift as f64 * speed_of_sound / (2.0 * rate as f64)
}

/// Nearest whole-sample round-trip lag for a reflector at `distance` metres.
pub fn distance_to_shift(distance: f64, rate: u32, speed_of_sound: f64) -> i64 {
    (2.0 * distance * rate as f64 / speed_of_sound).round() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::band_energy_fraction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn delayed(x: &[f64], k: usize) -> Vec<f64> {
        let n = x.len();
        (0..n).map(|i| x[(i + n - k % n) % n]).collect()
    }

    #[test]
    fn chirp_lengths_and_band() {
        let low = generate_chirp(&ChirpSpec::low_band()).unwrap();
        assert_eq!(low.len(), 576);
        let high = generate_chirp(&ChirpSpec::high_band()).unwrap();
        assert_eq!(high.len(), 576);
        let frac = band_energy_fraction(&high, 20_500.0, 23_500.0 + 1e-9);
        assert!(frac >= 0.95, "in-band fraction {frac}");
    }

    #[test]
    fn degenerate_chirp_is_a_tone() {
        let spec = ChirpSpec {
            f_low: 1000.0,
            f_high: 1000.0,
            ..ChirpSpec::low_band()
        };
        let c = generate_chirp(&spec).unwrap();
        for (n, v) in c.samples().iter().enumerate() {
            let expect = (2.0 * PI * 1000.0 * n as f64 / 48_000.0).sin();
            assert!((v - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn instantaneous_frequency_endpoints() {
        let s = ChirpSpec::low_band();
        assert_eq!(s.instantaneous_frequency(0.0), 17_000.0);
        assert!((s.instantaneous_frequency(s.period) - 20_000.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_chirps() {
        let mut s = ChirpSpec::low_band();
        s.f_high = 25_000.0;
        assert!(generate_chirp(&s).is_err());
        let mut s = ChirpSpec::low_band();
        s.period = 0.01201;
        assert!(generate_chirp(&s).is_err());
        let mut s = ChirpSpec::low_band();
        s.f_low = 21_000.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn stream_tiles_identical_frames() {
        let spec = ChirpSpec::low_band();
        let stream = generate_fmcw_stream(&spec, 3).unwrap();
        assert_eq!(stream.len(), 1728);
        let x = stream.samples();
        assert_eq!(&x[0..576], &x[576..1152]);
        assert_eq!(
            generate_fmcw_stream(&spec, 1).unwrap(),
            generate_chirp(&spec).unwrap()
        );
        assert!(generate_fmcw_stream(&spec, 0).is_err());
    }

    #[test]
    fn stream_is_phase_continuous_for_headset_bands() {
        for spec in [ChirpSpec::low_band(), ChirpSpec::high_band()] {
            let cycles = spec.period * (spec.f_low + spec.f_high) / 2.0;
            assert!((cycles - cycles.round()).abs() < 1e-9);
        }
    }

    /// Direct O(L^2) circular correlation magnitude of one frame.
    fn naive_profile(frame: &[f64], template: &[f64], lo: usize, hi: usize) -> Vec<f64> {
        let l = template.len();
        (lo..=hi)
            .map(|s| {
                (0..l)
                    .map(|n| frame[(n + s) % l] * template[n])
                    .sum::<f64>()
                    .abs()
            })
            .collect()
    }

    #[test]
    fn delayed_template_peaks_at_delay() {
        let spec = ChirpSpec::low_band();
        let t = generate_chirp(&spec).unwrap();
        for k in [0usize, 7, 11, 42, 119] {
            let rx = AudioBuffer::mono(delayed(t.samples(), k), 48_000).unwrap();
            let p = compute_echo_profile(&rx, &spec, DEFAULT_SHIFT_WINDOW).unwrap();
            assert_eq!(p.frames(), 1);
            assert_eq!(p.argmax_shift(0, 0), k);
            let oracle = naive_profile(rx.samples(), t.samples(), 0, 119);
            let oracle_arg = oracle
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(oracle_arg, k);
        }
    }

    #[test]
    fn zeros_and_scaling() {
        let spec = ChirpSpec::low_band();
        let zeros = AudioBuffer::mono(vec![0.0; 1152], 48_000).unwrap();
        let p = compute_echo_profile(&zeros, &spec, (0, 119)).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));

        let t = generate_chirp(&spec).unwrap();
        let unit = AudioBuffer::mono(delayed(t.samples(), 9), 48_000).unwrap();
        let half = unit.scaled(0.5);
        let pu = compute_echo_profile(&unit, &spec, (0, 119)).unwrap();
        let ph = compute_echo_profile(&half, &spec, (0, 119)).unwrap();
        for (a, b) in pu.values.iter().zip(ph.values.iter()) {
            assert!((0.5 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn matches_naive_oracle_on_random_frames() {
        let spec = ChirpSpec::high_band();
        let t = generate_chirp(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let x: Vec<f64> = (0..2 * 576).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rx = AudioBuffer::mono(x.clone(), 48_000).unwrap();
            let p = compute_echo_profile(&rx, &spec, (0, 575)).unwrap();
            for f in 0..2 {
                let oracle = naive_profile(&x[f * 576..(f + 1) * 576], t.samples(), 0, 575);
                let max = oracle.iter().fold(0.0f64, |m, v| m.max(*v));
                for (s, o) in oracle.iter().enumerate() {
                    assert!((p.values[[0, s, f]] - o).abs() <= 1e-6 * max);
                }
            }
        }
    }

    #[test]
    fn window_bounds_and_short_input() {
        let spec = ChirpSpec::low_band();
        let rx = AudioBuffer::mono(vec![0.0; 600], 48_000).unwrap();
        assert!(compute_echo_profile(&rx, &spec, (0, 576)).is_err());
        assert!(compute_echo_profile(&rx, &spec, (10, 5)).is_err());
        let short = AudioBuffer::mono(vec![0.0; 500], 48_000).unwrap();
        assert!(compute_echo_profile(&short, &spec, (0, 10)).is_err());
        // Trailing partial frame is dropped.
        let p = compute_echo_profile(&rx, &spec, (0, 10)).unwrap();
        assert_eq!(p.frames(), 1);
        assert_eq!(p.shifts(), 11);
    }

    #[test]
    fn differential_cases() {
        let mk = |v: Vec<f64>, frames| EchoProfile {
            values: Array3::from_shape_vec((1, 2, frames), v).unwrap(),
            shift_window: (0, 1),
            frame_period: 0.012,
        };
        // static scene
        let d = differential_echo_profile(&mk(vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0], 3)).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
        assert_eq!(d.frames(), 2);
        // [A, B] -> B - A
        let d = differential_echo_profile(&mk(vec![1.0, 4.0, 2.0, 3.0], 2)).unwrap();
        assert_eq!(d.values.iter().copied().collect::<Vec<_>>(), vec![3.0, 1.0]);
        // ramp -> constant
        let d = differential_echo_profile(&mk(vec![0.0, 2.0, 4.0, 1.0, 2.0, 3.0], 3)).unwrap();
        assert_eq!(d.values.iter().copied().collect::<Vec<_>>(), vec![2.0, 2.0, 1.0, 1.0]);
        assert!(differential_echo_profile(&mk(vec![1.0, 2.0], 1)).is_err());
    }

    #[test]
    fn distance_conversions() {
        assert!((shift_to_distance(1, 48_000, 343.0) - 0.003_57).abs() < 1e-5);
        assert_eq!(shift_to_distance(0, 48_000, 343.0), 0.0);
        assert!((shift_to_distance(14, 48_000, 343.0) - 0.05).abs() < 2e-4);
        for s in 0..500 {
            let step =
                shift_to_distance(s + 1, 48_000, 343.0) - shift_to_distance(s, 48_000, 343.0);
            assert!((step * 100.0 - 0.357).abs() < 0.001);
        }
        assert_eq!(distance_to_shift(0.039, 48_000, 343.0), 11);
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = EchoProfile {
            values: Array3::from_shape_fn((2, 3, 4), |(a, b, c)| (a * 12 + b * 4 + c) as f64 * 0.5),
            shift_window: (5, 7),
            frame_period: 0.012,
        };
        let path = dir.path().join("p.bin");
        p.write(&path).unwrap();
        assert_eq!(EchoProfile::read(&path).unwrap(), p);
    }
}
