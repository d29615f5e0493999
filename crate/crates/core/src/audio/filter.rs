use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::error::{Error, Result};

pub const DEFAULT_TAPS: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    /// Passes `[0, cutoff_high]`.
    Lowpass,
    /// Passes `[cutoff_low, cutoff_high]`.
    Bandpass,
    /// Passes `[cutoff_low, rate/2]`; used for chirp bands that reach Nyquist.
    Highpass,
}

/// Linear-phase windowed-sinc FIR description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub cutoff_low: f64,
    pub cutoff_high: f64,
    pub taps: usize,
}

impl FilterSpec {
    pub fn lowpass(cutoff: f64) -> Self {
        Self {
            kind: FilterKind::Lowpass,
            cutoff_low: 0.0,
            cutoff_high: cutoff,
            taps: DEFAULT_TAPS,
        }
    }

    pub fn bandpass(low: f64, high: f64) -> Self {
        Self {
            kind: FilterKind::Bandpass,
            cutoff_low: low,
            cutoff_high: high,
            taps: DEFAULT_TAPS,
        }
    }

    pub fn highpass(cutoff: f64) -> Self {
        Self {
            kind: FilterKind::Highpass,
            cutoff_low: cutoff,
            cutoff_high: f64::INFINITY,
            taps: DEFAULT_TAPS,
        }
    }

    pub fn with_taps(mut self, taps: usize) -> Self {
        self.taps = taps;
        self
    }

    /// Hamming transition width in Hz at `rate`.
    pub fn transition_width(&self, rate: u32) -> f64 {
        3.3 * rate as f64 / self.taps as f64
    }

    pub fn validate(&self, rate: u32) -> Result<()> {
        let nyquist = rate as f64 / 2.0;
        if self.taps == 0 || self.taps % 2 == 0 {
            return Err(Error::InvalidFilter(format!(
                "taps must be odd and positive, got {}",
                self.taps
            )));
        }
        let check_edge = |f: f64, name: &str| {
            if !(f > 0.0 && f < nyquist) {
                Err(Error::InvalidFilter(format!(
                    "{name} {f} Hz outside (0, {nyquist}) Hz"
                )))
            } else {
                Ok(())
            }
        };
        match self.kind {
            FilterKind::Lowpass => check_edge(self.cutoff_high, "cutoff_high"),
            FilterKind::Highpass => check_edge(self.cutoff_low, "cutoff_low"),
            FilterKind::Bandpass => {
                check_edge(self.cutoff_low, "cutoff_low")?;
                check_edge(self.cutoff_high, "cutoff_high")?;
                if self.cutoff_low >= self.cutoff_high {
                    return Err(Error::InvalidFilter(format!(
                        "band edges out of order: {} >= {}",
                        self.cutoff_low, self.cutoff_high
                    )));
                }
                Ok(())
            }
        }
    }
}

fn lowpass_kernel(cutoff: f64, rate: u32, taps: usize) -> Vec<f64> {
    let fc = cutoff / rate as f64;
    let mid = (taps - 1) as f64 / 2.0;
    (0..taps)
        .map(|n| {
            let x = n as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect()
}

fn gain_at(h: &[f64], freq: f64, rate: u32) -> f64 {
    let w = 2.0 * PI * freq / rate as f64;
    let (re, im) = h.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &c)| {
        (re + c * (w * n as f64).cos(), im - c * (w * n as f64).sin())
    });
    (re * re + im * im).sqrt()
}

/// Filter taps for `spec` at `rate`, normalised to unit gain at the centre of
/// the passband.
pub fn design_fir(spec: &FilterSpec, rate: u32) -> Result<Vec<f64>> {
    spec.validate(rate)?;
    let taps = spec.taps;
    let mid = (taps - 1) / 2;
    let nyquist = rate as f64 / 2.0;
    let (mut h, reference) = match spec.kind {
        FilterKind::Lowpass => (lowpass_kernel(spec.cutoff_high, rate, taps), 0.0),
        FilterKind::Bandpass => {
            let hi = lowpass_kernel(spec.cutoff_high, rate, taps);
            let lo = lowpass_kernel(spec.cutoff_low, rate, taps);
            let h = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
            (h, 0.5 * (spec.cutoff_low + spec.cutoff_high))
        }
        FilterKind::Highpass => {
            let mut h: Vec<f64> = lowpass_kernel(spec.cutoff_low, rate, taps)
                .into_iter()
                .map(|c| -c)
                .collect();
            h[mid] += 1.0;
            (h, 0.5 * (spec.cutoff_low + nyquist))
        }
    };
    let g = gain_at(&h, reference, rate);
    if g > 0.0 {
        h.iter_mut().for_each(|c| *c /= g);
    }
    Ok(h)
}

/// Zero-phase FIR filtering of each channel.
///
/// The convolution is evaluated by FFT with edge-replicated padding and the
/// `(taps-1)/2` group delay removed, so the output is aligned with and as
/// long as the input.
pub fn apply_filter(buffer: &AudioBuffer, spec: &FilterSpec) -> Result<AudioBuffer> {
    let h = design_fir(spec, buffer.rate())?;
    let n = buffer.len();
    if n == 0 {
        return Ok(buffer.clone());
    }
    let half = (h.len() - 1) / 2;
    let padded_len = n + 2 * half;
    let conv_len = padded_len + h.len() - 1;
    let fft_len = conv_len.next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut kernel: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); fft_len];
    for (k, &c) in kernel.iter_mut().zip(&h) {
        k.re = c;
    }
    fwd.process(&mut kernel);

    let mut out = Vec::with_capacity(buffer.samples().len());
    let mut work = vec![Complex::new(0.0, 0.0); fft_len];
    for c in 0..buffer.channels() {
        let x = buffer.channel(c);
        work.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
        for i in 0..padded_len {
            let src = i.saturating_sub(half).min(n - 1);
            work[i].re = x[src];
        }
        fwd.process(&mut work);
        for (w, k) in work.iter_mut().zip(&kernel) {
            *w *= k;
        }
        inv.process(&mut work);
        let scale = 1.0 / fft_len as f64;
        // padded index `half + i` holds x[i]; the causal filter delays it by `half`.
        out.extend((0..n).map(|i| work[i + 2 * half].re * scale));
    }
    AudioBuffer::new(out, buffer.rate(), buffer.channels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::signal_power;

    fn sine(freq: f64, n: usize) -> AudioBuffer {
        AudioBuffer::mono(
            (0..n)
                .map(|i| (2.0 * PI * freq * i as f64 / 48_000.0).sin())
                .collect(),
            48_000,
        )
        .unwrap()
    }

    #[test]
    fn stopband_tone_is_removed() {
        let x = sine(20_000.0, 9600);
        let y = apply_filter(&x, &FilterSpec::lowpass(10_000.0)).unwrap();
        let ratio = (signal_power(&y).unwrap() / signal_power(&x).unwrap()).sqrt();
        assert!(ratio < 0.01, "rms ratio {ratio}");
    }

    #[test]
    fn passband_tone_is_kept() {
        let x = sine(1000.0, 9600);
        let y = apply_filter(&x, &FilterSpec::lowpass(10_000.0)).unwrap();
        let ratio = (signal_power(&y).unwrap() / signal_power(&x).unwrap()).sqrt();
        assert!((ratio - 1.0).abs() < 0.02, "rms ratio {ratio}");
        assert_eq!(y.len(), x.len());
    }

    #[test]
    fn dc_passes_unchanged() {
        let x = AudioBuffer::mono(vec![0.3; 2000], 48_000).unwrap();
        let y = apply_filter(&x, &FilterSpec::lowpass(10_000.0)).unwrap();
        for v in y.samples() {
            assert!((v - 0.3).abs() < 1e-3);
        }
    }

    #[test]
    fn output_is_not_delayed() {
        // A slow passband bump must peak at the same sample after filtering.
        let n = 4000;
        let x: Vec<f64> = (0..n)
            .map(|i| (-((i as f64 - 2000.0) / 60.0).powi(2)).exp())
            .collect();
        let y = apply_filter(
            &AudioBuffer::mono(x, 48_000).unwrap(),
            &FilterSpec::lowpass(10_000.0),
        )
        .unwrap();
        let peak = y
            .samples()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 2000);
    }

    #[test]
    fn attenuation_one_transition_beyond_cutoff() {
        for spec in [
            FilterSpec::lowpass(10_000.0),
            FilterSpec::bandpass(16_500.0, 20_500.0),
        ] {
            let h = design_fir(&spec, 48_000).unwrap();
            let tw = spec.transition_width(48_000);
            let stop = spec.cutoff_high + tw;
            let db = 20.0 * gain_at(&h, stop, 48_000).log10();
            assert!(db <= -40.0, "{spec:?}: {db} dB at {stop} Hz");
        }
        let hp = FilterSpec::highpass(20_000.0);
        let h = design_fir(&hp, 48_000).unwrap();
        let db = 20.0 * gain_at(&h, 20_000.0 - hp.transition_width(48_000), 48_000).log10();
        assert!(db <= -40.0, "highpass {db} dB");
    }

    #[test]
    fn invalid_specs() {
        assert!(FilterSpec::lowpass(24_000.0).validate(48_000).is_err());
        assert!(FilterSpec::bandpass(5000.0, 4000.0).validate(48_000).is_err());
        assert!(FilterSpec::lowpass(1000.0)
            .with_taps(254)
            .validate(48_000)
            .is_err());
        let x = sine(100.0, 100);
        assert!(matches!(
            apply_filter(&x, &FilterSpec::lowpass(30_000.0)),
            Err(Error::InvalidFilter(_))
        ));
    }

    #[test]
    fn linearity() {
        let a = sine(300.0, 3000);
        let b = sine(12_345.0, 3000);
        let spec = FilterSpec::bandpass(200.0, 11_000.0);
        let combo = a.scaled(0.7).add(&b.scaled(-1.3)).unwrap();
        let lhs = apply_filter(&combo, &spec).unwrap();
        let rhs = apply_filter(&a, &spec)
            .unwrap()
            .scaled(0.7)
            .add(&apply_filter(&b, &spec).unwrap().scaled(-1.3))
            .unwrap();
        let scale = lhs.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (l, r) in lhs.samples().iter().zip(rhs.samples()) {
            assert!((l - r).abs() <= 1e-6 * scale);
        }
    }
}
