//! Mel-frequency cepstral coefficients for the vocal modality.
//!
//! Chain: pre-emphasis, Hamming-windowed frames, power spectrum, triangular
//! HTK-mel filterbank, natural log (floored), orthonormal DCT-II.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, Axis};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::container::{read_tensor, write_tensor, TensorHeader};
use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfccConfig {
    pub pre_emphasis: f64,
    /// Seconds.
    pub frame_len: f64,
    /// Seconds.
    pub hop: f64,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub mel_low: f64,
    pub mel_high: f64,
    /// Rate the vocal band is decimated to before feature extraction.
    pub decimate_to: u32,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            pre_emphasis: 0.97,
            frame_len: 0.025,
            hop: 0.010,
            n_mels: 40,
            n_coeffs: 13,
            mel_low: 20.0,
            mel_high: 5000.0,
            decimate_to: 16_000,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return bad(format!("pre_emphasis {} not in [0, 1)", self.pre_emphasis));
        }
        if !(self.hop > 0.0 && self.hop <= self.frame_len) {
            return bad(format!("need 0 < hop <= frame_len, got {} / {}", self.hop, self.frame_len));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return bad(format!("need 0 < n_coeffs <= n_mels, got {}/{}", self.n_coeffs, self.n_mels));
        }
        if !(self.mel_low >= 0.0 && self.mel_low < self.mel_high) {
            return bad(format!("mel range {}..{} is empty", self.mel_low, self.mel_high));
        }
        if self.mel_high > self.decimate_to as f64 / 2.0 {
            return bad(format!(
                "mel_high {} above Nyquist of {} Hz",
                self.mel_high, self.decimate_to
            ));
        }
        Ok(())
    }

    pub fn frame_samples(&self, rate: u32) -> usize {
        (self.frame_len * rate as f64).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop * rate as f64).round() as usize
    }

    /// Frames produced for an `n`-sample input at `rate`.
    pub fn frame_count(&self, n: usize, rate: u32) -> usize {
        let fl = self.frame_samples(rate);
        if n < fl {
            0
        } else {
            1 + (n - fl) / self.hop_samples(rate)
        }
    }

    pub fn fft_size(&self, rate: u32) -> usize {
        self.frame_samples(rate).next_power_of_two()
    }
}

/// A `(row, frame)` matrix of per-frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    /// Seconds between frame starts.
    pub hop: f64,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.len_of(Axis(0))
    }

    pub fn frames(&self) -> usize {
        self.values.len_of(Axis(1))
    }

    /// Start time of each frame in seconds.
    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.frames()).map(|f| f as f64 * self.hop).collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = TensorHeader {
            dims: self.values.shape().to_vec(),
            window: (0, self.rows() as i64 - 1),
            frame_period: self.hop,
        };
        write_tensor(path, &header, self.values.iter().copied())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (header, values) = read_tensor(path)?;
        if header.dims.len() != 2 {
            return Err(Error::Container(format!(
                "not a feature matrix: dims {:?}",
                header.dims
            )));
        }
        let values = Array2::from_shape_vec((header.dims[0], header.dims[1]), values)
            .map_err(|e| Error::Container(e.to_string()))?;
        Ok(Self {
            values,
            hop: header.frame_period,
        })
    }
}

/// `y[n] = x[n] - coeff * x[n-1]`, `y[0] = x[0]`, per channel.
pub fn preemphasize(buffer: &AudioBuffer, coeff: f64) -> AudioBuffer {
    let mut out = buffer.clone();
    for c in 0..buffer.channels() {
        let x = buffer.channel(c);
        let y = out.channel_mut(c);
        for n in 1..x.len() {
            y[n] = x[n] - coeff * x[n - 1];
        }
    }
    out
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, `(n_mels, fft_size/2 + 1)`.
pub fn mel_filterbank(config: &MfccConfig, rate: u32) -> Array2<f64> {
    let n_fft = config.fft_size(rate);
    let n_bins = n_fft / 2 + 1;
    let lo = hz_to_mel(config.mel_low);
    let hi = hz_to_mel(config.mel_high);
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();
    Array2::from_shape_fn((config.n_mels, n_bins), |(m, k)| {
        let f = k as f64 * rate as f64 / n_fft as f64;
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        if f > left && f <= centre {
            (f - left) / (centre - left)
        } else if f > centre && f < right {
            (right - f) / (right - centre)
        } else {
            0.0
        }
    })
}

/// Centre frequency of each mel band in Hz.
pub fn mel_centres(config: &MfccConfig) -> Vec<f64> {
    let lo = hz_to_mel(config.mel_low);
    let hi = hz_to_mel(config.mel_high);
    (1..=config.n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect()
}

/// Orthonormal DCT-II matrix, `(n, n)`; row `k` is basis function `k`.
pub fn dct_matrix(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// Log mel energies `(n_mels, frames)` of a mono buffer.
pub fn log_mel_spectrogram(buffer: &AudioBuffer, config: &MfccConfig) -> Result<FeatureMatrix> {
    config.validate()?;
    if buffer.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "MFCC input must be mono, got {} channels",
            buffer.channels()
        )));
    }
    let rate = buffer.rate();
    if config.mel_high > rate as f64 / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "mel_high {} Hz above Nyquist at {rate} Hz",
            config.mel_high
        )));
    }
    let x = buffer.channel(0);
    let frame_len = config.frame_samples(rate);
    let hop = config.hop_samples(rate);
    if frame_len == 0 || hop == 0 {
        return Err(Error::InvalidArgument("frame or hop rounds to zero samples".into()));
    }
    if x.len() < frame_len {
        return Err(Error::InvalidArgument(format!(
            "frame of {frame_len} samples longer than signal of {}",
            x.len()
        )));
    }
    let frames = config.frame_count(x.len(), rate);
    let n_fft = config.fft_size(rate);
    let bank = mel_filterbank(config, rate);
    let window: Vec<f64> = (0..frame_len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
        .collect();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut power = vec![0.0; n_fft / 2 + 1];
    let mut values = Array2::zeros((config.n_mels, frames));
    for f in 0..frames {
        let start = f * hop;
        buf.iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
        for (i, (b, w)) in buf.iter_mut().zip(&window).enumerate() {
            b.re = x[start + i] * w;
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p = b.norm_sqr();
        }
        for (m, row) in bank.outer_iter().enumerate() {
            let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            values[[m, f]] = e.max(LOG_FLOOR).ln();
        }
    }
    Ok(FeatureMatrix {
        values,
        hop: hop as f64 / rate as f64,
    })
}

/// Applies the orthonormal DCT-II along the mel axis and keeps the first
/// `n_coeffs` rows.
pub fn cepstra(log_mel: &FeatureMatrix, n_coeffs: usize) -> FeatureMatrix {
    let dct = dct_matrix(log_mel.rows());
    let head = dct.slice(ndarray::s![..n_coeffs, ..]);
    FeatureMatrix {
        values: head.dot(&log_mel.values),
        hop: log_mel.hop,
    }
}

/// Full MFCC chain on a mono buffer already at `config.decimate_to`.
pub fn mfcc_extract(buffer: &AudioBuffer, config: &MfccConfig) -> Result<FeatureMatrix> {
    let emphasized = preemphasize(buffer, config.pre_emphasis);
    let log_mel = log_mel_spectrogram(&emphasized, config)?;
    Ok(cepstra(&log_mel, config.n_coeffs))
}
