//! Band splitting and per-modality feature extraction.
//!
//! Vocal: 10 kHz low-pass, 7.6 kHz guard low-pass, decimation to 16 kHz,
//! MFCC. Echoic: per-band isolation filter, echo profile, differential
//! profile, crop to the configured lag window, division by template energy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{apply_filter, AudioBuffer, FilterSpec};
use crate::container::{read_bundle, write_bundle, TensorEntry};
use crate::error::{Error, Result};
use crate::fmcw::{compute_echo_profile, differential_echo_profile, generate_chirp, ChirpSpec, EchoProfile};
use crate::mfcc::{mfcc_extract, MfccConfig};
use crate::sim::Split;

pub const VOCAL_CUTOFF_HZ: f64 = 10_000.0;
pub const DECIMATION_GUARD_HZ: f64 = 7_600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Vocal,
    Echoic,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Vocal => "vocal",
            Modality::Echoic => "echoic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoicConfig {
    pub shift_window: (usize, usize),
}

impl Default for EchoicConfig {
    fn default() -> Self {
        Self { shift_window: (0, 31) }
    }
}

/// The vocal component of a recording: first microphone, low-passed.
pub fn vocal_band(audio: &AudioBuffer) -> Result<AudioBuffer> {
    apply_filter(&audio.channel_buffer(0), &FilterSpec::lowpass(VOCAL_CUTOFF_HZ))
}

/// Everything above the vocal band, all microphones.
pub fn echo_band(audio: &AudioBuffer) -> Result<AudioBuffer> {
    let low = apply_filter(audio, &FilterSpec::lowpass(VOCAL_CUTOFF_HZ))?;
    audio.add(&low.scaled(-1.0))
}

/// Decimates an already band-limited vocal signal to `config.decimate_to`.
pub fn decimate_vocal(vocal: &AudioBuffer, config: &MfccConfig) -> Result<AudioBuffer> {
    let rate = vocal.rate();
    if rate % config.decimate_to != 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot decimate {rate} Hz to {} Hz by an integer factor",
            config.decimate_to
        )));
    }
    let factor = (rate / config.decimate_to) as usize;
    if factor == 1 {
        return Ok(vocal.clone());
    }
    let guarded = apply_filter(vocal, &FilterSpec::lowpass(DECIMATION_GUARD_HZ))?;
    guarded.decimate(factor)
}

/// MFCC matrix `(n_coeffs, frames)` of a full-band recording.
pub fn vocal_features(audio: &AudioBuffer, config: &MfccConfig) -> Result<ndarray::Array2<f64>> {
    let vocal = vocal_band(audio)?;
    Ok(mfcc_extract(&decimate_vocal(&vocal, config)?, config)?.values)
}

/// Differential echo profile `(mics × bands, shifts, frames − 2)` scaled so
/// that a unit-gain reflector peaks at 1. The first chirp frame is dropped.
pub fn echoic_features(audio: &AudioBuffer, bands: &[ChirpSpec], config: &EchoicConfig) -> Result<EchoProfile> {
    if bands.is_empty() {
        return Err(Error::InvalidArgument("no chirp bands configured".into()));
    }
    let mut per_channel = Vec::with_capacity(audio.channels() * bands.len());
    for mic in 0..audio.channels() {
        let x = audio.channel_buffer(mic);
        for band in bands {
            let isolated = apply_filter(&x, &band.isolation_filter())?;
            let mut profile = compute_echo_profile(&isolated, band, config.shift_window)?;
            let energy: f64 = generate_chirp(band)?.samples().iter().map(|v| v * v).sum();
            if energy > 0.0 {
                profile.values.mapv_inplace(|v| v / energy);
            }
            per_channel.push(profile);
        }
    }
    let mut stacked = EchoProfile::stack(&per_channel)?;
    if stacked.frames() > 2 {
        // The first frame carries the isolation filter's start-up transient.
        stacked.values = stacked.values.slice(ndarray::s![.., .., 1..]).to_owned();
    }
    differential_echo_profile(&stacked)
}

/// Feature tensor of one modality, flattened `(channels, height, width)`.
pub fn features_for(
    modality: Modality,
    audio: &AudioBuffer,
    bands: &[ChirpSpec],
    mfcc: &MfccConfig,
    echoic: &EchoicConfig,
) -> Result<(Vec<f64>, [usize; 3])> {
    match modality {
        Modality::Vocal => {
            let m = vocal_features(audio, mfcc)?;
            let shape = [1, m.nrows(), m.ncols()];
            Ok((m.into_iter().collect(), shape))
        }
        Modality::Echoic => {
            let p = echoic_features(audio, bands, echoic)?;
            let s = p.values.shape();
            let shape = [s[0], s[1], s[2]];
            Ok((p.values.into_iter().collect(), shape))
        }
    }
}

/// Precomputed features of one modality for a set of dataset records.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    pub modality: Modality,
    pub shape: [usize; 3],
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    /// Row-major `(records, channels, height, width)`.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BankMeta {
    modality: Modality,
    shape: [usize; 3],
    indices: Vec<usize>,
    labels: Vec<usize>,
    splits: Vec<Split>,
}

impl FeatureBank {
    pub fn new(modality: Modality, shape: [usize; 3]) -> Self {
        Self {
            modality,
            shape,
            indices: Vec::new(),
            labels: Vec::new(),
            splits: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn feature_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, index: usize, label: usize, split: Split, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values for {:?}", self.feature_len(), self.shape),
                got: format!("{} values", features.len()),
            });
        }
        self.indices.push(index);
        self.labels.push(label);
        self.splits.push(split);
        self.data.extend_from_slice(features);
        Ok(())
    }

    pub fn features(&self, i: usize) -> &[f64] {
        let n = self.feature_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Row positions belonging to `split`.
    pub fn rows(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = BankMeta {
            modality: self.modality,
            shape: self.shape,
            indices: self.indices.clone(),
            labels: self.labels.clone(),
            splits: self.splits.clone(),
        };
        let mut dims = vec![self.len()];
        dims.extend(self.shape);
        write_bundle(
            path,
            "feature-bank",
            &meta,
            &[(
                TensorEntry {
                    name: "features".into(),
                    shape: dims,
                },
                &self.data,
            )],
        )
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, mut tensors): (BankMeta, _) = read_bundle(path, "feature-bank")?;
        let (_, data) = tensors
            .pop()
            .ok_or_else(|| Error::Container("feature bank without data".into()))?;
        Ok(Self {
            modality: meta.modality,
            shape: meta.shape,
            indices: meta.indices,
            labels: meta.labels,
            splits: meta.splits,
            data,
        })
    }
}
