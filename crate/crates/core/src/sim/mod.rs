//! Synthetic microphone recordings with an FMCW echo channel and a voice.
//!
//! A recording is the sum of three parts:
//! - the chirp streams reflected by a static face and by a moving mouth,
//! - a harmonic voice below 5 kHz whose timing matches the mouth movement,
//! - a white ambient floor.

mod dataset;
mod noise;
mod perturb;
mod vocab;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{mix_at_snr, AudioBuffer, PROJECT_RATE};
use crate::error::{Error, Result};
use crate::fmcw::{generate_chirp, ChirpSpec, SPEED_OF_SOUND};
use crate::seed::{rng_for, stream};

pub(crate) use dataset::parallel_map;
pub use dataset::{
    generate_dataset, plan_dataset, read_manifest, render_entry, write_manifest, DatasetSpec,
    ManifestEntry, SplitFractions, MANIFEST_FILE,
};
pub use noise::{generate_noise, NoiseKind};
pub use perturb::{
    add_vocal_band_noise, median_power, other_talker_voice, replace_vocal_band, vocal_band_power,
};
pub use vocab::{
    SyntheticVocabulary, Trajectory, VocalSignature, WordModel, CLASS_NAMES, MAX_OFFSET,
    N_CLASSES, N_COMMANDS, SILENCE, UNKNOWN,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    /// Mouth-to-microphone distance at rest, metres.
    pub baseline_distance: f64,
    pub mic_count: usize,
    /// Extra round-trip path per microphone index, metres.
    pub mic_spacing: f64,
    pub bands: Vec<ChirpSpec>,
    /// Mouth reflector gain.
    pub reflection_gain: f64,
    /// Static face reflector gain.
    pub face_gain: f64,
    pub speed_of_sound: f64,
    /// Ambient floor power in dB relative to full scale.
    pub ambient_db: f64,
    /// Seconds.
    pub utterance_duration: f64,
    /// Nominal articulation start, seconds.
    pub word_onset: f64,
    /// Maximum onset jitter, seconds.
    pub timing_jitter: f64,
    pub gain_jitter_db: f64,
    /// Peak voice amplitude.
    pub vocal_level: f64,
    pub rng_seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            baseline_distance: 0.039,
            mic_count: 1,
            mic_spacing: 0.009,
            bands: vec![
                ChirpSpec::low_band().with_amplitude(0.25),
                ChirpSpec::high_band().with_amplitude(0.25),
            ],
            reflection_gain: 0.2,
            face_gain: 0.6,
            speed_of_sound: SPEED_OF_SOUND,
            ambient_db: -60.0,
            utterance_duration: 1.0,
            word_onset: 0.3,
            timing_jitter: 0.05,
            gain_jitter_db: 1.0,
            vocal_level: 0.3,
            rng_seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.baseline_distance > 0.0) {
            return bad(format!("baseline_distance {} must be > 0", self.baseline_distance));
        }
        if self.bands.is_empty() {
            return bad("scene needs at least one chirp band".into());
        }
        if self.mic_count == 0 {
            return bad("scene needs at least one microphone".into());
        }
        for b in &self.bands {
            b.validate()?;
            if b.rate != self.bands[0].rate || b.len() != self.bands[0].len() {
                return bad("all bands must share rate and period".into());
            }
        }
        if !(self.speed_of_sound > 0.0) {
            return bad("speed_of_sound must be > 0".into());
        }
        if !(self.utterance_duration > 0.0) {
            return bad("utterance_duration must be > 0".into());
        }
        Ok(())
    }

    pub fn rate(&self) -> u32 {
        self.bands.first().map_or(PROJECT_RATE, |b| b.rate)
    }

    pub fn chirp_len(&self) -> usize {
        self.bands[0].len()
    }

    pub fn utterance_samples(&self) -> usize {
        (self.utterance_duration * self.rate() as f64).round() as usize
    }

    /// Round-trip lag in samples for a reflector `distance` metres away, heard
    /// by microphone `mic`.
    pub fn delay_samples(&self, distance: f64, mic: usize) -> usize {
        let path = 2.0 * distance + mic as f64 * self.mic_spacing;
        (path * self.rate() as f64 / self.speed_of_sound).round() as usize
    }

    /// Echo channels after band splitting: mics × bands.
    pub fn echo_channels(&self) -> usize {
        self.mic_count * self.bands.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Tune,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtteranceMode {
    VocalEchoic,
    Silent,
}

/// Generation parameters recorded alongside each utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub mode: UtteranceMode,
    pub onset: f64,
    pub duration: f64,
    pub mouth_gain: f64,
    pub vocal_gain: f64,
}

#[derive(Debug, Clone)]
pub struct UtteranceRecord {
    pub audio: AudioBuffer,
    pub label: usize,
    pub split: Split,
    pub provenance: Provenance,
}

fn roll_into(out: &mut [f64], chirp: &[f64], delay: usize, gain: f64) {
    let l = chirp.len();
    let d = delay % l;
    for (n, o) in out.iter_mut().enumerate() {
        *o += gain * chirp[(n + l - d) % l];
    }
}

/// Samples over which a change of mouth lag is blended in, so that the
/// moving reflector does not produce broadband clicks at frame boundaries.
const LAG_CROSSFADE: usize = 48;

fn crossfade(frame: &mut [f64], chirp: &[f64], old: usize, new: usize, gain: f64) {
    let l = chirp.len();
    let w = LAG_CROSSFADE.min(l);
    for (n, o) in frame.iter_mut().take(w).enumerate() {
        let a = 0.5 - 0.5 * (PI * (n as f64 + 0.5) / w as f64).cos();
        let was = chirp[(n + l - old % l) % l];
        let now = chirp[(n + l - new % l) % l];
        *o += gain * (1.0 - a) * (was - now);
    }
}

fn render_echo(offsets: &[f64], scene: &SceneSpec, mouth_gain: f64) -> Result<AudioBuffer> {
    scene.validate()?;
    let l = scene.chirp_len();
    let chirps = scene
        .bands
        .iter()
        .map(|b| generate_chirp(b).map(AudioBuffer::into_samples))
        .collect::<Result<Vec<_>>>()?;
    let mut channels = vec![vec![0.0; offsets.len() * l]; scene.mic_count];
    for (mic, out) in channels.iter_mut().enumerate() {
        let face = scene.delay_samples(scene.baseline_distance, mic);
        let mut previous = face;
        for (f, &offset) in offsets.iter().enumerate() {
            let distance = scene.baseline_distance + offset;
            if !(distance > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "mouth offset {offset} m puts the reflector at {distance} m"
                )));
            }
            let mouth = scene.delay_samples(distance, mic);
            let frame = &mut out[f * l..(f + 1) * l];
            for chirp in &chirps {
                roll_into(frame, chirp, face, scene.face_gain);
                if mouth_gain != 0.0 {
                    roll_into(frame, chirp, mouth, mouth_gain);
                    if previous != mouth && f > 0 {
                        crossfade(frame, chirp, previous, mouth, mouth_gain);
                    }
                }
            }
            previous = mouth;
        }
    }
    AudioBuffer::from_channels(channels, scene.rate())
}

/// Received chirp streams for a mouth displacement series (metres, one value
/// per chirp frame). One channel per microphone.
pub fn simulate_echo_channel(offsets: &[f64], scene: &SceneSpec) -> Result<AudioBuffer> {
    render_echo(offsets, scene, scene.reflection_gain)
}

/// Resonance gain of the three formants at frequency `f`.
fn formant_gain(f: f64, formants: &[f64; 3], bandwidths: &[f64; 3]) -> f64 {
    formants
        .iter()
        .zip(bandwidths)
        .map(|(&fc, &bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
        .sum()
}

pub const N_HARMONICS: usize = 12;
const ENVELOPE_RAMP: f64 = 0.010;

/// Twelve-harmonic voice with moving formants, peak-normalised to
/// `signature.amplitude`, with 10 ms raised-cosine attack and release.
pub fn synthesize_vocal(signature: &VocalSignature, duration: f64, rate: u32) -> Result<AudioBuffer> {
    signature.validate()?;
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration {duration} must be > 0")));
    }
    let n = (duration * rate as f64).round() as usize;
    let fs = rate as f64;
    let ramp = ((ENVELOPE_RAMP * fs) as usize).min(n / 2).max(1);
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let u = i as f64 / n.max(1) as f64;
        let f0 = signature.f0_start + (signature.f0_end - signature.f0_start) * u;
        let formants: [f64; 3] = std::array::from_fn(|k| {
            signature.formants_start[k] + (signature.formants_end[k] - signature.formants_start[k]) * u
        });
        let mut v = 0.0;
        for h in 1..=N_HARMONICS {
            let fh = h as f64 * f0;
            let g = formant_gain(fh, &formants, &signature.bandwidths) / (h as f64).sqrt();
            v += g * (h as f64 * phase).sin();
        }
        let env = if i < ramp {
            0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
        } else if i >= n - ramp {
            0.5 - 0.5 * (PI * (n - 1 - i) as f64 / ramp as f64).cos()
        } else {
            1.0
        };
        out.push(v * env);
        phase += 2.0 * PI * f0 / fs;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let k = signature.amplitude / peak;
        out.iter_mut().for_each(|v| *v *= k);
    }
    AudioBuffer::mono(out, rate)
}

/// White ambient floor at `scene.ambient_db`, one independent channel per mic.
pub fn ambient_floor<R: Rng + ?Sized>(scene: &SceneSpec, len: usize, rng: &mut R) -> Result<AudioBuffer> {
    let sigma = 10f64.powf(scene.ambient_db / 20.0);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let samples = (0..len * scene.mic_count).map(|_| normal.sample(rng)).collect();
    AudioBuffer::new(samples, scene.rate(), scene.mic_count)
}

/// Per-frame mouth displacement for a word articulated from `onset` seconds.
pub fn frame_offsets(word: Option<&WordModel>, onset: f64, frames: usize, period: f64) -> Vec<f64> {
    (0..frames)
        .map(|f| match word {
            Some(w) => {
                let t = (f as f64 + 0.5) * period;
                w.trajectory.at((t - onset) / w.duration)
            }
            None => 0.0,
        })
        .collect()
}

/// Renders one utterance of class `class_id` from the record seed `seed`.
///
/// The word repetition (or a fresh unknown word) and the onset jitter come
/// from one stream; gain jitter and the ambient floor come from their own
/// streams keyed by the same seed, so records of different classes or modes
/// rendered from one seed share gains and floor.
pub fn synthesize_utterance(
    vocab: &SyntheticVocabulary,
    class_id: usize,
    scene: &SceneSpec,
    mode: UtteranceMode,
    seed: u64,
) -> Result<UtteranceRecord> {
    scene.validate()?;
    if class_id >= vocab.n_classes() {
        return Err(Error::UnknownLabel(format!("class id {class_id}")));
    }
    let mut rng = rng_for(seed, stream::RECORD, 0);
    let word = if vocab.is_command(class_id) {
        Some(vocab.commands[class_id].repetition(&mut rng))
    } else if class_id == vocab.unknown_id() {
        Some(vocab.sample_unknown(&mut rng))
    } else {
        None
    };
    let jitter = if scene.timing_jitter > 0.0 {
        rng.random_range(-scene.timing_jitter..=scene.timing_jitter)
    } else {
        0.0
    };
    let onset = scene.word_onset + jitter;
    let mut gain_rng = rng_for(seed, stream::GAIN, 0);
    let mut db = || {
        if scene.gain_jitter_db > 0.0 {
            gain_rng.random_range(-scene.gain_jitter_db..=scene.gain_jitter_db)
        } else {
            0.0
        }
    };
    let mouth_gain = scene.reflection_gain * 10f64.powf(db() / 20.0);
    let vocal_gain = scene.vocal_level * 10f64.powf(db() / 20.0);

    let n = scene.utterance_samples();
    let l = scene.chirp_len();
    let frames = n.div_ceil(l);
    let offsets = frame_offsets(word.as_ref(), onset, frames, scene.bands[0].period);
    let echo = render_echo(&offsets, scene, mouth_gain)?;
    let mut channels: Vec<Vec<f64>> = (0..scene.mic_count)
        .map(|c| echo.channel(c)[..n].to_vec())
        .collect();

    if let (Some(w), UtteranceMode::VocalEchoic) = (&word, mode) {
        let voice = synthesize_vocal(&w.signature, w.duration, scene.rate())?;
        let start = (onset * scene.rate() as f64).round().max(0.0) as usize;
        for ch in channels.iter_mut() {
            for (i, v) in voice.samples().iter().enumerate() {
                if let Some(s) = ch.get_mut(start + i) {
                    *s += vocal_gain * v;
                }
            }
        }
    }

    let mut floor_rng = rng_for(seed, stream::FLOOR, 0);
    let floor = ambient_floor(scene, n, &mut floor_rng)?;
    for (c, ch) in channels.iter_mut().enumerate() {
        for (s, f) in ch.iter_mut().zip(floor.channel(c)) {
            *s += f;
        }
    }

    Ok(UtteranceRecord {
        audio: AudioBuffer::from_channels(channels, scene.rate())?,
        label: class_id,
        split: Split::Train,
        provenance: Provenance {
            seed,
            mode,
            onset,
            duration: word.as_ref().map_or(0.0, |w| w.duration),
            mouth_gain,
            vocal_gain,
        },
    })
}

/// A second sound source superimposed on a recording.
#[derive(Debug, Clone)]
pub enum Interferer {
    /// Another voice added at a fixed gain.
    Vocal { audio: AudioBuffer, gain: f64 },
    /// Environmental noise mixed at an SNR against the whole recording.
    Noise { audio: AudioBuffer, snr_db: f64 },
    /// A foreign FMCW emitter; `distances` are one-way metres per frame of
    /// its own chirp period.
    Ultrasound {
        spec: ChirpSpec,
        distances: Vec<f64>,
        gain: f64,
    },
}

pub fn add_interferer<R: Rng + ?Sized>(
    record: &UtteranceRecord,
    interferer: &Interferer,
    rng: &mut R,
) -> Result<UtteranceRecord> {
    let audio = &record.audio;
    let mixed = match interferer {
        Interferer::Vocal { audio: voice, gain } => {
            if voice.rate() != audio.rate() {
                return Err(Error::InvalidArgument("interferer rate mismatch".into()));
            }
            let mut out = audio.clone();
            if *gain != 0.0 {
                for c in 0..out.channels() {
                    let src = voice.channel(if voice.channels() == 1 { 0 } else { c });
                    for (s, v) in out.channel_mut(c).iter_mut().zip(src) {
                        *s += gain * v;
                    }
                }
            }
            out
        }
        Interferer::Noise { audio: noise, snr_db } => {
            mix_at_snr(audio, noise, *snr_db, rng)?.mixture
        }
        Interferer::Ultrasound {
            spec,
            distances,
            gain,
        } => {
            if spec.rate != audio.rate() {
                return Err(Error::InvalidArgument("interferer rate mismatch".into()));
            }
            let chirp = generate_chirp(spec)?.into_samples();
            let l = chirp.len();
            let n = audio.len();
            let start = rng.random_range(0..l);
            let mut stream = vec![0.0; n + l];
            for (f, frame) in stream.chunks_mut(l).enumerate() {
                let d = distances.get(f).or(distances.last()).copied().unwrap_or(0.0);
                let delay = (d * spec.rate as f64 / SPEED_OF_SOUND).round() as usize;
                let mut buf = vec![0.0; l];
                roll_into(&mut buf, &chirp, delay, *gain);
                frame.copy_from_slice(&buf[..frame.len()]);
            }
            let mut out = audio.clone();
            for c in 0..out.channels() {
                for (s, v) in out.channel_mut(c).iter_mut().zip(&stream[start..]) {
                    *s += v;
                }
            }
            out
        }
    };
    Ok(UtteranceRecord {
        audio: mixed,
        ..record.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{apply_filter, band_energy_fraction, signal_power, FilterSpec};

    use crate::fmcw::{compute_echo_profile, distance_to_shift};
    use rustfft::{num_complex::Complex, FftPlanner};

    fn one_band() -> SceneSpec {
        SceneSpec {
            bands: vec![ChirpSpec::low_band().with_amplitude(0.25)],
            ..SceneSpec::default()
        }
    }

    fn argmaxes(audio: &AudioBuffer, scene: &SceneSpec) -> Vec<usize> {
        let p = compute_echo_profile(audio, &scene.bands[0], (0, 60)).unwrap();
        (0..p.frames()).map(|f| p.argmax_shift(0, f)).collect()
    }

    #[test]
    fn static_scene_peaks_at_baseline_lag() {
        let scene = one_band();
        let echo = simulate_echo_channel(&[0.0; 10], &scene).unwrap();
        let want = distance_to_shift(0.039, 48_000, 343.0) as usize;
        assert_eq!(want, 11);
        assert!(argmaxes(&echo, &scene).iter().all(|&s| s == want));
    }

    #[test]
    fn mouth_step_moves_its_peak_by_one_bin() {
        let scene = SceneSpec {
            face_gain: 0.0,
            ..one_band()
        };
        let mut offsets = vec![0.0; 5];
        offsets.extend([0.00357; 5]);
        let echo = simulate_echo_channel(&offsets, &scene).unwrap();
        let a = argmaxes(&echo, &scene);
        assert!(a[..5].iter().all(|&s| s == 11));
        assert!(a[5..].iter().all(|&s| s == 12));
    }

    #[test]
    fn zero_reflection_leaves_static_face() {
        let scene = SceneSpec {
            reflection_gain: 0.0,
            ..one_band()
        };
        let offsets: Vec<f64> = (0..8).map(|f| 0.002 * f as f64).collect();
        let echo = simulate_echo_channel(&offsets, &scene).unwrap();
        let still = simulate_echo_channel(&[0.0; 8], &scene).unwrap();
        assert_eq!(echo, still);
        assert!(simulate_echo_channel(&[-0.05], &scene).is_err());
    }

    #[test]
    fn constant_pitch_has_harmonic_peaks() {
        let sig = VocalSignature {
            f0_start: 150.0,
            f0_end: 150.0,
            formants_start: [500.0, 1500.0, 2500.0],
            formants_end: [500.0, 1500.0, 2500.0],
            bandwidths: [90.0, 110.0, 150.0],
            amplitude: 0.5,
        };
        let v = synthesize_vocal(&sig, 1.0, 48_000).unwrap();
        let mut spec: Vec<Complex<f64>> = v.samples().iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(spec.len()).process(&mut spec);
        let mag: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
        // 1 Hz bins: each harmonic is a local maximum within ±40 Hz.
        for k in 1..=12 {
            let f = 150 * k;
            let local = (f - 40..=f + 40).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
            assert_eq!(local, f, "harmonic {k}");
        }
        assert!(band_energy_fraction(&v, 10_000.0, 24_001.0) < 1e-3);
        let peak = v.samples().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
    }

    #[test]
    fn silent_signature_is_silence() {
        let sig = VocalSignature {
            f0_start: 120.0,
            f0_end: 120.0,
            formants_start: [500.0, 1500.0, 2500.0],
            formants_end: [500.0, 1500.0, 2500.0],
            bandwidths: [90.0, 110.0, 150.0],
            amplitude: 0.0,
        };
        let v = synthesize_vocal(&sig, 0.2, 48_000).unwrap();
        assert!(v.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn utterances_are_deterministic_and_band_isolated() {
        let vocab = SyntheticVocabulary::reference(3);
        let scene = SceneSpec::default();
        let a = synthesize_utterance(&vocab, 4, &scene, UtteranceMode::VocalEchoic, 99).unwrap();
        let b = synthesize_utterance(&vocab, 4, &scene, UtteranceMode::VocalEchoic, 99).unwrap();
        assert_eq!(a.audio, b.audio);
        assert_eq!(a.audio.len(), 48_000);

        let silent = synthesize_utterance(&vocab, 4, &scene, UtteranceMode::Silent, 99).unwrap();
        let voice = a.audio.add(&silent.audio.scaled(-1.0)).unwrap();
        assert!(band_energy_fraction(&voice, 17_000.0, 24_001.0) < 0.005);
        let echo = simulate_echo_channel(&[0.0; 84], &scene).unwrap();
        assert!(band_energy_fraction(&echo, 0.0, 10_000.0) < 0.005);
    }

    fn vocal_band_energy(x: &AudioBuffer) -> f64 {
        band_energy_fraction(x, 0.0, 10_000.0) * signal_power(x).unwrap()
    }

    #[test]
    fn silent_mode_matches_silence_in_vocal_band() {
        let vocab = SyntheticVocabulary::reference(3);
        let scene = SceneSpec::default();
        let silence = synthesize_utterance(&vocab, SILENCE, &scene, UtteranceMode::VocalEchoic, 5).unwrap();
        let base = vocal_band_energy(&silence.audio);
        for class in [0, 3, 7, UNKNOWN] {
            let s = synthesize_utterance(&vocab, class, &scene, UtteranceMode::Silent, 5).unwrap();
            let p = vocal_band_energy(&s.audio);
            // The echo's own leakage below 10 kHz (about -43 dB) depends on how
            // the mouth and face echoes interfere, so only a loose match holds.
            assert!((p / base - 1.0).abs() < 0.1, "class {class}: {p} vs {base}");
            let voiced = synthesize_utterance(&vocab, class, &scene, UtteranceMode::VocalEchoic, 5).unwrap();
            let added = voiced.audio.add(&s.audio.scaled(-1.0)).unwrap();
            assert!(band_energy_fraction(&added, 0.0, 10_000.0) > 0.999);
            assert!(vocal_band_energy(&added) > 100.0 * base);
        }
    }

    #[test]
    fn interferers() {
        let vocab = SyntheticVocabulary::reference(3);
        let scene = SceneSpec::default();
        let rec = synthesize_utterance(&vocab, 1, &scene, UtteranceMode::VocalEchoic, 8).unwrap();
        let mut rng = rng_for(0, 0, 0);
        let voice = synthesize_vocal(&vocab.commands[2].signature, 1.0, 48_000).unwrap();
        let same = add_interferer(&rec, &Interferer::Vocal { audio: voice, gain: 0.0 }, &mut rng).unwrap();
        assert_eq!(same.audio, rec.audio);

        let us = Interferer::Ultrasound {
            spec: ChirpSpec {
                period: 0.01,
                ..ChirpSpec::low_band()
            }
            .with_amplitude(0.05),
            distances: (0..120).map(|f| 0.5 + 0.002 * f as f64).collect(),
            gain: 1.0,
        };
        let with_us = add_interferer(&rec, &us, &mut rng).unwrap();
        let lp = FilterSpec::lowpass(10_000.0);
        let p0 = signal_power(&apply_filter(&rec.audio, &lp).unwrap()).unwrap();
        let p1 = signal_power(&apply_filter(&with_us.audio, &lp).unwrap()).unwrap();
        assert!((p1 / p0 - 1.0).abs() < 0.001, "{p1} vs {p0}");
    }
}
