use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

/// Class labels in model output order.
pub const CLASS_NAMES: [&str; 12] = [
    "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go", "unknown", "silence",
];
pub const N_CLASSES: usize = CLASS_NAMES.len();
pub const N_COMMANDS: usize = 10;
pub const UNKNOWN: usize = 10;
pub const SILENCE: usize = 11;

/// Largest mouth displacement from the baseline, metres.
pub const MAX_OFFSET: f64 = 0.015;

/// Harmonic source description. F0 and formants move linearly from their
/// start to end values over the word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocalSignature {
    pub f0_start: f64,
    pub f0_end: f64,
    pub formants_start: [f64; 3],
    pub formants_end: [f64; 3],
    pub bandwidths: [f64; 3],
    /// Peak amplitude of the rendered waveform.
    pub amplitude: f64,
}

impl VocalSignature {
    pub fn validate(&self) -> Result<()> {
        for f0 in [self.f0_start, self.f0_end] {
            if !(80.0..=300.0).contains(&f0) {
                return Err(Error::InvalidArgument(format!("F0 {f0} Hz outside [80, 300]")));
            }
        }
        for f in self.formants_start.iter().chain(&self.formants_end) {
            if !(*f > 0.0 && *f < 5000.0) {
                return Err(Error::InvalidArgument(format!("formant {f} Hz outside (0, 5000)")));
            }
        }
        if self.bandwidths.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::InvalidArgument("formant bandwidths must be positive".into()));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidArgument("amplitude must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Piecewise-linear mouth displacement over normalised word time `[0, 1]`.
/// Knots are `(fraction, offset in metres)`; the offset is zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub knots: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn still() -> Self {
        Self {
            knots: vec![(0.0, 0.0), (1.0, 0.0)],
        }
    }

    pub fn at(&self, fraction: f64) -> f64 {
        if !(0.0..=1.0).contains(&fraction) || self.knots.len() < 2 {
            return 0.0;
        }
        for w in self.knots.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if fraction <= t1 {
                if t1 <= t0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (fraction - t0) / (t1 - t0);
            }
        }
        self.knots.last().unwrap().1
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            knots: self.knots.iter().map(|&(t, v)| (t, v * k)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.knots.iter().fold(0.0, |m, k| m.max(k.1.abs()))
    }

    /// 4–8 knots, inner amplitudes 0.3–1.2 cm of random sign, ends at rest.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let inner = rng.random_range(2..=6);
        let mut times: Vec<f64> = Vec::with_capacity(inner);
        while times.len() < inner {
            let t = rng.random_range(0.1..0.9);
            if times.iter().all(|u| (u - t).abs() >= 0.08) {
                times.push(t);
            }
        }
        times.sort_by(f64::total_cmp);
        let mut knots = vec![(0.0, 0.0)];
        for t in times {
            let amp = rng.random_range(0.003..0.012);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            knots.push((t, sign * amp));
        }
        knots.push((1.0, 0.0));
        Self { knots }
    }

    fn rms_distance(&self, other: &Self) -> f64 {
        let n = 64;
        let s: f64 = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                (self.at(t) - other.at(t)).powi(2)
            })
            .sum();
        (s / n as f64).sqrt()
    }
}

/// One articulated word: how the mouth moves and what the voice sounds like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordModel {
    pub label: String,
    /// Seconds of articulation.
    pub duration: f64,
    pub trajectory: Trajectory,
    pub signature: VocalSignature,
}

impl WordModel {
    /// A different repetition of the same word: formants, pitch, duration and
    /// articulation depth are jittered by a few percent.
    pub fn repetition<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        self.perturbed(rng, 0.05, 0.1, 0.08, 0.1)
    }

    /// The word spoken by another talker: larger pitch and formant shifts.
    pub fn other_talker<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        self.perturbed(rng, 0.15, 0.35, 0.15, 0.2)
    }

    fn perturbed<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        formant: f64,
        pitch: f64,
        time: f64,
        depth: f64,
    ) -> Self {
        let fk = rng.random_range(1.0 - formant..1.0 + formant);
        let pk = rng.random_range(1.0 - pitch..1.0 + pitch);
        let dk = rng.random_range(1.0 - time..1.0 + time);
        let ak = rng.random_range(1.0 - depth..1.0 + depth);
        let sig = &self.signature;
        let scale3 = |f: [f64; 3]| f.map(|v| (v * fk).min(4800.0));
        Self {
            label: self.label.clone(),
            duration: self.duration * dk,
            trajectory: {
                let t = self.trajectory.scaled(ak);
                let m = t.max_abs();
                if m > MAX_OFFSET {
                    t.scaled(MAX_OFFSET / m)
                } else {
                    t
                }
            },
            signature: VocalSignature {
                f0_start: (sig.f0_start * pk).clamp(80.0, 300.0),
                f0_end: (sig.f0_end * pk).clamp(80.0, 300.0),
                formants_start: scale3(sig.formants_start),
                formants_end: scale3(sig.formants_end),
                ..sig.clone()
            },
        }
    }
}

/// Ten command words plus the diffuse "unknown" class and "silence".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVocabulary {
    pub classes: Vec<String>,
    /// Models for the command classes, indexed by class id.
    pub commands: Vec<WordModel>,
}

// (label, duration s, f0 start/end, F1-F3 start, F1-F3 end)
type WordRow = (&'static str, f64, (f64, f64), [f64; 3], [f64; 3]);

const COMMAND_VOICES: [WordRow; N_COMMANDS] = [
    ("yes", 0.40, (140.0, 175.0), [300.0, 2200.0, 3000.0], [560.0, 1800.0, 2500.0]),
    ("no", 0.40, (155.0, 110.0), [450.0, 1500.0, 2500.0], [400.0, 800.0, 2400.0]),
    ("up", 0.30, (165.0, 150.0), [620.0, 1200.0, 2500.0], [680.0, 1100.0, 2300.0]),
    ("down", 0.45, (175.0, 105.0), [720.0, 1100.0, 2500.0], [350.0, 900.0, 2200.0]),
    ("left", 0.40, (125.0, 140.0), [400.0, 1900.0, 2600.0], [580.0, 1650.0, 2450.0]),
    ("right", 0.45, (115.0, 165.0), [350.0, 1300.0, 1700.0], [420.0, 2050.0, 2650.0]),
    ("on", 0.35, (150.0, 130.0), [600.0, 950.0, 2500.0], [480.0, 1150.0, 2350.0]),
    ("off", 0.30, (135.0, 155.0), [680.0, 1050.0, 2600.0], [620.0, 1350.0, 2700.0]),
    ("stop", 0.35, (170.0, 120.0), [500.0, 1750.0, 2500.0], [620.0, 1000.0, 2450.0]),
    ("go", 0.35, (130.0, 100.0), [320.0, 700.0, 2200.0], [460.0, 950.0, 2400.0]),
];

const BANDWIDTHS: [f64; 3] = [90.0, 110.0, 150.0];

impl SyntheticVocabulary {
    /// The built-in vocabulary. Trajectories are drawn from `seed` with
    /// rejection so that no two commands move the mouth alike.
    pub fn reference(seed: u64) -> Self {
        let mut rng = rng_for(seed, stream::VOCAB, 0);
        let mut trajectories: Vec<Trajectory> = Vec::new();
        while trajectories.len() < N_COMMANDS {
            let t = Trajectory::random(&mut rng);
            if t.max_abs() < 0.007 {
                continue;
            }
            if trajectories.iter().all(|u| u.rms_distance(&t) >= 0.004) {
                trajectories.push(t);
            }
        }
        let commands = COMMAND_VOICES
            .iter()
            .zip(trajectories)
            .map(|(&(label, duration, (f0s, f0e), fs, fe), trajectory)| WordModel {
                label: label.to_string(),
                duration,
                trajectory,
                signature: VocalSignature {
                    f0_start: f0s,
                    f0_end: f0e,
                    formants_start: fs,
                    formants_end: fe,
                    bandwidths: BANDWIDTHS,
                    amplitude: 1.0,
                },
            })
            .collect();
        Self {
            classes: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            commands,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.classes[id]
    }

    pub fn class_id(&self, label: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn is_command(&self, id: usize) -> bool {
        id < self.commands.len()
    }

    pub fn unknown_id(&self) -> usize {
        self.commands.len()
    }

    pub fn silence_id(&self) -> usize {
        self.commands.len() + 1
    }

    pub fn command(&self, id: usize) -> Option<&WordModel> {
        self.commands.get(id)
    }

    /// A fresh out-of-vocabulary word: random trajectory and voice.
    pub fn sample_unknown<R: Rng + ?Sized>(&self, rng: &mut R) -> WordModel {
        let mut f = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let signature = VocalSignature {
            f0_start: f(100.0, 220.0),
            f0_end: f(100.0, 220.0),
            formants_start: [f(300.0, 800.0), f(800.0, 2300.0), f(2300.0, 3200.0)],
            formants_end: [f(300.0, 800.0), f(800.0, 2300.0), f(2300.0, 3200.0)],
            bandwidths: BANDWIDTHS,
            amplitude: 1.0,
        };
        let duration = f(0.3, 0.5);
        WordModel {
            label: "unknown".into(),
            duration,
            trajectory: Trajectory::random(rng),
            signature,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_vocabulary_shape() {
        let v = SyntheticVocabulary::reference(1);
        assert_eq!(v.n_classes(), 12);
        assert_eq!(v.class_id("silence").unwrap(), SILENCE);
        assert_eq!(v.unknown_id(), UNKNOWN);
        assert!(v.class_id("maybe").is_err());
        for w in &v.commands {
            assert!(w.trajectory.max_abs() <= MAX_OFFSET);
            assert!((4..=8).contains(&w.trajectory.knots.len()));
            w.signature.validate().unwrap();
        }
        assert_eq!(v, SyntheticVocabulary::reference(1));
    }

    #[test]
    fn trajectory_interpolates() {
        let t = Trajectory {
            knots: vec![(0.0, 0.0), (0.5, 0.01), (1.0, 0.0)],
        };
        assert_eq!(t.at(-0.1), 0.0);
        assert!((t.at(0.25) - 0.005).abs() < 1e-12);
        assert!((t.at(0.5) - 0.01).abs() < 1e-12);
        assert_eq!(t.at(1.5), 0.0);
    }
}
