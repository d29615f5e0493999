//! WER scoring and the noise, silent-speech and nearby-speaker scenarios.
//!
//! Each utterance is one classification. Its reference is the class label
//! and its hypothesis the system decision; "silence" and rejected fusion
//! outcomes emit no word. Reports are per-utterance alignments summed over
//! the test set.
//!
//! CSV schema: `condition,system,S,D,I,C,N,WER`, one row per condition and
//! system. The JSON summary serialises [`ExperimentResult`].

mod wer;

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{wav_read, AudioBuffer};
use crate::error::{Error, Result};
use crate::fmcw::ChirpSpec;
use crate::fusion::{apply_augmentation, mlp_fuse, rb_fuse, AugmentConfig, FusionAugmentation, FusionParams, FusionSample, MlpFusionModel};
use crate::mfcc::MfccConfig;
use crate::nn::{predict_batch, ModelWeights, PredictionVector};
use crate::pipeline::{features_for, EchoicConfig, Modality};
use crate::seed::{derive_seed, rng_for, stream};
use crate::sim::{
    add_vocal_band_noise, generate_noise, median_power, other_talker_voice, parallel_map, replace_vocal_band,
    vocal_band_power, NoiseKind, SceneSpec, SyntheticVocabulary, SILENCE,
};

pub use wer::{align, score_utterances, score_wer, WerReport};

/// A recording and its true class.
#[derive(Debug, Clone, PartialEq)]
pub struct TestUtterance {
    pub audio: AudioBuffer,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Vocal,
    Echoic,
    RbFusion,
    MlpFusion,
}

impl SystemKind {
    pub const ALL: [SystemKind; 4] = [Self::Vocal, Self::Echoic, Self::RbFusion, Self::MlpFusion];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vocal => "vocal",
            Self::Echoic => "echoic",
            Self::RbFusion => "rb-fusion",
            Self::MlpFusion => "mlp-fusion",
        }
    }
}

/// Everything needed to turn audio into features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSettings {
    pub bands: Vec<ChirpSpec>,
    pub mfcc: MfccConfig,
    pub echoic: EchoicConfig,
}

/// Trained classifiers and fitted fusers.
#[derive(Debug, Clone)]
pub struct Systems {
    pub vocal: ModelWeights,
    pub echoic: ModelWeights,
    pub rb: FusionParams,
    pub n_best: usize,
    pub mlp: MlpFusionModel,
}

/// Both posteriors of every recording, computed on up to `jobs` threads.
pub fn posteriors(
    audio: &[AudioBuffer],
    vocal: &ModelWeights,
    echoic: &ModelWeights,
    settings: &FeatureSettings,
    jobs: usize,
) -> Result<Vec<(PredictionVector, PredictionVector)>> {
    const CHUNK: usize = 16;
    let chunks = audio.len().div_ceil(CHUNK);
    let parts = parallel_map(chunks, jobs, |k| -> Result<Vec<(PredictionVector, PredictionVector)>> {
        let slice = &audio[k * CHUNK..((k + 1) * CHUNK).min(audio.len())];
        let mut fv = Vec::with_capacity(slice.len());
        let mut fe = Vec::with_capacity(slice.len());
        for a in slice {
            fv.push(features_for(Modality::Vocal, a, &settings.bands, &settings.mfcc, &settings.echoic)?.0);
            fe.push(features_for(Modality::Echoic, a, &settings.bands, &settings.mfcc, &settings.echoic)?.0);
        }
        let pv = predict_batch(vocal, &fv.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
        let pe = predict_batch(echoic, &fe.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
        Ok(pv.into_iter().zip(pe).collect())
    });
    let mut out = Vec::with_capacity(audio.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Decisions of the four systems, in [`SystemKind::ALL`] order. `None` is a
/// rejected fusion outcome.
pub fn decide(systems: &Systems, vocal: &PredictionVector, echoic: &PredictionVector) -> Result<[Option<usize>; 4]> {
    Ok([
        Some(vocal.argmax()),
        Some(echoic.argmax()),
        rb_fuse(vocal, echoic, &systems.rb, systems.n_best)?.decision(),
        Some(mlp_fuse(&systems.mlp, vocal, echoic)?.argmax()),
    ])
}

/// Vocal-band power each record's noise is scaled against: its own, or for
/// voiceless records the median over the voiced ones.
pub fn reference_powers(records: &[TestUtterance]) -> Result<Vec<f64>> {
    let own = records
        .iter()
        .map(|r| {
            if r.label == SILENCE {
                Ok(0.0)
            } else {
                vocal_band_power(&r.audio)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let median = median_power(&own).ok_or(Error::ZeroPower("no voiced record to reference noise against"))?;
    Ok(own.into_iter().map(|p| if p > 0.0 { p } else { median }).collect())
}

/// Tune-set posteriors for fitting the fusers. Every record is augmented
/// `cfg.copies` times, each copy with one uniformly drawn augmentation.
pub fn fusion_training_set(
    records: &[TestUtterance],
    vocab: &SyntheticVocabulary,
    scene: &SceneSpec,
    models: (&ModelWeights, &ModelWeights),
    settings: &FeatureSettings,
    cfg: &AugmentConfig,
    seed: u64,
    jobs: usize,
) -> Result<Vec<FusionSample>> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::Empty("fusion tune records"));
    }
    let powers = reference_powers(records)?;
    let total = records.len() * cfg.copies;
    let audio = parallel_map(total, jobs, |k| {
        let (i, _) = (k / cfg.copies, k % cfg.copies);
        let mut rng = rng_for(seed, stream::FUSION_AUG, k as u64);
        let aug = FusionAugmentation::draw(&mut rng);
        apply_augmentation(&records[i].audio, aug, powers[i], vocab, scene, cfg, &mut rng)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let post = posteriors(&audio, models.0, models.1, settings, jobs)?;
    Ok(post
        .into_iter()
        .enumerate()
        .map(|(k, (vocal, echoic))| FusionSample {
            vocal,
            echoic,
            label: records[k / cfg.copies].label,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Clean,
    NoiseSweep,
    SilentSpeech,
    NearbySpeaker,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [Self::Clean, Self::NoiseSweep, Self::SilentSpeech, Self::NearbySpeaker];

    pub fn name(self) -> &'static str {
        match self {
            Self::Clean => "clean",
            Self::NoiseSweep => "noise-sweep",
            Self::SilentSpeech => "silent-speech",
            Self::NearbySpeaker => "nearby-speaker",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario {name:?}; valid: {}",
                Self::ALL.map(|k| k.name()).join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum NoiseSource {
    /// Synthetic generators, cycled over utterances in order.
    Synthetic { kinds: Vec<NoiseKind> },
    /// Every `.wav` file in a directory, first channel, at the project rate.
    Directory { path: PathBuf },
}

impl Default for NoiseSource {
    fn default() -> Self {
        Self::Synthetic {
            kinds: NoiseKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub snr_points: Vec<f64>,
    pub noise_source: NoiseSource,
    pub interferer_gain: f64,
    /// Level of the floor replacing the vocal band in silent speech, dBFS.
    pub silent_floor_db: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            snr_points: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            noise_source: NoiseSource::default(),
            interferer_gain: 1.0,
            silent_floor_db: -60.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub system: SystemKind,
    pub report: WerReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: String,
    pub utterances: usize,
    pub systems: Vec<SystemResult>,
}

impl ConditionResult {
    pub fn report(&self, system: SystemKind) -> &WerReport {
        &self
            .systems
            .iter()
            .find(|s| s.system == system)
            .expect("every condition reports every system")
            .report
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub conditions: Vec<ConditionResult>,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("condition,system,S,D,I,C,N,WER\n");
        for c in &self.conditions {
            for r in &c.systems {
                let w = &r.report;
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{:.6}\n",
                    c.condition,
                    r.system.name(),
                    w.s,
                    w.d,
                    w.i,
                    w.c,
                    w.n,
                    w.wer
                ));
            }
        }
        s
    }

    /// Writes `<scenario>.csv` and `<scenario>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{}.csv", self.scenario.name()));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(format!("{}.json", self.scenario.name()));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

/// Shared inputs of every scenario run.
pub struct EvalContext<'a> {
    pub vocab: &'a SyntheticVocabulary,
    pub scene: &'a SceneSpec,
    pub systems: &'a Systems,
    pub settings: &'a FeatureSettings,
    pub jobs: usize,
}

impl EvalContext<'_> {
    /// Scores perturbed copies of the test records.
    fn score(&self, condition: String, records: &[TestUtterance], audio: Vec<AudioBuffer>) -> Result<ConditionResult> {
        let post = posteriors(&audio, &self.systems.vocal, &self.systems.echoic, self.settings, self.jobs)?;
        let mut decisions: [Vec<Option<usize>>; 4] = Default::default();
        for (v, e) in &post {
            for (slot, d) in decisions.iter_mut().zip(decide(self.systems, v, e)?) {
                slot.push(d);
            }
        }
        let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
        let systems = SystemKind::ALL
            .iter()
            .zip(&decisions)
            .map(|(&system, d)| Ok(SystemResult {
                system,
                report: score_utterances(&labels, d)?,
            }))
            .collect::<Result<Vec<_>>>()?;
        log::info!("{condition}: {}", systems.iter().map(|s| format!("{} {:.3}", s.system.name(), s.report.wer)).collect::<Vec<_>>().join(", "));
        Ok(ConditionResult {
            condition,
            utterances: records.len(),
            systems,
        })
    }

    fn perturb<F>(&self, records: &[TestUtterance], f: F) -> Result<Vec<AudioBuffer>>
    where
        F: Fn(usize, &TestUtterance) -> Result<AudioBuffer> + Sync,
    {
        parallel_map(records.len(), self.jobs, |i| f(i, &records[i]))
            .into_iter()
            .collect()
    }
}

fn check_records(records: &[TestUtterance]) -> Result<()> {
    if records.is_empty() {
        Err(Error::Empty("test records"))
    } else {
        Ok(())
    }
}

/// The unmodified test set.
pub fn run_clean(ctx: &EvalContext, records: &[TestUtterance], seed: u64) -> Result<ExperimentResult> {
    check_records(records)?;
    let audio = records.iter().map(|r| r.audio.clone()).collect();
    Ok(ExperimentResult {
        scenario: ScenarioKind::Clean,
        seed,
        conditions: vec![ctx.score("clean".into(), records, audio)?],
    })
}

fn load_noise_dir(path: &Path, rate: u32) -> Result<Vec<AudioBuffer>> {
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingPrerequisite(format!("no .wav files in {}", path.display())));
    }
    files
        .iter()
        .map(|f| {
            let a = wav_read(f)?;
            if a.rate() != rate {
                return Err(Error::InvalidArgument(format!(
                    "{} is {} Hz, expected {rate} Hz",
                    f.display(),
                    a.rate()
                )));
            }
            Ok(a.channel_buffer(0))
        })
        .collect()
}

/// `len` samples of noise for utterance `index`, identical across SNR points.
fn noise_for(source: &NoiseSource, pool: &[AudioBuffer], index: usize, len: usize, rate: u32, vocab: &SyntheticVocabulary, seed: u64) -> Result<AudioBuffer> {
    let mut rng = rng_for(seed, stream::NOISE, index as u64);
    match source {
        NoiseSource::Synthetic { kinds } => {
            if kinds.is_empty() {
                return Err(Error::Config("noise source lists no kinds".into()));
            }
            generate_noise(kinds[index % kinds.len()], len, rate, vocab, &mut rng)
        }
        NoiseSource::Directory { .. } => {
            let file = &pool[rng.random_range(0..pool.len())];
            let src = file.samples();
            if src.is_empty() {
                return Err(Error::Empty("noise file"));
            }
            let start = rng.random_range(0..src.len());
            AudioBuffer::mono((0..len).map(|k| src[(start + k) % src.len()]).collect(), rate)
        }
    }
}

/// Vocal band of every test utterance mixed with noise at each SNR point.
pub fn run_noise_sweep(ctx: &EvalContext, records: &[TestUtterance], cfg: &ScenarioConfig) -> Result<ExperimentResult> {
    check_records(records)?;
    if cfg.snr_points.is_empty() {
        return Err(Error::Config("noise sweep needs at least one SNR point".into()));
    }
    let rate = records[0].audio.rate();
    let pool = match &cfg.noise_source {
        NoiseSource::Directory { path } => load_noise_dir(path, rate)?,
        NoiseSource::Synthetic { .. } => Vec::new(),
    };
    let powers = reference_powers(records)?;
    let noises = parallel_map(records.len(), ctx.jobs, |i| {
        noise_for(&cfg.noise_source, &pool, i, records[i].audio.len(), rate, ctx.vocab, cfg.seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut conditions = Vec::new();
    for &snr in &cfg.snr_points {
        let audio = ctx.perturb(records, |i, r| Ok(add_vocal_band_noise(&r.audio, &noises[i], snr, powers[i])?.0))?;
        conditions.push(ctx.score(format!("snr={snr}"), records, audio)?);
    }
    Ok(ExperimentResult {
        scenario: ScenarioKind::NoiseSweep,
        seed: cfg.seed,
        conditions,
    })
}

/// Vocal band of every test utterance replaced by a low noise floor.
pub fn run_silent_speech(ctx: &EvalContext, records: &[TestUtterance], cfg: &ScenarioConfig) -> Result<ExperimentResult> {
    check_records(records)?;
    let seed = derive_seed(cfg.seed, stream::SCENARIO, 1);
    let audio = ctx.perturb(records, |i, r| {
        replace_vocal_band(&r.audio, cfg.silent_floor_db, &mut rng_for(seed, stream::SCENARIO, i as u64))
    })?;
    Ok(ExperimentResult {
        scenario: ScenarioKind::SilentSpeech,
        seed: cfg.seed,
        conditions: vec![ctx.score("silent".into(), records, audio)?],
    })
}

/// Another talker's voice added at `cfg.interferer_gain` to every test
/// utterance; the echo band is unaffected.
pub fn run_nearby_speaker(ctx: &EvalContext, records: &[TestUtterance], cfg: &ScenarioConfig) -> Result<ExperimentResult> {
    check_records(records)?;
    let seed = derive_seed(cfg.seed, stream::SCENARIO, 2);
    let audio = ctx.perturb(records, |i, r| {
        let voice = other_talker_voice(ctx.vocab, ctx.scene, &mut rng_for(seed, stream::INTERFERER, i as u64))?;
        let mut out = r.audio.clone();
        for c in 0..out.channels() {
            for (s, v) in out.channel_mut(c).iter_mut().zip(voice.samples()) {
                *s += cfg.interferer_gain * v;
            }
        }
        Ok(out)
    })?;
    Ok(ExperimentResult {
        scenario: ScenarioKind::NearbySpeaker,
        seed: cfg.seed,
        conditions: vec![ctx.score(format!("gain={}", cfg.interferer_gain), records, audio)?],
    })
}

pub fn run_scenario(kind: ScenarioKind, ctx: &EvalContext, records: &[TestUtterance], cfg: &ScenarioConfig) -> Result<ExperimentResult> {
    match kind {
        ScenarioKind::Clean => run_clean(ctx, records, cfg.seed),
        ScenarioKind::NoiseSweep => run_noise_sweep(ctx, records, cfg),
        ScenarioKind::SilentSpeech => run_silent_speech(ctx, records, cfg),
        ScenarioKind::NearbySpeaker => run_nearby_speaker(ctx, records, cfg),
    }
}
