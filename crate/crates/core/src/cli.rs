//! Batch stages behind the `dualkws` binary: generate, featurize, train,
//! fit-fusion and evaluate. Each stage reads its inputs from and writes its
//! outputs to a project directory, so stages can be re-run independently.
//!
//! Layout under the project root:
//!
//! ```text
//! dataset/manifest.jsonl, dataset/audio/*.wav
//! features/{vocal,echoic}.bank, features/vocal-background.bank
//! models/{vocal,echoic}.model, models/{vocal,echoic}-loss.csv, models/{vocal,echoic}-metrics.json
//! models/rb-fusion.bin, models/rb-trace.csv, models/mlp-fusion.bin, models/mlp-loss.csv
//! results/<scenario>.csv, results/<scenario>.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::wav_read;
use crate::error::{Error, Result};
use crate::eval::{fusion_training_set, run_scenario, EvalContext, ExperimentResult, FeatureSettings, ScenarioConfig, ScenarioKind, Systems, TestUtterance};
use crate::fusion::{fit_rb_params, train_mlp_fusion, AugmentConfig, FusionParams, MlpConfig, MlpFusionModel, RbFitConfig};
use crate::mfcc::MfccConfig;
use crate::nn::{predict_batch, train, Backbone, BackgroundPool, ModelWeights, NetConfig, TrainConfig, TrainData};
use crate::pipeline::{features_for, EchoicConfig, FeatureBank, Modality};
use crate::seed::{rng_for, stream};
use crate::sim::{
    add_vocal_band_noise, generate_dataset, generate_noise, median_power, parallel_map, read_manifest, vocal_band_power,
    DatasetSpec, ManifestEntry, NoiseKind, SceneSpec, Split, SyntheticVocabulary, CLASS_NAMES, MANIFEST_FILE, SILENCE,
};

pub const CONFIG_VERSION: u32 = 1;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::MissingPrerequisite(_) => 3,
        _ => 4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub features: PathBuf,
    pub models: PathBuf,
    pub results: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "dataset".into(),
            features: "features".into(),
            models: "models".into(),
            results: "results".into(),
        }
    }
}

/// Architecture choice per modality; input shape comes from the features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub backbone: Backbone,
    pub width_divisor: usize,
    pub depthwise_separable: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            backbone: Backbone::Resnet18,
            width_divisor: 8,
            depthwise_separable: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    pub vocal: ModelSpec,
    pub echoic: ModelSpec,
}


/// Pre-rendered noisy copies of the vocal training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundConfig {
    pub variants: usize,
    pub snr_range: (f64, f64),
    pub kinds: Vec<NoiseKind>,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            variants: 2,
            snr_range: (5.0, 20.0),
            kinds: NoiseKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub rb: RbFitConfig,
    pub mlp: MlpConfig,
    pub augment: AugmentConfig,
}


/// The whole project configuration. `seed` is required and overrides the
/// seed fields of the nested sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub mfcc: MfccConfig,
    #[serde(default)]
    pub echoic: EchoicConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default = "desk_train")]
    pub train: TrainConfig,
    #[serde(default)]
    pub background: BackgroundConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub scenarios: ScenarioConfig,
}

fn desk_train() -> TrainConfig {
    TrainConfig::desk_scale(0)
}

impl ProjectConfig {
    /// Desk-scale defaults for `seed`.
    pub fn reference(seed: u64) -> Self {
        let mut c = Self {
            version: CONFIG_VERSION,
            seed,
            paths: Paths::default(),
            scene: SceneSpec::default(),
            dataset: DatasetSpec::default(),
            mfcc: MfccConfig::default(),
            echoic: EchoicConfig::default(),
            models: ModelsConfig::default(),
            train: desk_train(),
            background: BackgroundConfig::default(),
            fusion: FusionConfig::default(),
            scenarios: ScenarioConfig::default(),
        };
        c.set_seed(seed);
        c
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.scene.rng_seed = seed;
        self.train.seed = seed;
        self.scenarios.seed = seed;
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut c: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        c.set_seed(c.seed);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        self.scene.validate().map_err(cfg)?;
        self.dataset.validate().map_err(cfg)?;
        self.mfcc.validate().map_err(cfg)?;
        self.train.validate().map_err(cfg)?;
        self.fusion.augment.validate().map_err(cfg)?;
        if self.background.variants > 0 && (self.background.kinds.is_empty() || self.background.snr_range.0 > self.background.snr_range.1 || self.background.snr_range.0.is_nan()) {
            return Err(Error::Config("background needs noise kinds and an ordered SNR range".into()));
        }
        if self.echoic.shift_window.0 > self.echoic.shift_window.1 {
            return Err(Error::Config("echoic.shift_window must be ordered".into()));
        }
        Ok(())
    }

    pub fn settings(&self) -> FeatureSettings {
        FeatureSettings {
            bands: self.scene.bands.clone(),
            mfcc: self.mfcc,
            echoic: self.echoic.clone(),
        }
    }

    pub fn vocabulary(&self) -> SyntheticVocabulary {
        SyntheticVocabulary::reference(self.seed)
    }
}

/// A configuration bound to a project root directory.
#[derive(Debug, Clone)]
pub struct Project {
    pub config: ProjectConfig,
    pub root: PathBuf,
    pub jobs: usize,
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(p, e))
}

impl Project {
    pub fn new(config: ProjectConfig, root: impl Into<PathBuf>, jobs: usize) -> Self {
        Self {
            config,
            root: root.into(),
            jobs: jobs.max(1),
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join(&self.config.paths.dataset)
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join(&self.config.paths.features)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join(&self.config.paths.models)
    }

    pub fn results_dir(&self) -> PathBuf {
        self.root.join(&self.config.paths.results)
    }

    pub fn bank_path(&self, m: Modality) -> PathBuf {
        self.features_dir().join(format!("{}.bank", m.name()))
    }

    pub fn background_path(&self) -> PathBuf {
        self.features_dir().join("vocal-background.bank")
    }

    pub fn model_path(&self, m: Modality) -> PathBuf {
        self.models_dir().join(format!("{}.model", m.name()))
    }

    pub fn rb_path(&self) -> PathBuf {
        self.models_dir().join("rb-fusion.bin")
    }

    pub fn mlp_path(&self) -> PathBuf {
        self.models_dir().join("mlp-fusion.bin")
    }

    fn require(&self, path: &Path, what: &str, stage: &str) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::MissingPrerequisite(format!(
                "{what} not found at {}; run `{stage}` first",
                path.display()
            )))
        }
    }

    fn manifest(&self) -> Result<Vec<ManifestEntry>> {
        let dir = self.dataset_dir();
        self.require(&dir.join(MANIFEST_FILE), "dataset manifest", "generate")?;
        read_manifest(&dir)
    }

    /// Records of `split`, read back from the dataset WAV files.
    pub fn load_split(&self, split: Split) -> Result<Vec<TestUtterance>> {
        let dir = self.dataset_dir();
        let entries: Vec<ManifestEntry> = self.manifest()?.into_iter().filter(|e| e.split == split).collect();
        parallel_map(entries.len(), self.jobs, |i| {
            Ok(TestUtterance {
                audio: wav_read(dir.join(&entries[i].path))?,
                label: entries[i].class_id,
            })
        })
        .into_iter()
        .collect()
    }

    /// Renders the dataset and returns per-class, per-split counts.
    pub fn generate(&self) -> Result<String> {
        let dir = self.dataset_dir();
        create_dir(&dir)?;
        let c = &self.config;
        let entries = generate_dataset(&c.vocabulary(), &c.scene, &c.dataset, &dir, self.jobs)?;
        let mut s = String::from("class,train,tune,test\n");
        for (id, name) in CLASS_NAMES.iter().enumerate() {
            let n = |sp: Split| entries.iter().filter(|e| e.class_id == id && e.split == sp).count();
            s.push_str(&format!("{name},{},{},{}\n", n(Split::Train), n(Split::Tune), n(Split::Test)));
        }
        Ok(s)
    }

    /// Feature banks of both modalities plus the vocal background pool.
    pub fn featurize(&self) -> Result<()> {
        let entries = self.manifest()?;
        let dir = self.dataset_dir();
        create_dir(&self.features_dir())?;
        let settings = self.config.settings();
        let audio = parallel_map(entries.len(), self.jobs, |i| wav_read(dir.join(&entries[i].path)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for m in [Modality::Vocal, Modality::Echoic] {
            let feats = parallel_map(audio.len(), self.jobs, |i| features_for(m, &audio[i], &settings.bands, &settings.mfcc, &settings.echoic))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let mut bank = FeatureBank::new(m, feats.first().map_or([0; 3], |f| f.1));
            for (e, (f, _)) in entries.iter().zip(&feats) {
                bank.push(e.index, e.class_id, e.split, f)?;
            }
            bank.write(self.bank_path(m))?;
            log::info!("{} features: {} records of shape {:?}", m.name(), bank.len(), bank.shape);
        }
        self.write_background(&entries, &audio)
    }

    fn write_background(&self, entries: &[ManifestEntry], audio: &[crate::audio::AudioBuffer]) -> Result<()> {
        let bg = &self.config.background;
        let settings = self.config.settings();
        let train: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].split == Split::Train).collect();
        let powers = train
            .iter()
            .map(|&i| if entries[i].class_id == SILENCE { Ok(0.0) } else { vocal_band_power(&audio[i]) })
            .collect::<Result<Vec<f64>>>()?;
        let median = median_power(&powers).unwrap_or(1e-3);
        let vocab = self.config.vocabulary();
        let n = train.len() * bg.variants;
        let feats = parallel_map(n, self.jobs, |k| -> Result<(Vec<f64>, [usize; 3])> {
            let (t, v) = (k / bg.variants, k % bg.variants);
            let i = train[t];
            let mut rng = rng_for(self.config.seed, stream::AUGMENT, (entries[i].index * bg.variants + v) as u64);
            let kind = bg.kinds[rand::Rng::random_range(&mut rng, 0..bg.kinds.len())];
            let snr = rand::Rng::random_range(&mut rng, bg.snr_range.0..=bg.snr_range.1);
            let noise = generate_noise(kind, audio[i].len(), audio[i].rate(), &vocab, &mut rng)?;
            let p = if powers[t] > 0.0 { powers[t] } else { median };
            let (mixed, _) = add_vocal_band_noise(&audio[i], &noise, snr, p)?;
            features_for(Modality::Vocal, &mixed, &settings.bands, &settings.mfcc, &settings.echoic)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut bank = FeatureBank::new(Modality::Vocal, feats.first().map_or([0; 3], |f| f.1));
        for (k, (f, _)) in feats.iter().enumerate() {
            let e = &entries[train[k / bg.variants.max(1)]];
            bank.push(e.index, e.class_id, e.split, f)?;
        }
        bank.write(self.background_path())
    }

    fn load_bank(&self, m: Modality) -> Result<FeatureBank> {
        let path = self.bank_path(m);
        self.require(&path, &format!("{} feature bank", m.name()), "featurize")?;
        FeatureBank::read(path)
    }

    pub fn net_config(&self, m: Modality, shape: [usize; 3]) -> NetConfig {
        let spec = match m {
            Modality::Vocal => self.config.models.vocal,
            Modality::Echoic => self.config.models.echoic,
        };
        NetConfig {
            backbone: spec.backbone,
            width_divisor: spec.width_divisor,
            depthwise_separable: spec.depthwise_separable,
            in_channels: shape[0],
            in_shape: (shape[1], shape[2]),
            n_classes: CLASS_NAMES.len(),
        }
    }

    /// Trains one modality on the train split; writes the model, the loss
    /// history and per-split accuracies. Returns the accuracies.
    pub fn train(&self, m: Modality) -> Result<[f64; 3]> {
        if !self.bank_path(m).exists() || (m == Modality::Vocal && !self.background_path().exists()) {
            self.featurize()?;
        }
        let bank = self.load_bank(m)?;
        let rows = bank.rows(Split::Train);
        if rows.is_empty() {
            return Err(Error::MissingPrerequisite("train split is empty".into()));
        }
        let x: Vec<f64> = rows.iter().flat_map(|&i| bank.features(i).iter().copied()).collect();
        let y: Vec<usize> = rows.iter().map(|&i| bank.labels[i]).collect();
        let background = if m == Modality::Vocal && self.config.train.background_overlay && self.config.background.variants > 0 {
            let path = self.background_path();
            self.require(&path, "vocal background bank", "featurize")?;
            Some(FeatureBank::read(path)?)
        } else {
            None
        };
        if let Some(bg) = &background {
            if bg.len() != rows.len() * self.config.background.variants {
                return Err(Error::MissingPrerequisite("background bank does not match the train split; re-run `featurize`".into()));
            }
        }
        let net = self.net_config(m, bank.shape);
        let data = TrainData {
            features: &x,
            labels: &y,
            background: background.as_ref().map(|b| BackgroundPool {
                data: &b.data,
                variants: self.config.background.variants,
            }),
        };
        let report = train(&net, &self.config.train, data)?;
        create_dir(&self.models_dir())?;
        report.weights.write(self.model_path(m))?;
        let mut csv = String::from("epoch,lr,loss\n");
        for (e, l) in report.losses.iter().enumerate() {
            csv.push_str(&format!("{e},{:.8},{l:.8}\n", crate::nn::lr_at(&self.config.train, e)));
        }
        write_text(&self.models_dir().join(format!("{}-loss.csv", m.name())), &csv)?;
        // Reload so the accuracies describe the weights as stored on disk.
        let weights = ModelWeights::read(self.model_path(m))?;
        let mut acc = [0.0; 3];
        for (a, split) in acc.iter_mut().zip([Split::Train, Split::Tune, Split::Test]) {
            let r = bank.rows(split);
            if r.is_empty() {
                continue;
            }
            let inputs: Vec<&[f64]> = r.iter().map(|&i| bank.features(i)).collect();
            let p = predict_batch(&weights, &inputs)?;
            *a = r.iter().zip(&p).filter(|(&i, p)| p.argmax() == bank.labels[i]).count() as f64 / r.len() as f64;
        }
        let metrics = serde_json::json!({"train_accuracy": acc[0], "tune_accuracy": acc[1], "test_accuracy": acc[2]});
        write_text(
            &self.models_dir().join(format!("{}-metrics.json", m.name())),
            &(serde_json::to_string_pretty(&metrics)? + "\n"),
        )?;
        Ok(acc)
    }

    fn load_model(&self, m: Modality) -> Result<ModelWeights> {
        let path = self.model_path(m);
        self.require(&path, &format!("{} model", m.name()), &format!("train {}", m.name()))?;
        ModelWeights::read(path)
    }

    /// Fits the requested fusers on the augmented tune split.
    pub fn fit_fusion(&self, rb: bool, mlp: bool) -> Result<()> {
        let vocal = self.load_model(Modality::Vocal)?;
        let echoic = self.load_model(Modality::Echoic)?;
        let tune = self.load_split(Split::Tune)?;
        if tune.is_empty() {
            return Err(Error::MissingPrerequisite("tune split is empty".into()));
        }
        let c = &self.config;
        let samples = fusion_training_set(
            &tune,
            &c.vocabulary(),
            &c.scene,
            (&vocal, &echoic),
            &c.settings(),
            &c.fusion.augment,
            c.seed,
            self.jobs,
        )?;
        create_dir(&self.models_dir())?;
        if rb {
            let fit = fit_rb_params(&samples, &c.fusion.rb, c.seed, self.jobs)?;
            fit.params.write(self.rb_path(), c.fusion.rb.n_best)?;
            let mut csv = String::from("stage,step,best\n");
            for t in &fit.trace {
                csv.push_str(&format!("{},{},{:.8}\n", t.stage, t.step, t.best));
            }
            write_text(&self.models_dir().join("rb-trace.csv"), &csv)?;
            log::info!("rb fusion: tune objective {:.4}", fit.objective);
        }
        if mlp {
            let report = train_mlp_fusion(&samples, &c.fusion.mlp, c.seed)?;
            report.model.write(self.mlp_path())?;
            let mut csv = String::from("epoch,loss\n");
            for (e, l) in report.losses.iter().enumerate() {
                csv.push_str(&format!("{e},{l:.8}\n"));
            }
            write_text(&self.models_dir().join("mlp-loss.csv"), &csv)?;
            log::info!("mlp fusion: final training accuracy {:.4}", report.final_accuracy);
        }
        Ok(())
    }

    pub fn systems(&self) -> Result<Systems> {
        let vocal = self.load_model(Modality::Vocal)?;
        let echoic = self.load_model(Modality::Echoic)?;
        self.require(&self.rb_path(), "rb fusion parameters", "fit-fusion")?;
        self.require(&self.mlp_path(), "mlp fusion model", "fit-fusion")?;
        let (rb, n_best) = FusionParams::read(self.rb_path())?;
        let mlp = MlpFusionModel::read(self.mlp_path())?;
        Ok(Systems {
            vocal,
            echoic,
            rb,
            n_best,
            mlp,
        })
    }

    /// Runs the scenarios on the test split and writes their result tables.
    pub fn evaluate(&self, scenarios: &[ScenarioKind]) -> Result<Vec<ExperimentResult>> {
        let systems = self.systems()?;
        let test = self.load_split(Split::Test)?;
        let c = &self.config;
        let vocab = c.vocabulary();
        let settings = c.settings();
        let ctx = EvalContext {
            vocab: &vocab,
            scene: &c.scene,
            systems: &systems,
            settings: &settings,
            jobs: self.jobs,
        };
        let mut out = Vec::new();
        for &kind in scenarios {
            let r = run_scenario(kind, &ctx, &test, &c.scenarios)?;
            r.write(&self.results_dir())?;
            out.push(r);
        }
        Ok(out)
    }
}
