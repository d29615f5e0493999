use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{synthesize_utterance, SceneSpec, Split, SyntheticVocabulary, UtteranceMode, UtteranceRecord};
use crate::audio::{wav_write, WavEncoding};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for, stream};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub tune: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.tune, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions {parts:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    /// Records per command word.
    pub per_command: usize,
    pub unknown: usize,
    pub silence: usize,
    pub splits: SplitFractions,
    pub encoding: WavEncoding,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            per_command: 30,
            unknown: 40,
            silence: 30,
            splits: SplitFractions {
                train: 0.5,
                tune: 0.2,
                test: 0.3,
            },
            encoding: WavEncoding::Float32,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.splits.validate()?;
        if self.per_command == 0 || self.unknown == 0 || self.silence == 0 {
            return Err(Error::InvalidArgument("every class needs at least one record".into()));
        }
        Ok(())
    }

    pub fn count(&self, vocab: &SyntheticVocabulary, class_id: usize) -> usize {
        if vocab.is_command(class_id) {
            self.per_command
        } else if class_id == vocab.unknown_id() {
            self.unknown
        } else {
            self.silence
        }
    }
}

/// One line of the dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    /// Relative to the dataset directory.
    pub path: String,
    pub label: String,
    pub class_id: usize,
    pub split: Split,
    pub seed: u64,
    pub mode: UtteranceMode,
}

/// Record list without rendering any audio. Records are class-major; the
/// split is stratified per class by a seeded shuffle.
pub fn plan_dataset(vocab: &SyntheticVocabulary, spec: &DatasetSpec, seed: u64) -> Result<Vec<ManifestEntry>> {
    spec.validate()?;
    let mut entries = Vec::new();
    for class_id in 0..vocab.n_classes() {
        let n = spec.count(vocab, class_id);
        let n_test = (n as f64 * spec.splits.test).round() as usize;
        let n_tune = ((n as f64 * spec.splits.tune).round() as usize).min(n - n_test);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(seed, stream::SPLIT, class_id as u64));
        let mut splits = vec![Split::Train; n];
        for (rank, &i) in order.iter().enumerate() {
            splits[i] = if rank < n_test {
                Split::Test
            } else if rank < n_test + n_tune {
                Split::Tune
            } else {
                Split::Train
            };
        }
        for split in splits {
            let index = entries.len();
            let label = vocab.label(class_id).to_string();
            entries.push(ManifestEntry {
                index,
                path: format!("audio/{index:05}_{label}.wav"),
                label,
                class_id,
                split,
                seed: derive_seed(seed, stream::RECORD, index as u64),
                mode: UtteranceMode::VocalEchoic,
            });
        }
    }
    Ok(entries)
}

pub fn render_entry(
    vocab: &SyntheticVocabulary,
    scene: &SceneSpec,
    entry: &ManifestEntry,
) -> Result<UtteranceRecord> {
    let mut rec = synthesize_utterance(vocab, entry.class_id, scene, entry.mode, entry.seed)?;
    rec.split = entry.split;
    Ok(rec)
}

/// Runs `f` over `0..n` on up to `jobs` threads; results are in index order.
pub(crate) fn parallel_map<T: Send, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync,
{
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let f = &f;
                s.spawn(move || (j * chunk..((j + 1) * chunk).min(n)).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&out).map_err(|e| Error::io(&path, e))
}

/// Renders every planned record to `dir/audio/*.wav` and writes the manifest.
pub fn generate_dataset(
    vocab: &SyntheticVocabulary,
    scene: &SceneSpec,
    spec: &DatasetSpec,
    dir: &Path,
    jobs: usize,
) -> Result<Vec<ManifestEntry>> {
    scene.validate()?;
    let entries = plan_dataset(vocab, spec, scene.rng_seed)?;
    let audio_dir = dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let results = parallel_map(entries.len(), jobs, |i| -> Result<()> {
        let rec = render_entry(vocab, scene, &entries[i])?;
        wav_write(&rec.audio, dir.join(&entries[i].path), spec.encoding)?;
        Ok(())
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    write_manifest(dir, &entries)?;
    Ok(entries)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_FILE);
    let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut entries = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if !line.trim().is_empty() {
            entries.push(serde_json::from_str(&line)?);
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_counts_and_stratified_split() {
        let vocab = SyntheticVocabulary::reference(0);
        let spec = DatasetSpec {
            per_command: 30,
            unknown: 125,
            silence: 20,
            splits: SplitFractions {
                train: 0.8,
                tune: 0.0,
                test: 0.2,
            },
            encoding: WavEncoding::Float32,
        };
        let plan = plan_dataset(&vocab, &spec, 4).unwrap();
        let commands = plan.iter().filter(|e| vocab.is_command(e.class_id)).count();
        assert_eq!(commands, 300);
        assert_eq!(plan.iter().filter(|e| e.label == "unknown").count(), 125);
        for c in 0..12 {
            let n = plan.iter().filter(|e| e.class_id == c).count() as f64;
            let t = plan
                .iter()
                .filter(|e| e.class_id == c && e.split == Split::Test)
                .count() as f64;
            assert!((t - 0.2 * n).abs() <= 1.0);
            assert!(plan.iter().all(|e| e.split != Split::Tune));
        }
        assert_eq!(plan, plan_dataset(&vocab, &spec, 4).unwrap());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let a = parallel_map(17, 4, |i| i * i);
        assert_eq!(a, (0..17).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn bad_fractions() {
        let spec = DatasetSpec {
            splits: SplitFractions {
                train: 0.5,
                tune: 0.5,
                test: 0.5,
            },
            ..DatasetSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
