use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    load_embeddings, read_cache, read_snli_jsonl, read_tsv_pairs, LabelSet, ReadOutcome, SyntheticTask,
    SyntheticTaskSpec, TokenizedPair, TsvSchema, Vocabulary,
};
use crate::error::{Result, SanError};
use crate::model::{Head, ModelConfig};
use crate::optim::{AdamaxConfig, LrSchedule};
use crate::tensor::Tensor;

/// On-disk corpus formats.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FileFormat {
    SnliJsonl,
    Tsv {
        schema: TsvSchema,
    },
    /// The internal tab-separated cache; labels are indices into `labels`.
    Cache {
        labels: LabelSet,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source")]
pub enum DataConfig {
    Synthetic {
        task: SyntheticTaskSpec,
        train: usize,
        dev: usize,
    },
    Files {
        format: FileFormat,
        train: PathBuf,
        dev: PathBuf,
        embeddings: Option<PathBuf>,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            task: SyntheticTaskSpec::default(),
            train: 5000,
            dev: 1000,
        }
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optimizer: AdamaxConfig,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub head: Head,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            optimizer: AdamaxConfig::default(),
            schedule: LrSchedule::default(),
            batch_size: 32,
            epochs: 30,
            seed: 1,
            head: Head::Multi,
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    /// Desk widths on the synthetic task, with small batches and a faster schedule.
    pub fn desk() -> Self {
        RunConfig {
            model: ModelConfig::desk(),
            schedule: LrSchedule {
                base: 0.01,
                ..LrSchedule::default()
            },
            batch_size: 8,
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(SanError::Config("batch size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(SanError::Config("at least one epoch is required".into()));
        }
        if self.schedule.interval == 0 || self.schedule.base.is_nan() || self.schedule.base <= 0.0 {
            return Err(SanError::Config(
                "learning-rate schedule needs a positive rate and interval".into(),
            ));
        }
        if let DataConfig::Synthetic { train, dev, .. } = &self.data {
            if *train == 0 || *dev == 0 {
                return Err(SanError::Config("synthetic splits must be non-empty".into()));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SanError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Train and dev splits with the vocabulary built from the training split.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub train: Vec<TokenizedPair>,
    pub dev: Vec<TokenizedPair>,
    pub vocab: Vocabulary,
    pub embeddings: Option<Tensor>,
    /// Records skipped by the readers, per split.
    pub skipped: (usize, usize),
}

fn read_split(format: &FileFormat, path: &Path) -> Result<(ReadOutcome, LabelSet)> {
    Ok(match format {
        FileFormat::SnliJsonl => {
            let labels = LabelSet::three_way();
            (read_snli_jsonl(path, &labels)?, labels)
        }
        FileFormat::Tsv { schema } => (read_tsv_pairs(path, schema)?, schema.label_set.clone()),
        FileFormat::Cache { labels } => {
            let pairs = read_cache(path)?;
            let lines = pairs.len();
            (
                ReadOutcome {
                    pairs,
                    skipped: 0,
                    lines,
                },
                labels.clone(),
            )
        }
    })
}

impl Datasets {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let datasets = match &config.data {
            DataConfig::Synthetic { task, train, dev } => {
                let t = SyntheticTask::new(task.clone())?;
                let train = t.generate(*train, 0);
                let dev = t.generate(*dev, 1);
                let vocab = Vocabulary::build(&train, SyntheticTask::labels());
                let embeddings = Some(t.embedding_table(&vocab, config.model.word_dim));
                Datasets {
                    train,
                    dev,
                    vocab,
                    embeddings,
                    skipped: (0, 0),
                }
            }
            DataConfig::Files {
                format,
                train,
                dev,
                embeddings,
            } => {
                let (train_out, labels) = read_split(format, train)?;
                let (dev_out, _) = read_split(format, dev)?;
                let vocab = Vocabulary::build(&train_out.pairs, labels);
                let embeddings = match embeddings {
                    Some(p) => Some(load_embeddings(p, &vocab, config.model.word_dim)?.table),
                    None => None,
                };
                Datasets {
                    train: train_out.pairs,
                    dev: dev_out.pairs,
                    vocab,
                    embeddings,
                    skipped: (train_out.skipped, dev_out.skipped),
                }
            }
        };
        let labels = datasets.vocab.labels.len();
        if labels != config.model.num_labels {
            return Err(SanError::LabelSetMismatch {
                model: vec![format!("{} labels", config.model.num_labels)],
                data: datasets.vocab.labels.0.clone(),
            });
        }
        if datasets.train.is_empty() || datasets.dev.is_empty() {
            return Err(SanError::Empty("training or dev split"));
        }
        for p in datasets.train.iter().chain(&datasets.dev) {
            p.validate(labels)?;
        }
        Ok(datasets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = RunConfig::default();
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.schedule.lr_at_epoch(0), 0.002);
        assert_eq!(c.model.steps, 5);
        let f = tempfile::NamedTempFile::new().unwrap();
        c.save(f.path()).unwrap();
        assert_eq!(RunConfig::load(f.path()).unwrap(), c);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"epochs": 3, "seed": 9}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.model, ModelConfig::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn synthetic_data_loads_with_matching_labels() {
        let mut c = RunConfig::desk();
        c.data = DataConfig::Synthetic {
            task: SyntheticTaskSpec::default(),
            train: 30,
            dev: 9,
        };
        let d = Datasets::load(&c).unwrap();
        assert_eq!((d.train.len(), d.dev.len()), (30, 9));
        c.model.num_labels = 2;
        assert!(matches!(Datasets::load(&c), Err(SanError::LabelSetMismatch { .. })));
    }
}
