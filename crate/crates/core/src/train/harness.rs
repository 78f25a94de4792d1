//! Experiment drivers built on [`train`](super::train): head comparison,
//! answer-step sweep and per-step prediction traces.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::config::{Datasets, RunConfig};
use super::metrics::append_metrics;
use super::trainer::{train, TrainOutcome};
use crate::data::{TokenizedPair, Vocabulary};
use crate::error::{Result, SanError};
use crate::model::{aggregate_values, Head, Mode, SanModel};
use crate::tensor::argmax;

/// A published full-corpus result, carried for context only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub dataset: String,
    pub split: String,
    pub single_step: Option<f64>,
    pub multi_step: f64,
    pub note: String,
}

const NOT_REPRODUCED: &str = "full-corpus GPU training; not reproduced at desk scale";

/// Published dev accuracies of the one-shot and multi-step heads.
pub fn head_references() -> Vec<Reference> {
    [
        ("MultiNLI matched", 78.69, 79.88),
        ("MultiNLI mismatched", 78.83, 79.91),
        ("SNLI", 88.32, 88.73),
        ("Quora", 89.67, 90.70),
        ("SciTail", 85.46, 89.35),
    ]
    .into_iter()
    .map(|(dataset, single, multi)| Reference {
        dataset: dataset.into(),
        split: "dev".into(),
        single_step: Some(single),
        multi_step: multi,
        note: NOT_REPRODUCED.into(),
    })
    .collect()
}

/// Published test accuracies of the multi-step model.
pub fn test_references() -> Vec<Reference> {
    [
        ("MultiNLI matched", 79.3),
        ("MultiNLI mismatched", 78.7),
        ("SNLI", 88.7),
        ("Quora", 89.4),
        ("SciTail", 88.4),
    ]
    .into_iter()
    .map(|(dataset, acc)| Reference {
        dataset: dataset.into(),
        split: "test".into(),
        single_step: None,
        multi_step: acc,
        note: NOT_REPRODUCED.into(),
    })
    .collect()
}

/// Trains `config` and writes `config.json`, `metrics.jsonl` and `best.ckpt` under `out`.
pub fn run_training(config: &RunConfig, data: &Datasets, out: Option<&Path>) -> Result<TrainOutcome> {
    let metrics = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            config.save(&dir.join("config.json"))?;
            let path = dir.join("metrics.jsonl");
            if path.exists() {
                fs::remove_file(&path)?;
            }
            Some(path)
        }
        None => None,
    };
    let outcome = train(config, data, |r| match &metrics {
        Some(p) => append_metrics(p, r),
        None => Ok(()),
    })?;
    if let Some(dir) = out {
        save_checkpoint(&dir.join("best.ckpt"), &outcome.best, config, &data.vocab)?;
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub single_step_accuracy: f64,
    pub multi_step_accuracy: f64,
    /// Multi-step minus one-shot dev accuracy.
    pub delta: f64,
    pub single_step_best_epoch: usize,
    pub multi_step_best_epoch: usize,
    pub references: Vec<Reference>,
}

/// Trains both heads from the same initial parameters and data order.
pub fn compare_single_vs_multi(config: &RunConfig, data: &Datasets) -> Result<CompareReport> {
    let single = train(
        &RunConfig {
            head: Head::Single,
            ..config.clone()
        },
        data,
        |_| Ok(()),
    )?;
    let multi = train(
        &RunConfig {
            head: Head::Multi,
            ..config.clone()
        },
        data,
        |_| Ok(()),
    )?;
    if !same_parameters(&single.initial, &multi.initial) {
        return Err(SanError::Config("heads started from different parameters".into()));
    }
    Ok(CompareReport {
        seed: config.seed,
        single_step_accuracy: single.best_dev_accuracy,
        multi_step_accuracy: multi.best_dev_accuracy,
        delta: multi.best_dev_accuracy - single.best_dev_accuracy,
        single_step_best_epoch: single.best_epoch,
        multi_step_best_epoch: multi.best_epoch,
        references: head_references(),
    })
}

/// Bitwise equality of every parameter tensor.
pub fn same_parameters(a: &SanModel, b: &SanModel) -> bool {
    a.store.len() == b.store.len()
        && a.store
            .ids()
            .zip(b.store.ids())
            .all(|(x, y)| a.store.name(x) == b.store.name(y) && a.store.get(x) == b.store.get(y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub steps: usize,
    pub dev_accuracy: f64,
    pub best_epoch: usize,
    /// The configured default step count.
    pub is_default: bool,
}

/// Published SciTail dev accuracy at selected step counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReference {
    pub steps: Vec<usize>,
    pub dev_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub references: Vec<SweepReference>,
    pub note: String,
}

pub const DEFAULT_STEPS: usize = 5;

/// One training run per step count, everything else fixed.
pub fn sweep_steps(config: &RunConfig, data: &Datasets, steps: &[usize]) -> Result<SweepReport> {
    if steps.is_empty() {
        return Err(SanError::Empty("step range"));
    }
    let mut rows = Vec::with_capacity(steps.len());
    for &t in steps {
        let mut c = config.clone();
        c.model.steps = t;
        c.head = Head::Multi;
        let outcome = train(&c, data, |_| Ok(()))?;
        rows.push(SweepRow {
            steps: t,
            dev_accuracy: outcome.best_dev_accuracy,
            best_epoch: outcome.best_epoch,
            is_default: t == DEFAULT_STEPS,
        });
    }
    Ok(SweepReport {
        rows,
        references: vec![
            SweepReference {
                steps: vec![2],
                dev_accuracy: 86.7,
            },
            SweepReference {
                steps: vec![5, 6],
                dev_accuracy: 89.4,
            },
        ],
        note: format!("SciTail dev references are annotations only; {NOT_REPRODUCED}"),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub step: usize,
    pub label: String,
    pub distribution: Vec<f64>,
}

/// Evaluation-mode trace of one example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub id: String,
    pub gold: String,
    pub steps: Vec<StepEntry>,
    pub aggregate: Vec<f64>,
    pub prediction: String,
    /// Most frequent per-step label, ties to the lowest label index.
    pub majority: String,
}

pub fn dump_step_predictions(model: &SanModel, vocab: &Vocabulary, pairs: &[TokenizedPair]) -> Result<Vec<StepTrace>> {
    let labels = &vocab.labels;
    pairs
        .iter()
        .map(|p| {
            let out = model.forward(&vocab.index_pair(p), Head::Multi, Mode::Eval)?;
            let mut votes = vec![0.0; labels.len()];
            let steps = out
                .steps
                .iter()
                .enumerate()
                .map(|(t, d)| {
                    let k = argmax(d);
                    votes[k] += 1.0;
                    StepEntry {
                        step: t,
                        label: labels.name(k).to_string(),
                        distribution: d.clone(),
                    }
                })
                .collect();
            let aggregate = aggregate_values(&out.steps, &out.keep)?;
            Ok(StepTrace {
                id: p.id.clone(),
                gold: labels.name(p.label).to_string(),
                steps,
                prediction: labels.name(argmax(&aggregate)).to_string(),
                majority: labels.name(argmax(&votes)).to_string(),
                aggregate,
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}
