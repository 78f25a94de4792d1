use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Accuracy, loss and confusion counts of one split after one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[gold][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub learning_rate: f64,
    pub wall_time_secs: f64,
}

impl MetricsRecord {
    /// Same record with the wall-clock field cleared, for bitwise comparisons.
    pub fn without_time(&self) -> Self {
        MetricsRecord {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Running totals for one pass over a split.
#[derive(Clone, Debug, PartialEq)]
pub struct Tally {
    pub confusion: Vec<Vec<usize>>,
    pub loss_sum: f64,
}

impl Tally {
    pub fn new(labels: usize) -> Self {
        Tally {
            confusion: vec![vec![0; labels]; labels],
            loss_sum: 0.0,
        }
    }

    pub fn add(&mut self, gold: usize, predicted: usize, loss: f64) {
        self.confusion[gold][predicted] += 1;
        self.loss_sum += loss;
    }

    pub fn count(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// `trace(confusion) / sum(confusion)`
    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        correct as f64 / self.count().max(1) as f64
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.count().max(1) as f64
    }

    pub fn record(&self, epoch: usize, split: &str, learning_rate: f64, wall_time_secs: f64) -> MetricsRecord {
        MetricsRecord {
            epoch,
            split: split.to_string(),
            accuracy: self.accuracy(),
            mean_loss: self.mean_loss(),
            confusion: self.confusion.clone(),
            learning_rate,
            wall_time_secs,
        }
    }
}

/// Appends one JSON object per line.
pub fn append_metrics(path: &Path, record: &MetricsRecord) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(record)?)?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    BufReader::new(File::open(path)?)
        .lines()
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_is_trace_over_total() {
        let mut t = Tally::new(3);
        for (g, p) in [(0, 0), (0, 1), (1, 1), (2, 2), (2, 0)] {
            t.add(g, p, 1.0);
        }
        assert_eq!(t.count(), 5);
        assert!((t.accuracy() - 0.6).abs() < 1e-15);
        let r = t.record(0, "dev", 0.002, 0.0);
        let rows: Vec<usize> = r.confusion.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(rows, [2, 1, 2]);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut t = Tally::new(2);
        t.add(1, 1, 0.25);
        let records = [t.record(0, "train", 0.002, 1.5), t.record(1, "dev", 0.001, 2.0)];
        for r in &records {
            append_metrics(&path, r).unwrap();
        }
        assert_eq!(read_metrics(&path).unwrap(), records);
    }
}
