//! Readers for the benchmark corpus formats.
//!
//! Every reader accounts for each input line exactly once:
//! `pairs.len() + skipped == lines`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{tokenize, LabelSet, TokenizedPair};
use crate::error::{Result, SanError};

/// Records read from one file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReadOutcome {
    pub pairs: Vec<TokenizedPair>,
    /// Headers, blank lines, unlabelled records and records with an empty side.
    pub skipped: usize,
    pub lines: usize,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> SanError {
    SanError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Builds a pair, or `None` when either side tokenizes to nothing.
fn make_pair(id: String, premise: &str, hypothesis: &str, label: usize) -> Option<TokenizedPair> {
    let premise = tokenize(premise);
    let hypothesis = tokenize(hypothesis);
    (!premise.is_empty() && !hypothesis.is_empty()).then_some(TokenizedPair {
        id,
        premise,
        hypothesis,
        label,
    })
}

/// One JSON object per line with `gold_label`, `sentence1`, `sentence2` and
/// optionally `pairID`. Records labelled `-` carry no consensus and are skipped.
pub fn read_snli_jsonl(path: &Path, labels: &LabelSet) -> Result<ReadOutcome> {
    let text = fs::read_to_string(path)?;
    let mut out = ReadOutcome::default();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        out.lines += 1;
        if line.trim().is_empty() {
            out.skipped += 1;
            continue;
        }
        let record: Value = serde_json::from_str(line).map_err(|e| parse_error(path, n, e.to_string()))?;
        let field = |name: &str| -> Result<&str> {
            record
                .get(name)
                .and_then(Value::as_str)
                .ok_or_else(|| parse_error(path, n, format!("missing string field {name:?}")))
        };
        let gold = field("gold_label")?;
        if gold == "-" {
            out.skipped += 1;
            continue;
        }
        let label = labels.index(gold)?;
        let id = record
            .get("pairID")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("line-{n}"));
        match make_pair(id, field("sentence1")?, field("sentence2")?, label) {
            Some(p) => out.pairs.push(p),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

/// Column layout of a tab-separated pair corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsvSchema {
    pub columns: usize,
    pub id_column: Option<usize>,
    pub premise_column: usize,
    pub hypothesis_column: usize,
    pub label_column: usize,
    /// Raw label value → label name in [`TsvSchema::label_set`].
    pub label_values: Vec<(String, String)>,
    pub label_set: LabelSet,
}

impl TsvSchema {
    /// `id qid1 qid2 question1 question2 is_duplicate`; duplicates entail.
    pub fn quora() -> Self {
        TsvSchema {
            columns: 6,
            id_column: Some(0),
            premise_column: 3,
            hypothesis_column: 4,
            label_column: 5,
            label_values: vec![("1".into(), "entails".into()), ("0".into(), "neutral".into())],
            label_set: LabelSet::two_way(),
        }
    }

    /// `premise hypothesis label` with labels `entails` / `neutral`.
    pub fn scitail() -> Self {
        TsvSchema {
            columns: 3,
            id_column: None,
            premise_column: 0,
            hypothesis_column: 1,
            label_column: 2,
            label_values: vec![
                ("entails".into(), "entails".into()),
                ("neutral".into(), "neutral".into()),
            ],
            label_set: LabelSet::two_way(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "quora" => Ok(Self::quora()),
            "scitail" => Ok(Self::scitail()),
            other => Err(SanError::Config(format!("unknown tsv schema {other:?}"))),
        }
    }

    fn label(&self, raw: &str) -> Option<&str> {
        self.label_values
            .iter()
            .find(|(v, _)| v == raw)
            .map(|(_, name)| name.as_str())
    }

    /// A first line is a header when its id is not numeric, or, without an
    /// id column, when its label value is not a known one.
    fn is_header(&self, fields: &[&str]) -> bool {
        match self.id_column {
            Some(c) => fields.get(c).is_none_or(|f| f.trim().parse::<u64>().is_err()),
            None => fields
                .get(self.label_column)
                .is_none_or(|f| self.label(f.trim()).is_none()),
        }
    }
}

pub fn read_tsv_pairs(path: &Path, schema: &TsvSchema) -> Result<ReadOutcome> {
    let text = fs::read_to_string(path)?;
    let mut out = ReadOutcome::default();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        out.lines += 1;
        if line.trim().is_empty() {
            out.skipped += 1;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if i == 0 && schema.is_header(&fields) {
            out.skipped += 1;
            continue;
        }
        if fields.len() != schema.columns {
            return Err(parse_error(
                path,
                n,
                format!(
                    "expected {} tab-separated columns, found {}",
                    schema.columns,
                    fields.len()
                ),
            ));
        }
        let raw = fields[schema.label_column].trim();
        let name = schema
            .label(raw)
            .ok_or_else(|| SanError::UnknownLabel { label: raw.to_string() })?;
        let label = schema.label_set.index(name)?;
        let id = match schema.id_column {
            Some(c) => fields[c].trim().to_string(),
            None => format!("line-{n}"),
        };
        match make_pair(
            id,
            fields[schema.premise_column],
            fields[schema.hypothesis_column],
            label,
        ) {
            Some(p) => out.pairs.push(p),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}
