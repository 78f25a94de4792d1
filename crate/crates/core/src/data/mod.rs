//! Text preprocessing, vocabularies, corpus readers, batching and the
//! synthetic entailment task.

pub mod batch;
pub mod cache;
pub mod embeddings;
pub mod readers;
pub mod synthetic;
pub mod tokenize;

pub use batch::{make_batches, Batch};
pub use cache::{read_cache, write_cache};
pub use embeddings::load_embeddings;
pub use readers::{read_snli_jsonl, read_tsv_pairs, ReadOutcome, TsvSchema};
pub use synthetic::{oracle_label, SyntheticTask, SyntheticTaskSpec};
pub use tokenize::tokenize;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SanError};
use crate::model::{PairInput, SequenceInput};

/// One labelled premise/hypothesis pair after tokenization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedPair {
    pub id: String,
    pub premise: Vec<String>,
    pub hypothesis: Vec<String>,
    pub label: usize,
}

impl TokenizedPair {
    pub fn validate(&self, num_labels: usize) -> Result<()> {
        if self.premise.is_empty() {
            return Err(SanError::Empty("premise"));
        }
        if self.hypothesis.is_empty() {
            return Err(SanError::Empty("hypothesis"));
        }
        if self.label >= num_labels {
            return Err(SanError::OutOfRange {
                what: "label",
                index: self.label,
                size: num_labels,
            });
        }
        Ok(())
    }
}

/// Ordered label names; a label's index is its position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(pub Vec<String>);

impl LabelSet {
    pub fn three_way() -> Self {
        LabelSet(vec!["entailment".into(), "neutral".into(), "contradiction".into()])
    }

    pub fn two_way() -> Self {
        LabelSet(vec!["entails".into(), "neutral".into()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.0
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| SanError::UnknownLabel {
                label: label.to_string(),
            })
    }

    pub fn name(&self, index: usize) -> &str {
        &self.0[index]
    }
}

/// Token and character indices; index 0 stands for unknown or padding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    chars: Vec<char>,
    pub labels: LabelSet,
    #[serde(skip)]
    token_index: HashMap<String, usize>,
    #[serde(skip)]
    char_index: HashMap<char, usize>,
}

pub const UNKNOWN_TOKEN: &str = "<unk>";

impl Vocabulary {
    /// Indexes tokens and characters in order of first appearance.
    pub fn build<'a>(pairs: impl IntoIterator<Item = &'a TokenizedPair>, labels: LabelSet) -> Self {
        let mut tokens = vec![UNKNOWN_TOKEN.to_string()];
        let mut chars = vec!['\0'];
        let mut seen_tokens = HashSet::new();
        let mut seen_chars = HashSet::new();
        for p in pairs {
            for t in p.premise.iter().chain(&p.hypothesis) {
                if seen_tokens.insert(t.clone()) {
                    tokens.push(t.clone());
                    chars.extend(t.chars().filter(|&c| seen_chars.insert(c)));
                }
            }
        }
        Vocabulary::from_parts(tokens, chars, labels)
    }

    pub fn from_parts(tokens: Vec<String>, chars: Vec<char>, labels: LabelSet) -> Self {
        let mut v = Vocabulary {
            tokens,
            chars,
            labels,
            token_index: HashMap::new(),
            char_index: HashMap::new(),
        };
        v.reindex();
        v
    }

    /// Rebuilds the lookup maps; needed after deserialization.
    pub fn reindex(&mut self) {
        self.token_index = self
            .tokens
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        self.char_index = self.chars.iter().enumerate().skip(1).map(|(i, &c)| (c, i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn char_len(&self) -> usize {
        self.chars.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.token_index.get(token).copied().unwrap_or(0)
    }

    pub fn char_ids(&self, token: &str) -> Vec<usize> {
        let ids: Vec<usize> = token
            .chars()
            .map(|c| self.char_index.get(&c).copied().unwrap_or(0))
            .collect();
        if ids.is_empty() {
            vec![0]
        } else {
            ids
        }
    }

    pub fn index_sequence(&self, tokens: &[String]) -> SequenceInput {
        SequenceInput::new(
            tokens.iter().map(|t| self.token_id(t)).collect(),
            tokens.iter().map(|t| self.char_ids(t)).collect(),
        )
    }

    pub fn index_pair(&self, pair: &TokenizedPair) -> PairInput {
        PairInput {
            premise: self.index_sequence(&pair.premise),
            hypothesis: self.index_sequence(&pair.hypothesis),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(p: &str, h: &str, label: usize) -> TokenizedPair {
        TokenizedPair {
            id: "x".into(),
            premise: tokenize(p),
            hypothesis: tokenize(h),
            label,
        }
    }

    #[test]
    fn vocabulary_reserves_zero_for_unknowns() {
        let v = Vocabulary::build([&pair("a cat sat", "the cat", 0)], LabelSet::three_way());
        assert_eq!(v.tokens(), ["<unk>", "a", "cat", "sat", "the"]);
        assert_eq!(v.token_id("cat"), 2);
        assert_eq!(v.token_id("dog"), 0);
        assert_eq!(v.char_ids("cz"), vec![v.char_ids("c")[0], 0]);
        let input = v.index_pair(&pair("a dog", "cat", 0));
        assert_eq!(input.premise.ids, vec![1, 0]);
        assert_eq!(input.hypothesis.length, 1);
    }

    #[test]
    fn serialized_vocabulary_round_trips() {
        let v = Vocabulary::build([&pair("a cat sat", "the cat", 0)], LabelSet::two_way());
        let mut back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        back.reindex();
        assert_eq!(v, back);
    }

    #[test]
    fn label_lookup() {
        let l = LabelSet::three_way();
        assert_eq!(l.index("contradiction").unwrap(), 2);
        assert!(matches!(l.index("maybe"), Err(SanError::UnknownLabel { .. })));
        assert_eq!(LabelSet::two_way().index("neutral").unwrap(), 1);
    }

    #[test]
    fn pair_validation() {
        assert!(pair("a", "b", 2).validate(3).is_ok());
        assert!(pair("a", "b", 3).validate(3).is_err());
        assert!(pair("", "b", 0).validate(3).is_err());
    }
}
