//! A synthetic three-way entailment task over pseudo-word attributes.
//!
//! The attribute vocabulary holds `vocab_size / 2` base words, grouped into
//! opposite pairs `(b₂ₖ, b₂ₖ₊₁)`, and one synonym word per base. Premises list
//! base words, at most one from each opposite pair. Hypotheses list synonym
//! words. A hypothesis word
//! - entails when its base is in the premise,
//! - contradicts when the opposite of its base is in the premise,
//! - is unrelated otherwise.
//!
//! The pair label is contradiction if any word contradicts, else neutral if
//! any word is unrelated, else entailment.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use rand_distr::{Distribution, Normal};

use super::{LabelSet, TokenizedPair, Vocabulary};
use crate::error::{Result, SanError};
use crate::tensor::{RngStream, Tensor};

pub const ENTAILMENT: usize = 0;
pub const NEUTRAL: usize = 1;
pub const CONTRADICTION: usize = 2;

const TOPIC_STD: f64 = 2.0;
const POLARITY_STD: f64 = 2.5;
const WORD_STD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTaskSpec {
    /// Base plus synonym words; a multiple of 4.
    pub vocab_size: usize,
    pub premise_len: (usize, usize),
    pub hypothesis_len: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        SyntheticTaskSpec {
            vocab_size: 40,
            premise_len: (2, 4),
            hypothesis_len: (1, 2),
            seed: 17,
        }
    }
}

/// A realised task: word lists and relation maps for one spec.
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub spec: SyntheticTaskSpec,
    bases: Vec<String>,
    synonyms: Vec<String>,
}

fn pseudo_word(rng: &mut RngStream) -> String {
    const ONSETS: &[&str] = &[
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
    ];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
    let syllables = rng.random_range(2..=3);
    (0..syllables)
        .map(|_| {
            let onset = ONSETS[rng.random_range(0..ONSETS.len())];
            let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
            format!("{onset}{vowel}")
        })
        .collect()
}

impl SyntheticTask {
    pub fn new(spec: SyntheticTaskSpec) -> Result<Self> {
        let (pmin, pmax) = spec.premise_len;
        let (hmin, hmax) = spec.hypothesis_len;
        if !spec.vocab_size.is_multiple_of(4) || spec.vocab_size == 0 {
            return Err(SanError::Config(format!(
                "synthetic vocab size {} must be a positive multiple of 4",
                spec.vocab_size
            )));
        }
        if pmin == 0 || pmin > pmax || hmin == 0 || hmin > hmax {
            return Err(SanError::Config(
                "synthetic length ranges must be non-empty and positive".into(),
            ));
        }
        let pairs = spec.vocab_size / 4;
        if pairs <= pmax {
            return Err(SanError::Config(format!(
                "{pairs} opposite pairs cannot leave an unrelated pair beside premises of {pmax} words; \
                 need vocab size ≥ {}",
                4 * (pmax + 1)
            )));
        }
        let mut rng = RngStream::new(spec.seed).fork(0);
        let mut seen = HashSet::new();
        let mut words = Vec::with_capacity(spec.vocab_size);
        while words.len() < spec.vocab_size {
            let w = pseudo_word(&mut rng);
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let synonyms = words.split_off(spec.vocab_size / 2);
        Ok(SyntheticTask {
            spec,
            bases: words,
            synonyms,
        })
    }

    pub fn labels() -> LabelSet {
        LabelSet::three_way()
    }

    pub fn bases(&self) -> &[String] {
        &self.bases
    }

    pub fn synonym_words(&self) -> &[String] {
        &self.synonyms
    }

    /// Base word → its synonym.
    pub fn synonym_map(&self) -> HashMap<String, String> {
        self.bases.iter().cloned().zip(self.synonyms.iter().cloned()).collect()
    }

    /// Base word → the synonym of its opposite.
    pub fn antonym_map(&self) -> HashMap<String, String> {
        (0..self.bases.len())
            .map(|i| (self.bases[i].clone(), self.synonyms[i ^ 1].clone()))
            .collect()
    }

    /// Deterministic examples for `(seed, stream)` with labels cycling
    /// entailment, neutral, contradiction.
    pub fn generate(&self, count: usize, stream: u64) -> Vec<TokenizedPair> {
        let mut rng = RngStream::new(self.spec.seed).fork(stream + 1);
        (0..count).map(|i| self.sample(i, i % 3, &mut rng)).collect()
    }

    fn sample(&self, index: usize, label: usize, rng: &mut RngStream) -> TokenizedPair {
        let (pmin, pmax) = self.spec.premise_len;
        let (hmin, hmax) = self.spec.hypothesis_len;
        let pairs = self.bases.len() / 2;
        let mut order: Vec<usize> = (0..pairs).collect();
        order.shuffle(rng);
        let k = rng.random_range(pmin..=pmax);
        let premise: Vec<usize> = order[..k].iter().map(|&p| 2 * p + rng.random_range(0..2)).collect();
        let unused = &order[k..];
        let len = rng.random_range(hmin..=hmax);
        // Hypothesis entries are base indices whose synonyms are emitted.
        let mut hyp: Vec<usize> = match label {
            ENTAILMENT => {
                let mut chosen = premise.clone();
                chosen.shuffle(rng);
                chosen.truncate(len.min(k));
                chosen
            }
            NEUTRAL => {
                let mut h = vec![2 * unused[rng.random_range(0..unused.len())] + rng.random_range(0..2)];
                while h.len() < len {
                    h.push(if rng.random_bool(0.5) {
                        premise[rng.random_range(0..k)]
                    } else {
                        2 * unused[rng.random_range(0..unused.len())] + rng.random_range(0..2)
                    });
                }
                h
            }
            _ => {
                let mut h = vec![premise[rng.random_range(0..k)] ^ 1];
                while h.len() < len {
                    h.push(rng.random_range(0..self.bases.len()));
                }
                h
            }
        };
        hyp.shuffle(rng);
        TokenizedPair {
            id: format!("synth-{}-{index}", self.spec.seed),
            premise: premise.iter().map(|&b| self.bases[b].clone()).collect(),
            hypothesis: hyp.iter().map(|&b| self.synonyms[b].clone()).collect(),
            label,
        }
    }

    /// A stand-in for pretrained vectors, `[vocab.len() × dim]`.
    ///
    /// Both words of an opposite pair share a topic vector and differ by the
    /// sign of a polarity vector; a synonym is its base word plus small noise.
    /// Row 0 and tokens outside the task stay zero.
    pub fn embedding_table(&self, vocab: &Vocabulary, dim: usize) -> Tensor {
        let mut rng = RngStream::new(self.spec.seed).fork(u64::MAX);
        let mut draw = |std: f64| -> Vec<f64> {
            let d = Normal::new(0.0, std).expect("positive std");
            (0..dim).map(|_| d.sample(&mut rng)).collect()
        };
        let mut table = vec![0.0; vocab.len() * dim];
        for k in 0..self.bases.len() / 2 {
            let topic = draw(TOPIC_STD);
            let polarity = draw(POLARITY_STD);
            for side in 0..2 {
                let sign = if side == 0 { 1.0 } else { -1.0 };
                let i = 2 * k + side;
                let base: Vec<f64> = topic
                    .iter()
                    .zip(&polarity)
                    .zip(draw(WORD_STD))
                    .map(|((t, p), n)| t + sign * p + n)
                    .collect();
                let synonym: Vec<f64> = base.iter().zip(draw(WORD_STD)).map(|(b, n)| b + n).collect();
                for (word, row) in [(&self.bases[i], base), (&self.synonyms[i], synonym)] {
                    let id = vocab.token_id(word);
                    if id != 0 {
                        table[id * dim..(id + 1) * dim].copy_from_slice(&row);
                    }
                }
            }
        }
        Tensor::new(&[vocab.len(), dim], table).expect("sized above")
    }

    /// Labels a pair from the relation maps alone.
    pub fn oracle(&self, pair: &TokenizedPair) -> usize {
        oracle_label(
            &pair.premise,
            &pair.hypothesis,
            &self.synonym_map(),
            &self.antonym_map(),
        )
    }
}

/// Rule-based labeler: contradiction beats neutral beats entailment.
pub fn oracle_label(
    premise: &[String],
    hypothesis: &[String],
    synonyms: &HashMap<String, String>,
    antonyms: &HashMap<String, String>,
) -> usize {
    let entailed: HashSet<&str> = premise
        .iter()
        .filter_map(|p| synonyms.get(p))
        .map(String::as_str)
        .collect();
    let contradicted: HashSet<&str> = premise
        .iter()
        .filter_map(|p| antonyms.get(p))
        .map(String::as_str)
        .collect();
    if hypothesis.iter().any(|h| contradicted.contains(h.as_str())) {
        CONTRADICTION
    } else if hypothesis.iter().any(|h| !entailed.contains(h.as_str())) {
        NEUTRAL
    } else {
        ENTAILMENT
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn oracle_rules_on_named_words() {
        let synonyms: HashMap<String, String> = [("red", "crimson"), ("big", "large"), ("small", "little")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let antonyms: HashMap<String, String> = [("big", "little"), ("small", "large")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let premise = s(&["red", "round", "big"]);
        assert_eq!(
            oracle_label(&premise, &s(&["crimson"]), &synonyms, &antonyms),
            ENTAILMENT
        );
        assert_eq!(
            oracle_label(&premise, &s(&["little"]), &synonyms, &antonyms),
            CONTRADICTION
        );
        assert_eq!(
            oracle_label(&premise, &s(&["crimson", "azure"]), &synonyms, &antonyms),
            NEUTRAL
        );
        assert_eq!(
            oracle_label(&premise, &s(&["azure", "little"]), &synonyms, &antonyms),
            CONTRADICTION
        );
    }

    #[test]
    fn maps_are_disjoint_and_words_unique() {
        let t = SyntheticTask::new(SyntheticTaskSpec::default()).unwrap();
        let syn = t.synonym_map();
        let ant = t.antonym_map();
        assert_eq!(syn.len(), 20);
        for b in t.bases() {
            assert_ne!(syn[b], ant[b]);
        }
        let all: HashSet<_> = t.bases().iter().chain(t.synonym_words()).collect();
        assert_eq!(all.len(), 40);
    }

    #[test]
    fn generator_is_deterministic_balanced_and_in_range() {
        let t = SyntheticTask::new(SyntheticTaskSpec::default()).unwrap();
        let a = t.generate(3000, 0);
        assert_eq!(a, t.generate(3000, 0));
        assert_ne!(a[..10], t.generate(10, 1)[..]);
        let mut counts = [0usize; 3];
        for p in &a {
            counts[p.label] += 1;
            assert!((2..=4).contains(&p.premise.len()));
            assert!((1..=2).contains(&p.hypothesis.len()));
            assert_eq!(t.oracle(p), p.label, "{p:?}");
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn embedding_geometry_follows_the_relations() {
        let t = SyntheticTask::new(SyntheticTaskSpec::default()).unwrap();
        let pairs = t.generate(300, 0);
        let vocab = Vocabulary::build(&pairs, LabelSet::three_way());
        let e = t.embedding_table(&vocab, 16);
        assert_eq!(e.shape(), [vocab.len(), 16]);
        let row = |w: &str| e.data()[vocab.token_id(w) * 16..][..16].to_vec();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let (b, s) = (t.bases(), t.synonym_words());
        let mut closer = 0;
        for i in 0..b.len() {
            if dist(&row(&b[i]), &row(&s[i])) < dist(&row(&b[i]), &row(&s[i ^ 1])) {
                closer += 1;
            }
        }
        assert_eq!(closer, b.len());
        assert!(e.data()[..16].iter().all(|&v| v == 0.0));
        assert_eq!(e, t.embedding_table(&vocab, 16));
    }

    #[test]
    fn too_small_vocab_is_a_config_error() {
        for vocab_size in [16, 30, 0] {
            let spec = SyntheticTaskSpec {
                vocab_size,
                ..Default::default()
            };
            assert!(matches!(SyntheticTask::new(spec), Err(SanError::Config(_))));
        }
    }
}
