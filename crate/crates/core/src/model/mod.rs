//! The stochastic answer network: lexicon, contextual, memory and answer
//! layers over a premise/hypothesis pair, plus a one-shot baseline head that
//! shares the lower layers.
//!
//! Shapes follow the column convention: a sequence of length `L` is a
//! `[features × L]` matrix and vectors are `[n × 1]` columns.

pub mod config;
mod forward;
mod graph;

pub use config::ModelConfig;
pub use forward::{
    aggregate_predictions, aggregate_values, loss, loss_value, sample_step_mask, EncodedPair, Evaluated, Head, Mode,
    StepOutputs, TapeOutputs, LOSS_EPSILON,
};
pub use graph::{Graph, Side};

use crate::error::{Result, SanError};
use crate::nn::params::{normal, xavier};
use crate::nn::{CharCnnParams, EmbeddingTable, FfnParams, GruParams, LstmParams, ParamId, ParamStore, Weight};
use crate::tensor::{RngStream, Tensor};

/// Token ids and per-token character ids for one side of a pair.
///
/// Only the first `length` positions are real tokens; the rest is padding
/// (id 0, chars `[0]`).
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceInput {
    pub ids: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
    pub length: usize,
}

impl SequenceInput {
    pub fn new(ids: Vec<usize>, chars: Vec<Vec<usize>>) -> Self {
        let length = ids.len();
        SequenceInput { ids, chars, length }
    }

    /// Total columns including padding.
    pub fn width(&self) -> usize {
        self.ids.len()
    }

    /// Right-pads to `width` columns.
    pub fn padded(&self, width: usize) -> Self {
        let mut out = self.clone();
        while out.ids.len() < width {
            out.ids.push(0);
            out.chars.push(vec![0]);
        }
        out
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.width()).map(|j| j < self.length).collect()
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        if self.length == 0 || self.ids.is_empty() {
            return Err(SanError::Empty(what));
        }
        if self.length > self.ids.len() || self.chars.len() != self.ids.len() {
            return Err(SanError::shape(
                what,
                &[self.ids.len(), self.chars.len()],
                format!("length {} with {} char lists", self.length, self.chars.len()),
            ));
        }
        Ok(())
    }
}

/// Model input for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct PairInput {
    pub premise: SequenceInput,
    pub hypothesis: SequenceInput,
}

impl PairInput {
    pub fn validate(&self) -> Result<()> {
        self.premise.validate("premise")?;
        self.hypothesis.validate("hypothesis")
    }
}

/// Where each parameter of the network lives in the [`ParamStore`].
#[derive(Clone, Debug)]
pub struct SanLayout {
    pub embedding: EmbeddingTable,
    pub chars: CharCnnParams,
    pub premise_ffn: FfnParams,
    pub hypothesis_ffn: FfnParams,
    /// Two stacked layers of (forward, backward) cells, shared by both sides.
    pub context: [(LstmParams, LstmParams); 2],
    /// Shared projection `W₃` in `relu(W₃·C)`.
    pub attention: Weight,
    pub memory: (LstmParams, LstmParams),
    /// `θ₂ [2h × 1]`: hypothesis summary scores.
    pub summary: ParamId,
    /// `θ₃ [2h × 2h]`: bilinear read of premise memory.
    pub bilinear: ParamId,
    /// `θ₄ [labels × 8h]`
    pub classifier: ParamId,
    pub gru: GruParams,
    /// `w [2h × 1]`: one-shot baseline read of premise memory.
    pub baseline: ParamId,
}

impl SanLayout {
    /// Parameters that a head never touches.
    pub fn unused_by(&self, head: Head) -> Vec<ParamId> {
        match head {
            Head::Multi => vec![self.baseline],
            Head::Single => {
                let mut ids = vec![self.bilinear];
                ids.extend(self.gru.ids());
                ids
            }
        }
    }

    /// Parameters below the answer layer, identical for both heads.
    pub fn lower_layer_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embedding.table];
        ids.extend(self.chars.ids());
        ids.extend(self.premise_ffn.ids());
        ids.extend(self.hypothesis_ffn.ids());
        for (f, b) in self.context.iter().chain(std::iter::once(&self.memory)) {
            ids.extend(f.ids());
            ids.extend(b.ids());
        }
        ids.extend(self.attention.ids());
        ids
    }
}

/// Configuration, parameter values and their layout.
#[derive(Clone, Debug)]
pub struct SanModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub layout: SanLayout,
}

impl SanModel {
    /// Initialises every parameter from `rng`.
    ///
    /// `embeddings` is the `[vocab × word_dim]` word table; when absent a
    /// Gaussian table is drawn. Row 0 is zeroed either way.
    pub fn new(
        config: ModelConfig,
        vocab: usize,
        char_vocab: usize,
        embeddings: Option<Tensor>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        config.validate()?;
        if vocab == 0 {
            return Err(SanError::Config("word vocabulary is empty".into()));
        }
        let c = &config;
        let h = c.hidden;
        let mut store = ParamStore::new();
        let table = match embeddings {
            Some(t) => {
                if t.shape() != [vocab, c.word_dim] {
                    return Err(SanError::dim("embeddings", t.shape(), &[vocab, c.word_dim]));
                }
                t
            }
            None => normal(&[vocab, c.word_dim], 0.5, rng),
        };
        let embedding = EmbeddingTable::register(&mut store, "embedding", table, !c.train_embeddings);
        let chars = CharCnnParams::init(
            &mut store,
            "chars",
            char_vocab,
            c.char_dim,
            &c.char_windows,
            &c.char_channels,
            rng,
        )?;
        let lex_in = c.word_dim + c.char_width();
        let premise_ffn = FfnParams::init(&mut store, "lexicon.premise", lex_in, c.lexicon_dim, c.weight_norm, rng);
        let hypothesis_ffn = FfnParams::init(
            &mut store,
            "lexicon.hypothesis",
            lex_in,
            c.lexicon_dim,
            c.weight_norm,
            rng,
        );
        if c.shared_lexicon_init {
            for (a, b) in premise_ffn.ids().into_iter().zip(hypothesis_ffn.ids()) {
                let v = store.get(a).clone();
                store.set(b, v)?;
            }
        }
        let mut lstm = |store: &mut ParamStore, name: &str, input: usize| {
            (
                LstmParams::init(store, &format!("{name}.fwd"), input, h, rng),
                LstmParams::init(store, &format!("{name}.bwd"), input, h, rng),
            )
        };
        let context = [
            lstm(&mut store, "context.0", c.lexicon_dim),
            lstm(&mut store, "context.1", h),
        ];
        let memory = lstm(&mut store, "memory", 6 * h);
        let d = c.memory_dim();
        let attention = Weight::init(&mut store, "attention", c.attention_dim, d, c.weight_norm, rng);
        let summary = store.add("answer.summary", xavier(d, 1, rng), true);
        let bilinear = store.add("answer.bilinear", xavier(d, d, rng), true);
        let classifier = store.add(
            "answer.classifier",
            xavier(c.num_labels, c.classifier_input_dim(), rng),
            true,
        );
        let gru = GruParams::init(&mut store, "answer.gru", d, rng);
        let baseline = store.add("baseline.read", xavier(d, 1, rng), true);
        Ok(SanModel {
            config,
            store,
            layout: SanLayout {
                embedding,
                chars,
                premise_ffn,
                hypothesis_ffn,
                context,
                attention,
                memory,
                summary,
                bilinear,
                classifier,
                gru,
                baseline,
            },
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.layout.embedding.vocab
    }

    pub fn char_vocab_size(&self) -> usize {
        self.store.get(self.layout.chars.table).shape()[0]
    }
}
