use serde::{Deserialize, Serialize};

use crate::error::{Result, SanError};

/// Architecture and regularisation settings of the answer network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Encoder hidden size `h`; memory rows and answer state are `2h`.
    pub hidden: usize,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_windows: Vec<usize>,
    pub char_channels: Vec<usize>,
    /// Width of the lexicon FFN outputs.
    pub lexicon_dim: usize,
    /// Width of the shared attention projection.
    pub attention_dim: usize,
    /// Number of answer steps `T`.
    pub steps: usize,
    pub dropout: f64,
    pub prediction_dropout: f64,
    pub num_labels: usize,
    pub weight_norm: bool,
    pub train_embeddings: bool,
    /// Start the hypothesis lexicon network as a copy of the premise one.
    pub shared_lexicon_init: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            word_dim: 300,
            char_dim: 20,
            char_windows: vec![1, 3, 5],
            char_channels: vec![50, 100, 150],
            lexicon_dim: 600,
            attention_dim: 256,
            steps: 5,
            dropout: 0.2,
            prediction_dropout: 0.2,
            num_labels: 3,
            weight_norm: true,
            train_embeddings: false,
            shared_lexicon_init: false,
        }
    }
}

impl ModelConfig {
    /// Small widths for single-core training runs on the synthetic task.
    pub fn desk() -> Self {
        ModelConfig {
            hidden: 16,
            word_dim: 16,
            char_dim: 8,
            char_windows: vec![1],
            char_channels: vec![1],
            lexicon_dim: 32,
            attention_dim: 32,
            dropout: 0.0,
            weight_norm: false,
            shared_lexicon_init: true,
            ..ModelConfig::default()
        }
    }

    /// Minimal widths for finite-difference checks.
    pub fn tiny() -> Self {
        ModelConfig {
            hidden: 4,
            word_dim: 5,
            char_dim: 3,
            char_windows: vec![1, 3],
            char_channels: vec![2, 3],
            lexicon_dim: 6,
            attention_dim: 5,
            steps: 3,
            ..ModelConfig::default()
        }
    }

    pub fn char_width(&self) -> usize {
        self.char_channels.iter().sum()
    }

    /// Rows of the memory matrices and of the answer state.
    pub fn memory_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `[s; x; |s−x|; s⊙x]`
    pub fn classifier_input_dim(&self) -> usize {
        4 * self.memory_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SanError::Config(m));
        if self.hidden == 0 || !self.hidden.is_multiple_of(2) {
            return fail(format!("hidden size {} must be positive and even", self.hidden));
        }
        for (name, v) in [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("lexicon_dim", self.lexicon_dim),
            ("attention_dim", self.attention_dim),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.steps == 0 {
            return fail("answer steps must be at least 1".into());
        }
        for (name, r) in [
            ("dropout", self.dropout),
            ("prediction_dropout", self.prediction_dropout),
        ] {
            if !(0.0..1.0).contains(&r) {
                return fail(format!("{name} {r} must lie in [0, 1)"));
            }
        }
        if self.num_labels < 2 {
            return fail(format!("need at least 2 labels, got {}", self.num_labels));
        }
        if self.char_windows.is_empty()
            || self.char_windows.len() != self.char_channels.len()
            || self.char_windows.contains(&0)
            || self.char_channels.contains(&0)
        {
            return fail("char windows and channels must be non-empty, positive and paired".into());
        }
        Ok(())
    }
}
