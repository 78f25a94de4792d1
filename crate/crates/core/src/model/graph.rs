//! Per-layer computations recorded on a tape.
//!
//! `rng` arguments select the mode: `Some` samples dropout masks (training),
//! `None` runs the deterministic evaluation path.

use super::{SanLayout, SequenceInput};
use crate::error::{Result, SanError};
use crate::model::ModelConfig;
use crate::nn::{
    bilstm_layer, char_cnn_encode, embed_lookup, ffn_forward, gru_step, maxout_shrink, BiMasks, Bound, LstmParams,
};
use crate::tensor::{dropout_mask, RngStream, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Premise,
    Hypothesis,
}

/// A model bound to one tape.
#[derive(Clone, Copy)]
pub struct Graph<'a> {
    pub tape: &'a Tape,
    pub bound: &'a Bound,
    pub config: &'a ModelConfig,
    pub layout: &'a SanLayout,
}

impl<'a> Graph<'a> {
    fn dropout(&self, x: Var, rng: Option<&mut RngStream>) -> Result<Var> {
        match rng {
            Some(rng) => self.tape.dropout(x, self.config.dropout, rng),
            None => Ok(x),
        }
    }

    fn bilstm(
        &self,
        cells: &(LstmParams, LstmParams),
        x: Var,
        length: usize,
        mut rng: Option<&mut RngStream>,
    ) -> Result<Var> {
        let x = self.dropout(x, rng.as_deref_mut())?;
        let masks = match rng {
            Some(rng) => Some(BiMasks::sample(self.config.hidden, self.config.dropout, rng)?),
            None => None,
        };
        Ok(bilstm_layer(self.tape, self.bound, &cells.0, &cells.1, x, length, masks.as_ref())?.output)
    }

    /// Word embedding stacked on the char-CNN encoding, through the side's FFN.
    /// Returns `E [lexicon_dim × L]`.
    pub fn lexicon_encode(&self, side: Side, seq: &SequenceInput) -> Result<Var> {
        if seq.ids.is_empty() {
            return Err(SanError::Empty("token sequence"));
        }
        if seq.chars.len() != seq.ids.len() {
            return Err(SanError::dim("lexicon_encode", &[seq.ids.len()], &[seq.chars.len()]));
        }
        let l = self.layout;
        let words = embed_lookup(self.tape, self.bound, &l.embedding, &seq.ids)?;
        let chars: Vec<Var> = seq
            .chars
            .iter()
            .map(|c| char_cnn_encode(self.tape, self.bound, &l.chars, c))
            .collect::<Result<_>>()?;
        let chars = self.tape.concat(&chars, 1)?;
        let x = self.tape.concat(&[words, chars], 0)?;
        let ffn = match side {
            Side::Premise => &l.premise_ffn,
            Side::Hypothesis => &l.hypothesis_ffn,
        };
        ffn_forward(self.tape, self.bound, ffn, x)
    }

    /// Two stacked BiLSTMs, each maxout-shrunk to `h` rows; `C [2h × L]` stacks both.
    pub fn contextual_encode(&self, e: Var, length: usize, mut rng: Option<&mut RngStream>) -> Result<Var> {
        let [first, second] = &self.layout.context;
        let h1 = maxout_shrink(self.tape, self.bilstm(first, e, length, rng.as_deref_mut())?, 2)?;
        let h2 = maxout_shrink(self.tape, self.bilstm(second, h1, length, rng)?, 2)?;
        self.tape.concat(&[h1, h2], 0)
    }

    /// `A [m × n]`: each premise row is a distribution over the first
    /// `hyp_length` hypothesis positions.
    ///
    /// Training drops entries of `A` and renormalises each row over the
    /// survivors; a row that would lose every entry is left undropped.
    pub fn attention_align(&self, c_p: Var, c_h: Var, hyp_length: usize, rng: Option<&mut RngStream>) -> Result<Var> {
        let rows_p = self.tape.shape(c_p);
        let rows_h = self.tape.shape(c_h);
        if rows_p.len() != 2 || rows_h.len() != 2 || rows_p[0] != rows_h[0] {
            return Err(SanError::dim("attention_align", &rows_p, &rows_h));
        }
        let (m, n) = (rows_p[1], rows_h[1]);
        if hyp_length == 0 || hyp_length > n {
            return Err(SanError::FullyMasked("attention_align"));
        }
        let w3 = self.layout.attention.resolve(self.tape, self.bound)?;
        let proj_p = self.tape.relu(self.tape.matmul(w3, c_p)?);
        let proj_h = self.tape.relu(self.tape.matmul(w3, c_h)?);
        let scores = self.tape.matmul(self.tape.transpose(proj_p)?, proj_h)?;
        let mut mask: Vec<bool> = (0..m * n).map(|k| k % n < hyp_length).collect();
        if let Some(rng) = rng {
            let keep = dropout_mask(&[m, n], self.config.dropout, rng)?;
            for row in 0..m {
                let span = row * n..row * n + hyp_length;
                if keep.keep()[span.clone()].iter().any(|&k| k) {
                    for k in span {
                        mask[k] = keep.keep()[k];
                    }
                }
            }
        }
        self.tape.softmax(scores, 1, Some(&mask))
    }

    /// `U^p = [C^p; C^h·Aᵀ]`, `U^h = [C^h; C^p·A]`, then `M = BiLSTM([U; C])`.
    /// Returns `(U^p, U^h, M^p, M^h)`.
    pub fn build_memory(
        &self,
        c_p: Var,
        c_h: Var,
        a: Var,
        lengths: (usize, usize),
        mut rng: Option<&mut RngStream>,
    ) -> Result<(Var, Var, Var, Var)> {
        let t = self.tape;
        let u_p = t.concat(&[c_p, t.matmul(c_h, t.transpose(a)?)?], 0)?;
        let u_h = t.concat(&[c_h, t.matmul(c_p, a)?], 0)?;
        let m_p = self.bilstm(
            &self.layout.memory,
            t.concat(&[u_p, c_p], 0)?,
            lengths.0,
            rng.as_deref_mut(),
        )?;
        let m_h = self.bilstm(&self.layout.memory, t.concat(&[u_h, c_h], 0)?, lengths.1, rng)?;
        Ok((u_p, u_h, m_p, m_h))
    }

    /// Attention-weighted column sum `Σ softmax(scores)ⱼ · M_j` over the first `length` columns.
    /// `scores` is `[1 × L]`; returns the pooled column and the weights.
    fn pool(&self, memory: Var, scores: Var, length: usize) -> Result<(Var, Var)> {
        let width = self.tape.shape(scores)[1];
        if length == 0 || length > width {
            return Err(SanError::FullyMasked("memory read"));
        }
        let mask: Vec<bool> = (0..width).map(|j| j < length).collect();
        let weights = self.tape.softmax(scores, 1, Some(&mask))?;
        let pooled = self.tape.matmul(memory, self.tape.transpose(weights)?)?;
        Ok((pooled, weights))
    }

    fn vector_scores(&self, vector: Var, memory: Var) -> Result<Var> {
        self.tape.matmul(self.tape.transpose(vector)?, memory)
    }

    /// Initial answer state `s₀ [2h × 1]`: hypothesis memory pooled by `θ₂` scores.
    pub fn answer_init(&self, m_h: Var, hyp_length: usize) -> Result<Var> {
        let scores = self.vector_scores(self.bound.var(self.layout.summary), m_h)?;
        Ok(self.pool(m_h, scores, hyp_length)?.0)
    }

    /// Reads premise memory with state `s`: `β = softmax(sᵀ·θ₃·M^p)`, `x = M^p·βᵀ`.
    /// Returns `(x [2h × 1], β [1 × m])`.
    pub fn answer_read(&self, s: Var, m_p: Var, premise_length: usize) -> Result<(Var, Var)> {
        let query = self
            .tape
            .matmul(self.tape.transpose(s)?, self.bound.var(self.layout.bilinear))?;
        let scores = self.tape.matmul(query, m_p)?;
        self.pool(m_p, scores, premise_length)
    }

    /// One recurrence: `x_t` read with `s_{t−1}`, then `s_t = GRU(s_{t−1}, x_t)`.
    /// Returns `(x_t, s_t, β)`.
    pub fn answer_step(&self, s_prev: Var, m_p: Var, premise_length: usize) -> Result<(Var, Var, Var)> {
        let (x, beta) = self.answer_read(s_prev, m_p, premise_length)?;
        let s = gru_step(self.tape, self.bound, &self.layout.gru, s_prev, x)?;
        Ok((x, s, beta))
    }

    /// `softmax(θ₄·[s; x; |s−x|; s⊙x])` as a `[labels × 1]` column.
    pub fn step_classify(&self, s: Var, x: Var) -> Result<Var> {
        let t = self.tape;
        let features = t.concat(&[s, x, t.abs(t.sub(s, x)?), t.mul(s, x)?], 0)?;
        let logits = t.matmul(self.bound.var(self.layout.classifier), features)?;
        t.softmax(logits, 0, None)
    }

    /// One-shot baseline read `x₀ = M^p·softmax(wᵀ·M^p)ᵀ`.
    pub fn baseline_read(&self, m_p: Var, premise_length: usize) -> Result<Var> {
        let scores = self.vector_scores(self.bound.var(self.layout.baseline), m_p)?;
        Ok(self.pool(m_p, scores, premise_length)?.0)
    }
}
