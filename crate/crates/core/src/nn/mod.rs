//! Layers composed by the answer network. Every layer is a pure function of
//! `(tape, bound parameters, inputs)`; parameter structs only hold
//! [`ParamId`]s into a shared [`ParamStore`].

pub mod char_cnn;
pub mod embedding;
pub mod ffn;
pub mod gru;
pub mod lstm;
pub mod params;

pub use char_cnn::{char_cnn_encode, CharCnnParams, MAX_WORD_CHARS};
pub use embedding::{embed_lookup, EmbeddingTable, OOV_ID};
pub use ffn::{ffn_forward, FfnParams};
pub use gru::{gru_step, GruParams};
pub use lstm::{
    bilstm_layer, lstm_step, maxout_shrink, BiLstmOutput, BiMasks, LstmParams, RecurrentTrace, VariationalMask,
};
pub use params::{Bound, ParamId, ParamStore, Weight};

use crate::error::Result;
use crate::tensor::{Tape, Var};

/// `g · v / ‖v‖₂`, differentiable in both `v` and `g`.
pub fn weight_normalize(tape: &Tape, v: Var, g: Var) -> Result<Var> {
    tape.weight_norm(v, g)
}
