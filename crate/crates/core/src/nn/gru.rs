use super::params::{xavier, Bound, ParamId, ParamStore};
use crate::error::{Result, SanError};
use crate::tensor::{RngStream, Tape, Tensor, Var};

/// GRU over a state of size `size`; gate rows ordered update, reset, candidate.
#[derive(Clone, Debug)]
pub struct GruParams {
    /// `[3S × S]` input weights.
    pub w_input: ParamId,
    /// `[2S × S]` recurrent weights of the update and reset gates.
    pub u_gates: ParamId,
    /// `[S × S]` recurrent weight of the candidate.
    pub u_candidate: ParamId,
    /// `[3S]`
    pub bias: ParamId,
    pub size: usize,
}

impl GruParams {
    pub fn init(store: &mut ParamStore, name: &str, size: usize, rng: &mut RngStream) -> Self {
        GruParams {
            w_input: store.add(format!("{name}.w_input"), xavier(3 * size, size, rng), true),
            u_gates: store.add(format!("{name}.u_gates"), xavier(2 * size, size, rng), true),
            u_candidate: store.add(format!("{name}.u_candidate"), xavier(size, size, rng), true),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[3 * size]), true),
            size,
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.w_input, self.u_gates, self.u_candidate, self.bias]
    }
}

/// `z = σ(W_z x + U_z s + b_z)`, `r = σ(W_r x + U_r s + b_r)`,
/// `s̃ = tanh(W_n x + U_n (r⊙s) + b_n)`, `s' = (1−z)⊙s + z⊙s̃`.
pub fn gru_step(tape: &Tape, bound: &Bound, params: &GruParams, s_prev: Var, x_t: Var) -> Result<Var> {
    let n = params.size;
    for v in [s_prev, x_t] {
        let shape = tape.shape(v);
        if shape != [n, 1] {
            return Err(SanError::dim("gru_step", &shape, &[n, 1]));
        }
    }
    let wx = tape.add_bias(tape.matmul(bound.var(params.w_input), x_t)?, bound.var(params.bias))?;
    let us = tape.matmul(bound.var(params.u_gates), s_prev)?;
    let gates = tape.sigmoid(tape.add(tape.slice(wx, 0, 0, 2 * n)?, us)?);
    let z = tape.slice(gates, 0, 0, n)?;
    let r = tape.slice(gates, 0, n, n)?;
    let reset = tape.mul(r, s_prev)?;
    let candidate = tape.tanh(tape.add(
        tape.slice(wx, 0, 2 * n, n)?,
        tape.matmul(bound.var(params.u_candidate), reset)?,
    )?);
    // s + z⊙(s̃ − s)
    tape.add(s_prev, tape.mul(z, tape.sub(candidate, s_prev)?)?)
}
