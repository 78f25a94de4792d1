//! LSTM cells and bidirectional layers with variational recurrent dropout.
//!
//! Gate rows are stacked in the order input, forget, cell, output. The
//! recurrent keep-mask of a [`VariationalMask`] is sampled once per sequence
//! and multiplied into `h_{t-1}` at every step, so the same hidden units are
//! silenced for the whole sequence.

use super::params::{xavier, Bound, ParamId, ParamStore};
use crate::error::{Result, SanError};
use crate::tensor::{dropout_mask, Mask, RngStream, Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct LstmParams {
    /// `[4h × input]`
    pub w_input: ParamId,
    /// `[4h × h]`
    pub w_hidden: ParamId,
    /// `[4h]`
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn init(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let w_input = store.add(format!("{name}.w_input"), xavier(4 * hidden, input, rng), true);
        let w_hidden = store.add(format!("{name}.w_hidden"), xavier(4 * hidden, hidden, rng), true);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(1.0);
        let bias = store.add(format!("{name}.bias"), Tensor::vector(b), true);
        LstmParams {
            w_input,
            w_hidden,
            bias,
            input,
            hidden,
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.w_input, self.w_hidden, self.bias]
    }
}

/// Recurrent keep-mask shared by every time step of one sequence.
#[derive(Clone, Debug)]
pub struct VariationalMask {
    mask: Mask,
    rate: f64,
}

impl VariationalMask {
    pub fn sample(hidden: usize, rate: f64, rng: &mut RngStream) -> Result<Self> {
        Ok(VariationalMask {
            mask: dropout_mask(&[hidden, 1], rate, rng)?,
            rate,
        })
    }

    pub fn keep_all(hidden: usize) -> Self {
        VariationalMask {
            mask: Mask::all(&[hidden, 1]),
            rate: 0.0,
        }
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn multiplier(&self) -> Tensor {
        self.mask.scale_tensor(self.rate)
    }
}

/// Per-step record of the recurrent masks actually applied.
#[derive(Clone, Debug, Default)]
pub struct RecurrentTrace {
    pub steps: Vec<Mask>,
}

struct Cell {
    w_hidden: Var,
    /// Recurrent multiplier recorded once on the tape, `None` for no dropout.
    multiplier: Option<Var>,
    mask: Option<VariationalMask>,
    hidden: usize,
}

impl Cell {
    fn new(tape: &Tape, bound: &Bound, p: &LstmParams, mask: Option<&VariationalMask>) -> Result<Self> {
        if let Some(m) = mask {
            if m.mask.shape() != [p.hidden, 1] {
                return Err(SanError::dim("lstm mask", m.mask.shape(), &[p.hidden, 1]));
            }
        }
        let active = mask.filter(|m| m.rate > 0.0);
        Ok(Cell {
            w_hidden: bound.var(p.w_hidden),
            multiplier: active.map(|m| tape.constant(m.multiplier())),
            mask: active.cloned(),
            hidden: p.hidden,
        })
    }

    /// One step from a precomputed `W_x·x_t + b` column.
    fn step(
        &self,
        tape: &Tape,
        projected: Var,
        h_prev: Var,
        c_prev: Var,
        trace: Option<&mut RecurrentTrace>,
    ) -> Result<(Var, Var)> {
        let h_in = match self.multiplier {
            Some(m) => tape.mul(h_prev, m)?,
            None => h_prev,
        };
        if let Some(trace) = trace {
            trace.steps.push(match &self.mask {
                Some(m) => m.mask.clone(),
                None => Mask::all(&[self.hidden, 1]),
            });
        }
        let pre = tape.add(projected, tape.matmul(self.w_hidden, h_in)?)?;
        let hc = tape.lstm_gates(pre, c_prev)?;
        Ok((
            tape.slice(hc, 0, 0, self.hidden)?,
            tape.slice(hc, 0, self.hidden, self.hidden)?,
        ))
    }
}

fn check_column(tape: &Tape, v: Var, rows: usize, what: &'static str) -> Result<()> {
    let shape = tape.shape(v);
    if shape != [rows, 1] {
        return Err(SanError::dim(what, &shape, &[rows, 1]));
    }
    Ok(())
}

/// Standard LSTM step on column vectors; `mask` silences units of `h_prev`.
pub fn lstm_step(
    tape: &Tape,
    bound: &Bound,
    params: &LstmParams,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
    mask: Option<&VariationalMask>,
) -> Result<(Var, Var)> {
    check_column(tape, x_t, params.input, "lstm_step input")?;
    check_column(tape, h_prev, params.hidden, "lstm_step h_prev")?;
    check_column(tape, c_prev, params.hidden, "lstm_step c_prev")?;
    let cell = Cell::new(tape, bound, params, mask)?;
    let projected = tape.add_bias(tape.matmul(bound.var(params.w_input), x_t)?, bound.var(params.bias))?;
    cell.step(tape, projected, h_prev, c_prev, None)
}

/// Runs one direction over the first `length` columns of `x`.
/// Returns the hidden states in sequence order as a `[h × length]` matrix.
#[allow(clippy::too_many_arguments)]
fn run_direction(
    tape: &Tape,
    bound: &Bound,
    params: &LstmParams,
    x: Var,
    length: usize,
    reverse: bool,
    mask: Option<&VariationalMask>,
    mut trace: Option<&mut RecurrentTrace>,
) -> Result<Var> {
    let cell = Cell::new(tape, bound, params, mask)?;
    let valid = tape.slice(x, 1, 0, length)?;
    let projected = tape.add_bias(tape.matmul(bound.var(params.w_input), valid)?, bound.var(params.bias))?;
    let zero = tape.constant(Tensor::zeros(&[params.hidden, 1]));
    let (mut h, mut c) = (zero, zero);
    let mut states = vec![zero; length];
    let order: Vec<usize> = if reverse {
        (0..length).rev().collect()
    } else {
        (0..length).collect()
    };
    for t in order {
        let column = tape.column(projected, t)?;
        (h, c) = cell.step(tape, column, h, c, trace.as_deref_mut())?;
        states[t] = h;
    }
    tape.concat(&states, 1)
}

/// Masks for one bidirectional layer (forward, backward).
#[derive(Clone, Debug)]
pub struct BiMasks {
    pub forward: VariationalMask,
    pub backward: VariationalMask,
}

impl BiMasks {
    pub fn sample(hidden: usize, rate: f64, rng: &mut RngStream) -> Result<Self> {
        Ok(BiMasks {
            forward: VariationalMask::sample(hidden, rate, rng)?,
            backward: VariationalMask::sample(hidden, rate, rng)?,
        })
    }
}

/// Output of [`bilstm_layer`].
#[derive(Debug)]
pub struct BiLstmOutput {
    /// `[2h × L]`: forward states on top, backward below; zero past `length`.
    pub output: Var,
    pub forward_trace: RecurrentTrace,
    pub backward_trace: RecurrentTrace,
}

/// Bidirectional LSTM over `x [input × L]` whose first `length` columns are valid.
pub fn bilstm_layer(
    tape: &Tape,
    bound: &Bound,
    fwd: &LstmParams,
    bwd: &LstmParams,
    x: Var,
    length: usize,
    masks: Option<&BiMasks>,
) -> Result<BiLstmOutput> {
    let shape = tape.shape(x);
    if shape.len() != 2 || shape[0] != fwd.input || shape[0] != bwd.input {
        return Err(SanError::dim("bilstm_layer", &shape, &[fwd.input]));
    }
    let total = shape[1];
    if length == 0 || length > total {
        return Err(SanError::shape(
            "bilstm_layer",
            &shape,
            format!("length {length} must lie in 1..={total}"),
        ));
    }
    let mut forward_trace = RecurrentTrace::default();
    let mut backward_trace = RecurrentTrace::default();
    let f = run_direction(
        tape,
        bound,
        fwd,
        x,
        length,
        false,
        masks.map(|m| &m.forward),
        Some(&mut forward_trace),
    )?;
    let b = run_direction(
        tape,
        bound,
        bwd,
        x,
        length,
        true,
        masks.map(|m| &m.backward),
        Some(&mut backward_trace),
    )?;
    let mut output = tape.concat(&[f, b], 0)?;
    if length < total {
        let pad = tape.constant(Tensor::zeros(&[fwd.hidden + bwd.hidden, total - length]));
        output = tape.concat(&[output, pad], 1)?;
    }
    Ok(BiLstmOutput {
        output,
        forward_trace,
        backward_trace,
    })
}

/// Max over each pair of consecutive rows: `[2h × L] → [h × L]`.
pub fn maxout_shrink(tape: &Tape, x: Var, group: usize) -> Result<Var> {
    tape.maxout(x, group)
}
