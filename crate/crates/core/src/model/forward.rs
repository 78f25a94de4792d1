use serde::{Deserialize, Serialize};

use super::graph::{Graph, Side};
use super::{PairInput, SanModel};
use crate::error::{Result, SanError};
use crate::nn::Bound;
use crate::tensor::{dropout_mask, RngStream, Tape, Tensor, Var};

/// Added inside the log of the loss.
pub const LOSS_EPSILON: f64 = 1e-12;

/// Which output layer sits on top of the shared lower layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// `T` answer steps with averaged predictions.
    Multi,
    /// A single classification of `(s₀, x₀)` with its own premise read.
    Single,
}

/// Training samples dropout masks from the stream; evaluation draws nothing.
#[derive(Debug)]
pub enum Mode<'r> {
    Train(&'r mut RngStream),
    Eval,
}

impl Mode<'_> {
    fn rng(&mut self) -> Option<&mut RngStream> {
        match self {
            Mode::Train(rng) => Some(&mut **rng),
            Mode::Eval => None,
        }
    }
}

/// Per-step distributions, the step keep-mask and their average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutputs {
    pub steps: Vec<Vec<f64>>,
    pub keep: Vec<bool>,
    pub aggregate: Vec<f64>,
}

/// [`StepOutputs`] still on the tape.
#[derive(Clone, Debug)]
pub struct TapeOutputs {
    pub steps: Vec<Var>,
    pub keep: Vec<bool>,
    pub aggregate: Var,
}

impl TapeOutputs {
    pub fn values(&self, tape: &Tape) -> StepOutputs {
        StepOutputs {
            steps: self.steps.iter().map(|&v| tape.value(v).into_vec()).collect(),
            keep: self.keep.clone(),
            aggregate: tape.value(self.aggregate).into_vec(),
        }
    }
}

/// Intermediate matrices of one forward pass.
#[derive(Clone, Debug)]
pub struct EncodedPair {
    pub e_p: Tensor,
    pub e_h: Tensor,
    pub c_p: Tensor,
    pub c_h: Tensor,
    pub a: Tensor,
    pub u_p: Tensor,
    pub u_h: Tensor,
    pub m_p: Tensor,
    pub m_h: Tensor,
    pub premise_mask: Vec<bool>,
    pub hypothesis_mask: Vec<bool>,
}

#[derive(Clone, Copy, Debug)]
struct EncodedVars {
    e_p: Var,
    e_h: Var,
    c_p: Var,
    c_h: Var,
    a: Var,
    u_p: Var,
    u_h: Var,
    m_p: Var,
    m_h: Var,
}

/// Keep-mask over `steps` predictions with at least one survivor; an
/// all-dropped draw is resampled.
pub fn sample_step_mask(steps: usize, rate: f64, rng: &mut RngStream) -> Result<Vec<bool>> {
    if steps == 0 {
        return Err(SanError::Empty("step predictions"));
    }
    loop {
        let mask = dropout_mask(&[steps], rate, rng)?;
        if mask.kept() > 0 {
            return Ok(mask.keep().to_vec());
        }
    }
}

/// Mean over kept steps; with `rng == None` every step is kept.
pub fn aggregate_predictions(
    tape: &Tape,
    steps: &[Var],
    rate: f64,
    rng: Option<&mut RngStream>,
) -> Result<(Var, Vec<bool>)> {
    if steps.is_empty() {
        return Err(SanError::Empty("step predictions"));
    }
    let keep = match rng {
        Some(rng) => sample_step_mask(steps.len(), rate, rng)?,
        None => vec![true; steps.len()],
    };
    let mut kept = steps.iter().zip(&keep).filter(|(_, &k)| k).map(|(&v, _)| v);
    let first = kept.next().expect("at least one step is kept");
    let sum = kept.try_fold(first, |acc, v| tape.add(acc, v))?;
    let count = keep.iter().filter(|&&k| k).count();
    Ok((tape.div_scalar(sum, count as f64), keep))
}

/// Value-level twin of [`aggregate_predictions`] with identical arithmetic.
pub fn aggregate_values(steps: &[Vec<f64>], keep: &[bool]) -> Result<Vec<f64>> {
    if steps.is_empty() || steps.len() != keep.len() {
        return Err(SanError::Empty("step predictions"));
    }
    let mut kept = steps.iter().zip(keep).filter(|(_, &k)| k).map(|(s, _)| s);
    let mut sum = kept.next().ok_or(SanError::Empty("kept steps"))?.clone();
    for s in kept {
        for (a, b) in sum.iter_mut().zip(s) {
            *a += b;
        }
    }
    let count = keep.iter().filter(|&&k| k).count() as f64;
    Ok(sum.into_iter().map(|v| v / count).collect())
}

/// `−log(P[gold] + ε)` as a scalar on the tape.
pub fn loss(tape: &Tape, distribution: Var, gold: usize) -> Result<Var> {
    let size = tape.value(distribution).len();
    if gold >= size {
        return Err(SanError::OutOfRange {
            what: "gold label",
            index: gold,
            size,
        });
    }
    let p = tape.pick(distribution, gold)?;
    Ok(tape.scale(tape.log(tape.affine(p, 1.0, LOSS_EPSILON)), -1.0))
}

pub fn loss_value(distribution: &[f64], gold: usize) -> Result<f64> {
    let p = distribution.get(gold).ok_or(SanError::OutOfRange {
        what: "gold label",
        index: gold,
        size: distribution.len(),
    })?;
    Ok(-(p + LOSS_EPSILON).ln())
}

/// Loss, per-parameter gradients and outputs of one example.
#[derive(Clone, Debug)]
pub struct Evaluated {
    pub loss: f64,
    /// In store order; `None` for frozen parameters.
    pub gradients: Vec<Option<Tensor>>,
    pub outputs: StepOutputs,
}

impl SanModel {
    pub fn graph<'a>(&'a self, tape: &'a Tape, bound: &'a Bound) -> Graph<'a> {
        Graph {
            tape,
            bound,
            config: &self.config,
            layout: &self.layout,
        }
    }

    fn encode_vars(&self, g: Graph<'_>, pair: &PairInput, mode: &mut Mode<'_>) -> Result<EncodedVars> {
        pair.validate()?;
        let (lp, lh) = (pair.premise.length, pair.hypothesis.length);
        let e_p = g.lexicon_encode(Side::Premise, &pair.premise)?;
        let e_h = g.lexicon_encode(Side::Hypothesis, &pair.hypothesis)?;
        let c_p = g.contextual_encode(e_p, lp, mode.rng())?;
        let c_h = g.contextual_encode(e_h, lh, mode.rng())?;
        let a = g.attention_align(c_p, c_h, lh, mode.rng())?;
        let (u_p, u_h, m_p, m_h) = g.build_memory(c_p, c_h, a, (lp, lh), mode.rng())?;
        Ok(EncodedVars {
            e_p,
            e_h,
            c_p,
            c_h,
            a,
            u_p,
            u_h,
            m_p,
            m_h,
        })
    }

    /// Records the full forward pass on `tape`.
    pub fn forward_on_tape(
        &self,
        tape: &Tape,
        bound: &Bound,
        pair: &PairInput,
        head: Head,
        mut mode: Mode<'_>,
    ) -> Result<TapeOutputs> {
        let g = self.graph(tape, bound);
        let enc = self.encode_vars(g, pair, &mut mode)?;
        let (lp, lh) = (pair.premise.length, pair.hypothesis.length);
        let s0 = g.answer_init(enc.m_h, lh)?;
        match head {
            Head::Single => {
                let x0 = g.baseline_read(enc.m_p, lp)?;
                let p = g.step_classify(s0, x0)?;
                Ok(TapeOutputs {
                    steps: vec![p],
                    keep: vec![true],
                    aggregate: p,
                })
            }
            Head::Multi => {
                let mut steps = Vec::with_capacity(self.config.steps);
                let (mut x, _) = g.answer_read(s0, enc.m_p, lp)?;
                steps.push(g.step_classify(s0, x)?);
                let mut s = s0;
                for t in 1..self.config.steps {
                    // x_t = read(s_{t−1}) is already in `x`.
                    s = crate::nn::gru_step(tape, bound, &self.layout.gru, s, x)?;
                    steps.push(g.step_classify(s, x)?);
                    if t + 1 < self.config.steps {
                        x = g.answer_read(s, enc.m_p, lp)?.0;
                    }
                }
                let (aggregate, keep) =
                    aggregate_predictions(tape, &steps, self.config.prediction_dropout, mode.rng())?;
                Ok(TapeOutputs { steps, keep, aggregate })
            }
        }
    }

    /// Per-step and averaged label distributions.
    pub fn forward(&self, pair: &PairInput, head: Head, mode: Mode<'_>) -> Result<StepOutputs> {
        let tape = Tape::new();
        let bound = self.store.bind(&tape);
        Ok(self.forward_on_tape(&tape, &bound, pair, head, mode)?.values(&tape))
    }

    /// Distribution of the one-shot baseline head.
    pub fn single_step_forward(&self, pair: &PairInput, mode: Mode<'_>) -> Result<Vec<f64>> {
        Ok(self.forward(pair, Head::Single, mode)?.aggregate)
    }

    /// Intermediate matrices of the lower layers.
    pub fn encode(&self, pair: &PairInput, mut mode: Mode<'_>) -> Result<EncodedPair> {
        let tape = Tape::new();
        let bound = self.store.bind(&tape);
        let v = self.encode_vars(self.graph(&tape, &bound), pair, &mut mode)?;
        let val = |x: Var| tape.value(x);
        Ok(EncodedPair {
            e_p: val(v.e_p),
            e_h: val(v.e_h),
            c_p: val(v.c_p),
            c_h: val(v.c_h),
            a: val(v.a),
            u_p: val(v.u_p),
            u_h: val(v.u_h),
            m_p: val(v.m_p),
            m_h: val(v.m_h),
            premise_mask: pair.premise.mask(),
            hypothesis_mask: pair.hypothesis.mask(),
        })
    }

    /// Forward, loss on the aggregate and one backward sweep.
    pub fn loss_and_gradients(&self, pair: &PairInput, gold: usize, head: Head, mode: Mode<'_>) -> Result<Evaluated> {
        let tape = Tape::new();
        let bound = self.store.bind(&tape);
        let out = self.forward_on_tape(&tape, &bound, pair, head, mode)?;
        let l = loss(&tape, out.aggregate, gold)?;
        let grads = tape.backward(l)?;
        Ok(Evaluated {
            loss: tape.value(l).data()[0],
            gradients: bound.collect(&grads),
            outputs: out.values(&tape),
        })
    }
}
