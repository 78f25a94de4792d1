//! Central finite-difference gradient oracle.
//!
//! The function under test may return any shape. Non-scalar outputs are
//! reduced with a fixed non-uniform projection `Σ wᵢ·yᵢ` so that outputs with
//! a constant sum (softmax) still produce a non-trivial gradient.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

fn projection_weights(n: usize) -> Tensor {
    Tensor::from_parts(
        vec![n],
        (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 1.7 + 0.3).sin()).collect(),
    )
}

fn scalarize(tape: &Tape, y: Var) -> Result<Var> {
    let shape = tape.shape(y);
    if shape.iter().product::<usize>() == 1 {
        return Ok(y);
    }
    let w = projection_weights(shape.iter().product()).reshape(&shape)?;
    let w = tape.constant(w);
    Ok(tape.sum(tape.mul(y, w)?))
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let y = scalarize(&tape, f(&tape, &vars)?)?;
    Ok(tape.value(y).data()[0])
}

/// Max relative error between tape gradients and central differences over
/// every coordinate of every input.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let y = scalarize(&tape, f(&tape, &vars)?)?;
    let grads = tape.backward(y)?;

    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).expect("leaf gradient").clone();
        for i in 0..input.len() {
            let mut probe: Vec<Tensor> = inputs.to_vec();
            probe[k].data_mut()[i] = input.data()[i] + eps;
            let plus = evaluate(&f, &probe)?;
            probe[k].data_mut()[i] = input.data()[i] - eps;
            let minus = evaluate(&f, &probe)?;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, v| f(tape, v[0]), std::slice::from_ref(x), eps)
}
