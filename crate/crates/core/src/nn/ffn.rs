use super::params::{Bound, ParamId, ParamStore, Weight};
use crate::error::{Result, SanError};
use crate::tensor::{RngStream, Tape, Tensor, Var};

/// Two-layer position-wise network `relu(W2·relu(W1·x + b1) + b2)`.
#[derive(Clone, Debug)]
pub struct FfnParams {
    pub w1: Weight,
    pub b1: ParamId,
    pub w2: Weight,
    pub b2: ParamId,
    pub input: usize,
    pub output: usize,
}

impl FfnParams {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        weight_norm: bool,
        rng: &mut RngStream,
    ) -> Self {
        let w1 = Weight::init(store, &format!("{name}.w1"), output, input, weight_norm, rng);
        let b1 = store.add(format!("{name}.b1"), Tensor::zeros(&[output]), true);
        let w2 = Weight::init(store, &format!("{name}.w2"), output, output, weight_norm, rng);
        let b2 = store.add(format!("{name}.b2"), Tensor::zeros(&[output]), true);
        FfnParams {
            w1,
            b1,
            w2,
            b2,
            input,
            output,
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.w1.ids();
        ids.push(self.b1);
        ids.extend(self.w2.ids());
        ids.push(self.b2);
        ids
    }
}

/// Applies the network to every column of `x [input×L]`.
pub fn ffn_forward(tape: &Tape, bound: &Bound, params: &FfnParams, x: Var) -> Result<Var> {
    let shape = tape.shape(x);
    if shape.len() != 2 || shape[0] != params.input {
        return Err(SanError::dim("ffn_forward", &shape, &[params.input]));
    }
    let w1 = params.w1.resolve(tape, bound)?;
    let w2 = params.w2.resolve(tape, bound)?;
    let hidden = tape.relu(tape.add_bias(tape.matmul(w1, x)?, bound.var(params.b1))?);
    Ok(tape.relu(tape.add_bias(tape.matmul(w2, hidden)?, bound.var(params.b2))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::normal;

    fn setup(weight_norm: bool) -> (ParamStore, FfnParams) {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(11);
        let p = FfnParams::init(&mut store, "ffn", 4, 3, weight_norm, &mut rng);
        // non-zero biases so relu gates are mixed
        for id in [p.b1, p.b2] {
            let t = normal(&[3], 0.3, &mut rng);
            store.set(id, t).unwrap();
        }
        (store, p)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(0);
        let p = FfnParams::init(&mut store, "ffn", 4, 3, false, &mut rng);
        for id in [p.w1.direction, p.w2.direction] {
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::zeros(&shape)).unwrap();
        }
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let x = tape.constant(normal(&[4, 5], 1.0, &mut rng));
        let y = tape.value(ffn_forward(&tape, &bound, &p, x).unwrap());
        assert_eq!(y.shape(), &[3, 5]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn column_permutation_commutes() {
        let (store, p) = setup(true);
        let mut rng = RngStream::new(5);
        let x = normal(&[4, 3], 1.0, &mut rng);
        let perm = [2usize, 0, 1];
        let xp = Tensor::new(
            &[4, 3],
            (0..4)
                .flat_map(|i| perm.iter().map(move |&j| (i, j)))
                .map(|(i, j)| x.at(i, j))
                .collect(),
        )
        .unwrap();
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let y = tape.value(ffn_forward(&tape, &bound, &p, tape.constant(x)).unwrap());
        let yp = tape.value(ffn_forward(&tape, &bound, &p, tape.constant(xp)).unwrap());
        for i in 0..3 {
            for (k, &j) in perm.iter().enumerate() {
                assert_eq!(yp.at(i, k), y.at(i, j));
            }
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let (store, p) = setup(false);
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let x = tape.constant(Tensor::zeros(&[5, 2]));
        assert!(ffn_forward(&tape, &bound, &p, x).is_err());
    }
}
