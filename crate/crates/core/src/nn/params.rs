use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Result, SanError};
use crate::tensor::{Gradients, RngStream, Tape, Tensor, Var};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    name: String,
    tensor: Tensor,
    trainable: bool,
}

/// Ordered, named collection of model tensors.
///
/// Insertion order is the canonical order for optimisers and checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(Entry {
            name,
            tensor,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn set(&mut self, id: ParamId, tensor: Tensor) -> Result<()> {
        let slot = &mut self.entries[id.0].tensor;
        if slot.shape() != tensor.shape() {
            return Err(SanError::dim("param set", slot.shape(), tensor.shape()));
        }
        *slot = tensor;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// Records every tensor on `tape`: trainable ones as leaves, frozen ones as constants.
    pub fn bind(&self, tape: &Tape) -> Bound {
        Bound {
            vars: self
                .entries
                .iter()
                .map(|e| {
                    if e.trainable {
                        tape.leaf(e.tensor.clone())
                    } else {
                        tape.constant(e.tensor.clone())
                    }
                })
                .collect(),
        }
    }
}

/// A [`ParamStore`] recorded on a particular tape.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Binds explicit tape variables, one per store entry in order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradient per parameter, in store order; `None` for frozen tensors.
    pub fn collect(&self, grads: &Gradients) -> Vec<Option<Tensor>> {
        self.vars.iter().map(|&v| grads.wrt(v)).collect()
    }
}

/// Uniform(−a, a) with `a = √(6/(fan_in+fan_out))`.
pub fn xavier(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    Tensor::from_parts(vec![rows, cols], (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

pub fn normal(shape: &[usize], std: f64, rng: &mut RngStream) -> Tensor {
    let dist = Normal::new(0.0, std).expect("valid std");
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}

/// Matrix weight, optionally weight-normalised as `g · v/‖v‖`.
#[derive(Clone, Copy, Debug)]
pub struct Weight {
    pub direction: ParamId,
    pub gain: Option<ParamId>,
}

impl Weight {
    /// Registers a Xavier-initialised weight; with `normalize` the gain starts at `‖v‖`.
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        rows: usize,
        cols: usize,
        normalize: bool,
        rng: &mut RngStream,
    ) -> Self {
        let v = xavier(rows, cols, rng);
        let gain = normalize.then(|| v.l2_norm());
        let direction = store.add(format!("{name}.v"), v, true);
        let gain = gain.map(|g| store.add(format!("{name}.g"), Tensor::scalar(g), true));
        Weight { direction, gain }
    }

    pub fn resolve(&self, tape: &Tape, bound: &Bound) -> Result<Var> {
        let v = bound.var(self.direction);
        match self.gain {
            Some(g) => tape.weight_norm(v, bound.var(g)),
            None => Ok(v),
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        std::iter::once(self.direction).chain(self.gain).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_marks_frozen_as_constant() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::ones(&[2]), true);
        let b = store.add("b", Tensor::ones(&[2]), false);
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let loss = tape.sum(tape.add(bound.var(a), bound.var(b)).unwrap());
        let grads = bound.collect(&tape.backward(loss).unwrap());
        assert!(grads[a.index()].is_some());
        assert!(grads[b.index()].is_none());
    }

    #[test]
    fn xavier_respects_bound() {
        let mut rng = RngStream::new(3);
        let w = xavier(10, 20, &mut rng);
        let a = (6.0f64 / 30.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= a));
    }

    #[test]
    fn normalized_weight_starts_equal_to_direction() {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(1);
        let w = Weight::init(&mut store, "w", 3, 4, true, &mut rng);
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let resolved = tape.value(w.resolve(&tape, &bound).unwrap());
        assert!(resolved.max_abs_diff(store.get(w.direction)) < 1e-15);
    }
}
