use super::params::{Bound, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// Row 0 is reserved for out-of-vocabulary and padding tokens.
pub const OOV_ID: usize = 0;

/// Word-embedding table `[vocab × dim]`.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Registers `table` with its OOV row zeroed. Frozen tables get no gradient.
    pub fn register(store: &mut ParamStore, name: &str, mut table: Tensor, frozen: bool) -> Self {
        let (vocab, dim) = table.matrix_dims().expect("embedding table is a matrix");
        table.data_mut()[..dim].fill(0.0);
        EmbeddingTable {
            table: store.add(name, table, !frozen),
            vocab,
            dim,
        }
    }

    pub fn is_frozen(&self, store: &ParamStore) -> bool {
        !store.is_trainable(self.table)
    }
}

/// One `[dim]` column per token id.
pub fn embed_lookup(tape: &Tape, bound: &Bound, table: &EmbeddingTable, ids: &[usize]) -> Result<Var> {
    tape.gather(bound.var(table.table), ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::SanError;
    use crate::nn::params::normal;
    use crate::tensor::RngStream;

    #[test]
    fn oov_column_is_zero_and_frozen_gets_no_grad() {
        let mut store = ParamStore::new();
        let t = normal(&[5, 3], 1.0, &mut RngStream::new(1));
        let emb = EmbeddingTable::register(&mut store, "emb", t, true);
        assert!(emb.is_frozen(&store));
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let e = embed_lookup(&tape, &bound, &emb, &[0, 3, 0]).unwrap();
        let v = tape.value(e);
        assert_eq!(v.column_values(0), vec![0.0; 3]);
        assert_eq!(v.column_values(2), vec![0.0; 3]);
        let grads = bound.collect(&tape.backward(tape.sum(e)).unwrap());
        assert!(grads[emb.table.index()].is_none());
        assert!(store.get(emb.table).data()[..3].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn out_of_range_id_is_an_error() {
        let mut store = ParamStore::new();
        let emb = EmbeddingTable::register(&mut store, "emb", Tensor::ones(&[4, 2]), false);
        let tape = Tape::new();
        let bound = store.bind(&tape);
        assert!(matches!(
            embed_lookup(&tape, &bound, &emb, &[1, 4]),
            Err(SanError::OutOfRange { .. })
        ));
    }
}
