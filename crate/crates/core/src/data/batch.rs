use rand::seq::SliceRandom;

use crate::model::PairInput;
use crate::tensor::RngStream;

/// Examples padded to the longest premise and hypothesis of the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// Positions of the examples in the source list.
    pub indices: Vec<usize>,
    pub inputs: Vec<PairInput>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn premise_lengths(&self) -> Vec<usize> {
        self.inputs.iter().map(|p| p.premise.length).collect()
    }

    pub fn hypothesis_lengths(&self) -> Vec<usize> {
        self.inputs.iter().map(|p| p.hypothesis.length).collect()
    }

    /// Padded token ids, one row per example.
    pub fn premise_ids(&self) -> Vec<Vec<usize>> {
        self.inputs.iter().map(|p| p.premise.ids.clone()).collect()
    }

    pub fn hypothesis_ids(&self) -> Vec<Vec<usize>> {
        self.inputs.iter().map(|p| p.hypothesis.ids.clone()).collect()
    }

    /// Valid-position masks: true exactly below each length.
    pub fn premise_masks(&self) -> Vec<Vec<bool>> {
        self.inputs.iter().map(|p| p.premise.mask()).collect()
    }

    pub fn hypothesis_masks(&self) -> Vec<Vec<bool>> {
        self.inputs.iter().map(|p| p.hypothesis.mask()).collect()
    }
}

/// Shuffles with `rng` (when given) and cuts consecutive batches of `batch_size`.
pub fn make_batches(
    inputs: &[PairInput],
    labels: &[usize],
    batch_size: usize,
    rng: Option<&mut RngStream>,
) -> Vec<Batch> {
    assert_eq!(inputs.len(), labels.len(), "one label per input");
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    if let Some(rng) = rng {
        order.shuffle(rng);
    }
    order
        .chunks(batch_size.max(1))
        .map(|chunk| {
            let width_p = chunk.iter().map(|&i| inputs[i].premise.width()).max().unwrap_or(0);
            let width_h = chunk.iter().map(|&i| inputs[i].hypothesis.width()).max().unwrap_or(0);
            Batch {
                indices: chunk.to_vec(),
                inputs: chunk
                    .iter()
                    .map(|&i| PairInput {
                        premise: inputs[i].premise.padded(width_p),
                        hypothesis: inputs[i].hypothesis.padded(width_h),
                    })
                    .collect(),
                labels: chunk.iter().map(|&i| labels[i]).collect(),
            }
        })
        .collect()
}
