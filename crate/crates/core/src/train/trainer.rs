use std::time::Instant;

use super::config::{Datasets, RunConfig};
use super::metrics::{MetricsRecord, Tally};
use crate::data::{make_batches, Vocabulary};
use crate::error::{Result, SanError};
use crate::model::{Head, Mode, PairInput, SanModel};
use crate::optim::AdamaxState;
use crate::tensor::{argmax, RngStream, Tensor};

/// Sub-stream keys under the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

/// Freshly initialised parameters for a run; identical for both heads.
pub fn init_model(config: &RunConfig, vocab: &Vocabulary, embeddings: Option<Tensor>) -> Result<SanModel> {
    let mut rng = RngStream::new(config.seed).fork(STREAM_INIT);
    SanModel::new(
        config.model.clone(),
        vocab.len(),
        vocab.char_len(),
        embeddings,
        &mut rng,
    )
}

/// Indexed inputs and gold labels of one split.
pub fn index_split(vocab: &Vocabulary, pairs: &[crate::data::TokenizedPair]) -> (Vec<PairInput>, Vec<usize>) {
    (
        pairs.iter().map(|p| vocab.index_pair(p)).collect(),
        pairs.iter().map(|p| p.label).collect(),
    )
}

/// Evaluation-mode accuracy, loss and confusion.
pub fn evaluate(model: &SanModel, head: Head, inputs: &[PairInput], labels: &[usize]) -> Result<Tally> {
    let mut tally = Tally::new(model.config.num_labels);
    for (input, &gold) in inputs.iter().zip(labels) {
        let out = model.forward(input, head, Mode::Eval)?;
        let loss = crate::model::loss_value(&out.aggregate, gold)?;
        tally.add(gold, argmax(&out.aggregate), loss);
    }
    Ok(tally)
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the best dev accuracy.
    pub best: SanModel,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    pub initial: SanModel,
    pub history: Vec<MetricsRecord>,
    /// Mean loss of every optimizer step, in order.
    pub batch_losses: Vec<f64>,
}

/// Mini-batch Adamax training with a dev evaluation after every epoch.
///
/// `on_record` sees each metrics record as soon as it exists. Ties in dev
/// accuracy keep the earlier epoch.
pub fn train(
    config: &RunConfig,
    data: &Datasets,
    mut on_record: impl FnMut(&MetricsRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut model = init_model(config, &data.vocab, data.embeddings.clone())?;
    let initial = model.clone();
    let (train_inputs, train_labels) = index_split(&data.vocab, &data.train);
    let (dev_inputs, dev_labels) = index_split(&data.vocab, &data.dev);
    let root = RngStream::new(config.seed);
    let mut optimizer = AdamaxState::for_store(config.optimizer, &model.store);
    let mut history = Vec::new();
    let mut batch_losses = Vec::new();
    let mut best: Option<(usize, f64, SanModel)> = None;
    let start = Instant::now();

    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at_epoch(epoch);
        let mut shuffle = root.fork(STREAM_SHUFFLE).fork(epoch as u64);
        let dropout = root.fork(STREAM_DROPOUT).fork(epoch as u64);
        let batches = make_batches(&train_inputs, &train_labels, config.batch_size, Some(&mut shuffle));
        let mut tally = Tally::new(config.model.num_labels);
        for (b, batch) in batches.iter().enumerate() {
            let mut sum: Vec<Option<Vec<f64>>> = vec![None; model.store.len()];
            let mut loss_sum = 0.0;
            for ((input, &gold), &source) in batch.inputs.iter().zip(&batch.labels).zip(&batch.indices) {
                let mut rng = dropout.fork(source as u64);
                let ev = model.loss_and_gradients(input, gold, config.head, Mode::Train(&mut rng))?;
                if !ev.loss.is_finite() {
                    return Err(SanError::Divergence(format!(
                        "loss {} at epoch {epoch}, batch {b}, example {source}",
                        ev.loss
                    )));
                }
                loss_sum += ev.loss;
                tally.add(gold, argmax(&ev.outputs.aggregate), ev.loss);
                for (acc, g) in sum.iter_mut().zip(ev.gradients) {
                    if let Some(g) = g {
                        match acc {
                            Some(a) => a.iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                            None => *acc = Some(g.into_vec()),
                        }
                    }
                }
            }
            let n = batch.len() as f64;
            let grads: Vec<Option<Tensor>> = sum
                .into_iter()
                .zip(model.store.ids())
                .map(|(g, id)| {
                    g.map(|g| Tensor::new(model.store.get(id).shape(), g.into_iter().map(|v| v / n).collect()))
                        .transpose()
                })
                .collect::<Result<_>>()?;
            optimizer.step_store(&mut model.store, &grads, lr)?;
            if let Some(id) = model.store.ids().find(|&id| !model.store.get(id).is_finite()) {
                return Err(SanError::Divergence(format!(
                    "parameter {} is not finite after epoch {epoch}, batch {b}",
                    model.store.name(id)
                )));
            }
            batch_losses.push(loss_sum / n);
        }
        let train_record = tally.record(epoch, "train", lr, start.elapsed().as_secs_f64());
        on_record(&train_record)?;
        history.push(train_record);

        let dev = evaluate(&model, config.head, &dev_inputs, &dev_labels)?;
        let dev_record = dev.record(epoch, "dev", lr, start.elapsed().as_secs_f64());
        on_record(&dev_record)?;
        history.push(dev_record);
        if best.as_ref().is_none_or(|(_, acc, _)| dev.accuracy() > *acc) {
            best = Some((epoch, dev.accuracy(), model.clone()));
        }
    }
    let (best_epoch, best_dev_accuracy, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_dev_accuracy,
        initial,
        history,
        batch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticTaskSpec;
    use crate::train::config::DataConfig;

    fn small(epochs: usize) -> (RunConfig, Datasets) {
        let mut c = RunConfig::desk();
        c.model.hidden = 8;
        c.batch_size = 32;
        c.epochs = epochs;
        c.data = DataConfig::Synthetic {
            task: SyntheticTaskSpec::default(),
            train: 64,
            dev: 30,
        };
        let d = Datasets::load(&c).unwrap();
        (c, d)
    }

    fn mean_train_loss(o: &TrainOutcome, epoch: usize) -> f64 {
        o.history
            .iter()
            .find(|r| r.epoch == epoch && r.split == "train")
            .unwrap()
            .mean_loss
    }

    #[test]
    fn smoke_run_lowers_loss_and_is_deterministic() {
        let (c, d) = small(2);
        let mut seen = 0;
        let a = train(&c, &d, |_| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 4);
        assert_eq!(a.batch_losses.len(), 4);
        assert!(mean_train_loss(&a, 1) < mean_train_loss(&a, 0));
        let b = train(&c, &d, |_| Ok(())).unwrap();
        assert_eq!(
            a.batch_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.batch_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let strip = |o: &TrainOutcome| o.history.iter().map(MetricsRecord::without_time).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        let other = train(&RunConfig { seed: 2, ..c }, &d, |_| Ok(())).unwrap();
        assert_ne!(a.batch_losses, other.batch_losses);
    }

    #[test]
    fn learning_rate_halves_at_epoch_ten() {
        let (mut c, mut d) = small(11);
        d.train.truncate(8);
        d.dev.truncate(3);
        c.batch_size = 8;
        let o = train(&c, &d, |_| Ok(())).unwrap();
        let lr = |e: usize| o.history.iter().find(|r| r.epoch == e).unwrap().learning_rate;
        assert_eq!(lr(9), c.schedule.base);
        assert_eq!(lr(10), lr(9) / 2.0);
    }

    #[test]
    fn best_model_matches_its_recorded_dev_accuracy() {
        let (c, d) = small(3);
        let o = train(&c, &d, |_| Ok(())).unwrap();
        let (inputs, labels) = index_split(&d.vocab, &d.dev);
        let tally = evaluate(&o.best, c.head, &inputs, &labels).unwrap();
        assert_eq!(tally.accuracy(), o.best_dev_accuracy);
        let first_best = o
            .history
            .iter()
            .filter(|r| r.split == "dev")
            .find(|r| r.accuracy == o.best_dev_accuracy)
            .unwrap();
        assert_eq!(first_best.epoch, o.best_epoch);
    }

    #[test]
    fn uniform_model_scores_a_third_on_balanced_data() {
        let (c, d) = small(1);
        let mut m = init_model(&c, &d.vocab, None).unwrap();
        let id = m.layout.classifier;
        m.store.set(id, Tensor::zeros(m.store.get(id).shape())).unwrap();
        let (inputs, labels) = index_split(&d.vocab, &d.dev);
        let t = evaluate(&m, Head::Multi, &inputs, &labels).unwrap();
        // Ties go to label 0, which is a third of the cycled labels.
        assert!((t.accuracy() - 1.0 / 3.0).abs() < 1e-12);
        let rows: Vec<usize> = t.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, [10, 10, 10]);
    }
}
