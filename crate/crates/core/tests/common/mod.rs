//! Finite-difference routines shared by the per-area tests and the acceptance suite.
//!
//! Each routine returns `(name, worst relative error over seeds)`.

#![allow(dead_code)]

use rand::Rng;
use san_core::model::{loss, Head, Mode, ModelConfig, PairInput, SanModel, SequenceInput};
use san_core::nn::{
    bilstm_layer, char_cnn_encode, embed_lookup, ffn_forward, gru_step, lstm_step, maxout_shrink, BiMasks, Bound,
    CharCnnParams, EmbeddingTable, FfnParams, GruParams, LstmParams, ParamStore, VariationalMask,
};
use san_core::tensor::{grad_check_many, RngStream, Tape, Tensor, Var};
use san_core::Result;

pub const EPS: f64 = 1e-5;
pub const OP_TOL: f64 = 1e-5;
pub const MODEL_TOL: f64 = 1e-4;
pub const SEEDS: std::ops::Range<u64> = 0..5;

pub const VOCAB: usize = 10;
pub const CHARS: usize = 6;

pub fn random(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Entries at least 0.1 away from zero, for ops with a kink there.
pub fn off_kink(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Distinct entries `0.3·k` in random order, so maxima never tie.
fn spread(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.3).collect();
    rand::seq::SliceRandom::shuffle(values.as_mut_slice(), rng);
    Tensor::new(shape, values).unwrap()
}

fn worst<F>(f: F, inputs: impl Fn(&mut RngStream) -> Vec<Tensor>) -> f64
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    SEEDS
        .map(|seed| grad_check_many(&f, &inputs(&mut RngStream::new(seed)), EPS).unwrap())
        .fold(0.0, f64::max)
}

pub fn op_errors() -> Vec<(&'static str, f64)> {
    let pair = |r: &mut RngStream| vec![random(&[3, 2], r), random(&[3, 2], r)];
    let mask = [true, true, false, true, false, true];
    vec![
        (
            "matmul",
            worst(
                |t, v| t.matmul(v[0], v[1]),
                |r| vec![random(&[3, 4], r), random(&[4, 2], r)],
            ),
        ),
        (
            "transpose",
            worst(|t, v| t.transpose(v[0]), |r| vec![random(&[3, 2], r)]),
        ),
        (
            "add_bias",
            worst(
                |t, v| t.add_bias(v[0], v[1]),
                |r| vec![random(&[3, 4], r), random(&[3], r)],
            ),
        ),
        (
            "concat rows",
            worst(
                |t, v| t.concat(&[v[0], v[1]], 0),
                |r| vec![random(&[2, 3], r), random(&[1, 3], r)],
            ),
        ),
        (
            "concat columns",
            worst(
                |t, v| t.concat(&[v[0], v[1]], 1),
                |r| vec![random(&[2, 3], r), random(&[2, 2], r)],
            ),
        ),
        (
            "slice",
            worst(|t, v| t.slice(v[0], 1, 1, 2), |r| vec![random(&[3, 4], r)]),
        ),
        ("column", worst(|t, v| t.column(v[0], 2), |r| vec![random(&[3, 4], r)])),
        ("sum", worst(|t, v| Ok(t.sum(v[0])), |r| vec![random(&[3, 4], r)])),
        ("pick", worst(|t, v| t.pick(v[0], 2), |r| vec![random(&[4], r)])),
        (
            "gather",
            worst(|t, v| t.gather(v[0], &[2, 0, 2, 1]), |r| vec![random(&[3, 4], r)]),
        ),
        ("add", worst(|t, v| t.add(v[0], v[1]), pair)),
        ("sub", worst(|t, v| t.sub(v[0], v[1]), pair)),
        ("mul", worst(|t, v| t.mul(v[0], v[1]), pair)),
        ("abs", worst(|t, v| Ok(t.abs(v[0])), |r| vec![off_kink(&[3, 2], r)])),
        ("relu", worst(|t, v| Ok(t.relu(v[0])), |r| vec![off_kink(&[3, 2], r)])),
        (
            "sigmoid",
            worst(|t, v| Ok(t.sigmoid(v[0])), |r| vec![random(&[3, 2], r)]),
        ),
        ("tanh", worst(|t, v| Ok(t.tanh(v[0])), |r| vec![random(&[3, 2], r)])),
        (
            "log",
            worst(|t, v| Ok(t.log(t.affine(v[0], 1.0, 2.0))), |r| vec![random(&[3, 2], r)]),
        ),
        (
            "affine",
            worst(|t, v| Ok(t.affine(v[0], -1.5, 0.25)), |r| vec![random(&[4], r)]),
        ),
        ("scale", worst(|t, v| Ok(t.scale(v[0], 3.0)), |r| vec![random(&[4], r)])),
        (
            "div_scalar",
            worst(|t, v| Ok(t.div_scalar(v[0], 3.0)), |r| vec![random(&[4], r)]),
        ),
        (
            "mul_const",
            worst(
                |t, v| t.mul_const(v[0], Tensor::vector(vec![0.5, -2.0, 1.0, 0.0])),
                |r| vec![random(&[4], r)],
            ),
        ),
        (
            "dropout",
            worst(
                |t, v| t.dropout(v[0], 0.3, &mut RngStream::new(9)),
                |r| vec![random(&[4, 3], r)],
            ),
        ),
        (
            "softmax rows",
            worst(|t, v| t.softmax(v[0], 1, None), |r| vec![random(&[3, 4], r)]),
        ),
        (
            "softmax columns",
            worst(|t, v| t.softmax(v[0], 0, None), |r| vec![random(&[3, 4], r)]),
        ),
        (
            "masked softmax",
            worst(
                move |t, v| t.softmax(v[0], 1, Some(&mask)),
                |r| vec![random(&[2, 3], r)],
            ),
        ),
        (
            "weight_norm",
            worst(
                |t, v| t.weight_norm(v[0], v[1]),
                |r| vec![random(&[3, 4], r), Tensor::scalar(r.random_range(0.5..2.0))],
            ),
        ),
        ("row_max", worst(|t, v| t.row_max(v[0]), |r| vec![spread(&[3, 4], r)])),
        (
            "lstm_gates",
            worst(
                |t, v| t.lstm_gates(v[0], v[1]),
                |r| vec![random(&[8, 1], r), random(&[2, 1], r)],
            ),
        ),
        (
            "maxout",
            worst(|t, v| maxout_shrink(t, v[0], 2), |r| vec![spread(&[6, 3], r)]),
        ),
    ]
}

/// Gradient error of `f` with respect to every parameter of `store` and every extra input.
fn layer_error<F>(store: &ParamStore, extra: Vec<Tensor>, f: F) -> f64
where
    F: Fn(&Tape, &Bound, &[Var]) -> Result<Var>,
{
    let n = store.len();
    let mut inputs: Vec<Tensor> = store.ids().map(|id| store.get(id).clone()).collect();
    inputs.extend(extra);
    grad_check_many(
        |tape, vars| f(tape, &Bound::from_vars(vars[..n].to_vec()), &vars[n..]),
        &inputs,
        EPS,
    )
    .unwrap()
}

pub fn layer_errors() -> Vec<(&'static str, f64)> {
    let names = [
        "lstm_step",
        "bilstm_layer",
        "gru_step",
        "ffn_forward",
        "char_cnn_encode",
        "embed_lookup",
    ];
    let mut out: Vec<(&'static str, f64)> = names.iter().map(|&n| (n, 0.0)).collect();
    for seed in SEEDS {
        let mut rng = RngStream::new(seed);
        let mut errors = Vec::new();

        let mut store = ParamStore::new();
        let p = LstmParams::init(&mut store, "lstm", 3, 4, &mut rng);
        let mask = VariationalMask::sample(4, 0.25, &mut rng).unwrap();
        let extra = vec![
            random(&[3, 1], &mut rng),
            random(&[4, 1], &mut rng),
            random(&[4, 1], &mut rng),
        ];
        errors.push(layer_error(&store, extra, |t, b, v| {
            let (h, c) = lstm_step(t, b, &p, v[0], v[1], v[2], Some(&mask))?;
            t.concat(&[h, c], 0)
        }));

        let mut store = ParamStore::new();
        let fwd = LstmParams::init(&mut store, "fwd", 3, 2, &mut rng);
        let bwd = LstmParams::init(&mut store, "bwd", 3, 2, &mut rng);
        let masks = BiMasks::sample(2, 0.25, &mut rng).unwrap();
        errors.push(layer_error(&store, vec![random(&[3, 5], &mut rng)], |t, b, v| {
            Ok(bilstm_layer(t, b, &fwd, &bwd, v[0], 4, Some(&masks))?.output)
        }));

        let mut store = ParamStore::new();
        let g = GruParams::init(&mut store, "gru", 3, &mut rng);
        let extra = vec![random(&[3, 1], &mut rng), random(&[3, 1], &mut rng)];
        errors.push(layer_error(&store, extra, |t, b, v| gru_step(t, b, &g, v[0], v[1])));

        let mut store = ParamStore::new();
        let ffn = FfnParams::init(&mut store, "ffn", 3, 4, true, &mut rng);
        // Zero biases sit on the relu kink.
        for id in [ffn.b1, ffn.b2] {
            store.set(id, off_kink(&[4], &mut rng)).unwrap();
        }
        errors.push(layer_error(&store, vec![random(&[3, 2], &mut rng)], |t, b, v| {
            ffn_forward(t, b, &ffn, v[0])
        }));

        let mut store = ParamStore::new();
        let cnn = CharCnnParams::init(&mut store, "chars", 6, 3, &[1, 3], &[2, 3], &mut rng).unwrap();
        let chars: Vec<usize> = (0..4).map(|_| rng.random_range(1..6)).collect();
        errors.push(layer_error(&store, vec![], |t, b, _| {
            char_cnn_encode(t, b, &cnn, &chars)
        }));

        let mut store = ParamStore::new();
        let table = EmbeddingTable::register(&mut store, "emb", random(&[5, 3], &mut rng), false);
        errors.push(layer_error(&store, vec![], |t, b, _| {
            embed_lookup(t, b, &table, &[4, 1, 4])
        }));

        for (slot, err) in out.iter_mut().zip(errors) {
            slot.1 = slot.1.max(err);
        }
    }
    out
}

fn sequence(len: usize, rng: &mut RngStream) -> SequenceInput {
    let ids = (0..len).map(|_| rng.random_range(1..VOCAB)).collect();
    let chars = (0..len)
        .map(|_| {
            (0..rng.random_range(1..4))
                .map(|_| rng.random_range(1..CHARS))
                .collect()
        })
        .collect();
    SequenceInput::new(ids, chars)
}

/// Full forward and loss at tiny widths with `m = n = 3`.
pub fn model_error(head: Head, train: bool, seed: u64) -> f64 {
    let config = ModelConfig {
        train_embeddings: true,
        ..ModelConfig::tiny()
    };
    let model = SanModel::new(config, VOCAB, CHARS, None, &mut RngStream::new(seed)).unwrap();
    let mut rng = RngStream::new(seed + 100);
    let pair = PairInput {
        premise: sequence(3, &mut rng),
        hypothesis: sequence(3, &mut rng),
    };
    let gold = (seed % 3) as usize;
    // Zero-initialised biases put relu and maxout exactly on their kinks, where
    // central differences are undefined; jitter every parameter off them.
    let mut jitter = RngStream::new(seed + 300);
    let params: Vec<Tensor> = model
        .store
        .ids()
        .map(|id| {
            let t = model.store.get(id);
            let data = t.data().iter().map(|v| v + jitter.random_range(-0.05..0.05)).collect();
            Tensor::new(t.shape(), data).unwrap()
        })
        .collect();
    grad_check_many(
        |tape, vars| {
            let bound = Bound::from_vars(vars.to_vec());
            // A fresh stream per evaluation fixes every dropout mask.
            let mut dropout = RngStream::new(seed + 200);
            let mode = if train { Mode::Train(&mut dropout) } else { Mode::Eval };
            let out = model.forward_on_tape(tape, &bound, &pair, head, mode)?;
            loss(tape, out.aggregate, gold)
        },
        &params,
        EPS,
    )
    .unwrap()
}

/// Worst full-model error per (head, mode) over all seeds.
pub fn model_errors() -> Vec<(&'static str, f64)> {
    let cases = [
        ("multi-step eval", Head::Multi, false),
        ("multi-step train", Head::Multi, true),
        ("single-step train", Head::Single, true),
    ];
    cases
        .iter()
        .map(|&(name, head, train)| {
            let err = SEEDS.map(|seed| model_error(head, train, seed)).fold(0.0, f64::max);
            (name, err)
        })
        .collect()
}
