use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Result, SanError};

/// Seeded, counter-tracked random stream.
///
/// Every stochastic decision (dropout, shuffling, initialisation) draws from
/// an `RngStream`. Sub-streams are derived with [`RngStream::fork`], keyed by
/// a caller-chosen integer, so the values an example sees depend only on
/// `(seed, key path)` and not on how many draws other examples made.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    counter: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            counter: 0,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent child stream identified by `key`.
    pub fn fork(&self, key: u64) -> RngStream {
        let mut mixer = ChaCha8Rng::seed_from_u64(self.seed);
        mixer.set_stream(key.wrapping_add(1));
        RngStream::new(mixer.next_u64())
    }

    pub fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.counter += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.counter += 2;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.counter += dst.len().div_ceil(4) as u64;
        self.inner.fill_bytes(dst)
    }
}

/// Boolean keep-mask produced by [`dropout_mask`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    shape: Vec<usize>,
    keep: Vec<bool>,
}

impl Mask {
    pub fn all(shape: &[usize]) -> Self {
        Mask {
            shape: shape.to_vec(),
            keep: vec![true; shape.iter().product()],
        }
    }

    pub fn from_keep(shape: &[usize], keep: Vec<bool>) -> Result<Self> {
        if shape.iter().product::<usize>() != keep.len() {
            return Err(SanError::shape("mask", shape, "keep length does not match shape"));
        }
        Ok(Mask {
            shape: shape.to_vec(),
            keep,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Inverted-dropout multiplier: kept entries scale by `1/(1-rate)`, dropped are 0.
    pub fn scale_tensor(&self, rate: f64) -> Tensor {
        let s = 1.0 / (1.0 - rate);
        Tensor::from_parts(
            self.shape.clone(),
            self.keep.iter().map(|&k| if k { s } else { 0.0 }).collect(),
        )
    }
}

/// Independent Bernoulli(1 - rate) keep-mask.
pub fn dropout_mask(shape: &[usize], rate: f64, rng: &mut RngStream) -> Result<Mask> {
    if !(0.0..1.0).contains(&rate) {
        return Err(SanError::Parameter(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    let n = shape.iter().product();
    let keep = if rate == 0.0 {
        vec![true; n]
    } else {
        (0..n).map(|_| rng.uniform() >= rate).collect()
    };
    Ok(Mask {
        shape: shape.to_vec(),
        keep,
    })
}
