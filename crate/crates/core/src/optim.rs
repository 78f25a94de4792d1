//! Adamax and the step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SanError};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamaxConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        AdamaxConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First moment `m` and infinity-norm accumulator `u`, one pair per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamaxState {
    pub config: AdamaxConfig,
    pub m: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamaxState {
    pub fn new(config: AdamaxConfig, shapes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = shapes.into_iter().collect();
        AdamaxState {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            u: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_store(config: AdamaxConfig, store: &ParamStore) -> Self {
        Self::new(config, store.ids().map(|id| store.get(id).len()))
    }

    /// One update of every parameter with a gradient:
    /// `m ← β₁m + (1−β₁)g`, `u ← max(β₂u, |g|)`, `θ ← θ − lr/(1−β₁ᵗ) · m/(u+ε)`.
    ///
    /// Parameters whose gradient is `None` are left untouched.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(SanError::Parameter(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if let Some(g) = g {
                if g.shape() != p.shape() || p.len() != self.m[i].len() {
                    return Err(SanError::dim("adamax_step", p.shape(), g.shape()));
                }
            }
        }
        self.step += 1;
        let AdamaxConfig { beta1, beta2, epsilon } = self.config;
        let step_size = lr / (1.0 - beta1.powi(self.step.min(i32::MAX as u64) as i32));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let (m, u) = (&mut self.m[i], &mut self.u[i]);
            for (((theta, &g), m), u) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(u) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *u = (beta2 * *u).max(g.abs());
                *theta -= step_size * *m / (*u + epsilon);
            }
        }
        Ok(())
    }

    /// Updates every parameter of `store` in store order.
    pub fn step_store(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>], lr: f64) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        let mut owned: Vec<Tensor> = ids.iter().map(|&id| store.get(id).clone()).collect();
        {
            let mut refs: Vec<&mut Tensor> = owned.iter_mut().collect();
            self.update(&mut refs, grads, lr)?;
        }
        for (id, t) in ids.into_iter().zip(owned) {
            *store.get_mut(id) = t;
        }
        Ok(())
    }
}

/// `base · factor^⌊epoch / interval⌋`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub interval: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base: 0.002,
            factor: 0.5,
            interval: 10,
        }
    }
}

impl LrSchedule {
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let decays = epoch / self.interval.max(1);
        self.base * self.factor.powi(decays.min(i32::MAX as usize) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: Vec<f64>) -> (Tensor, AdamaxState) {
        let n = v.len();
        (Tensor::vector(v), AdamaxState::new(AdamaxConfig::default(), [n]))
    }

    #[test]
    fn schedule_halves_every_ten_epochs() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at_epoch(0), 0.002);
        assert_eq!(s.lr_at_epoch(9), 0.002);
        assert_eq!(s.lr_at_epoch(10), 0.001);
        assert_eq!(s.lr_at_epoch(25), 0.0005);
        assert_eq!(s.lr_at_epoch(10), s.lr_at_epoch(9) / 2.0);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let (mut p, mut st) = one(vec![1.0, -2.0, 3.0]);
        let before = p.clone();
        for _ in 0..100 {
            st.update(&mut [&mut p], &[Some(Tensor::zeros(&[3]))], 0.002).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient() {
        for c in [0.3, -5.0, 1e-3] {
            let (mut p, mut st) = one(vec![0.0; 4]);
            st.update(&mut [&mut p], &[Some(Tensor::full(&[4], c))], 0.01).unwrap();
            // m = 0.1c, u = |c|, step = lr/0.1 · 0.1c/(|c|+ε)
            let expected = -0.01 * c / (c.abs() + 1e-8);
            for &v in p.data() {
                assert!((v - expected).abs() < 1e-15);
                assert_eq!(v.signum(), -c.signum());
            }
        }
    }

    #[test]
    fn infinity_norm_never_drops_below_decayed_value() {
        let (mut p, mut st) = one(vec![0.5, 0.5]);
        let grads = [3.0, 0.1, -2.0, 0.0, 0.0, 5.0];
        for g in grads {
            let prev = st.u[0].clone();
            st.update(&mut [&mut p], &[Some(Tensor::full(&[2], g))], 0.002).unwrap();
            for (u, pu) in st.u[0].iter().zip(&prev) {
                assert!(*u >= 0.999 * pu);
                assert!(*u >= 0.0);
            }
        }
    }

    #[test]
    fn single_step_on_square_decreases_loss() {
        let (mut p, mut st) = one(vec![1.0]);
        st.update(&mut [&mut p], &[Some(Tensor::vector(vec![2.0]))], 0.002)
            .unwrap();
        assert!(p.data()[0].powi(2) < 1.0);
    }

    #[test]
    fn quadratic_bowl_converges_in_200_steps() {
        // f(θ) = ‖θ‖², ∇f = 2θ, from a unit-norm start.
        let (mut p, mut st) = one(vec![0.6, -0.8]);
        for _ in 0..200 {
            let g = Tensor::vector(p.data().iter().map(|v| 2.0 * v).collect());
            st.update(&mut [&mut p], &[Some(g)], 0.05).unwrap();
        }
        assert!(p.l2_norm() < 1e-2, "{:?}", p.data());
    }

    #[test]
    fn identical_inputs_update_bitwise_identically() {
        let run = || {
            let (mut p, mut st) = one(vec![0.1, 0.2, 0.3]);
            for k in 0..10 {
                let g = Tensor::vector(vec![k as f64 * 0.1, -0.5, 0.25]);
                st.update(&mut [&mut p], &[Some(g)], 0.002).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut p, mut st) = one(vec![0.0; 3]);
        assert!(st.update(&mut [&mut p], &[Some(Tensor::zeros(&[2]))], 0.1).is_err());
        assert!(st.update(&mut [], &[], 0.1).is_err());
        assert_eq!(st.step, 0);
    }
}
