use std::ops::Range;

use super::network::{ParamGrads, PolicyParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LR: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamConfig<T> {
    pub fn with_lr(lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        Self::with_lr(T::lit(DEFAULT_LR))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &PolicyParams<T>) -> Self {
        Self::zeros(params.as_slice().len())
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam step. Indices inside `frozen` are left untouched,
/// moments included.
pub fn adam_update<T: Scalar>(
    params: &mut PolicyParams<T>,
    grads: &ParamGrads<T>,
    state: &mut AdamState<T>,
    config: &AdamConfig<T>,
    frozen: &[Range<usize>],
) -> Result<()> {
    adam_step(params.as_mut_slice(), &grads.data, state, config, frozen)
}

/// [`adam_update`] over plain slices.
pub fn adam_step<T: Scalar>(
    p: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    config: &AdamConfig<T>,
    frozen: &[Range<usize>],
) -> Result<()> {
    let n = p.len();
    if grads.len() != n {
        return Err(Error::shape("adam gradient", n, grads.len()));
    }
    if state.m.len() != n {
        return Err(Error::shape("adam moments", n, state.m.len()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = T::one() - config.beta1.powi(t);
    let bc2 = T::one() - config.beta2.powi(t);
    let one = T::one();

    let mut mask = vec![false; n];
    for r in frozen {
        mask[r.clone()].iter_mut().for_each(|f| *f = true);
    }

    for i in 0..n {
        if mask[i] {
            continue;
        }
        let g = grads[i];
        let m = config.beta1 * state.m[i] + (one - config.beta1) * g;
        let v = config.beta2 * state.v[i] + (one - config.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        p[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Architecture, NetShape};
    use crate::rng::{stream, Stream};

    fn params() -> PolicyParams<f64> {
        let shape = NetShape {
            input: 4,
            hidden: 3,
            n_actions: 2,
            n_messages: 2,
            architecture: Architecture::Shared,
            activation: Default::default(),
        };
        PolicyParams::init(shape, &mut stream(0, Stream::Agent1Init))
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = params();
        let before = p.clone();
        let g = ParamGrads::zeros_like(&p);
        let mut st = AdamState::new(&p);
        adam_update(&mut p, &g, &mut st, &AdamConfig::default(), &[]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = params();
        let before = p.clone();
        let mut g = ParamGrads::zeros_like(&p);
        for (i, x) in g.data.iter_mut().enumerate() {
            *x = if i % 2 == 0 { 0.37 * (i as f64 + 1.0) } else { -2.1 };
        }
        let mut st = AdamState::new(&p);
        adam_update(&mut p, &g, &mut st, &AdamConfig::default(), &[]).unwrap();
        for ((a, b), gi) in p.as_slice().iter().zip(before.as_slice()).zip(&g.data) {
            // m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + eps)
            let expected = 0.005 * gi / (gi.abs() + 1e-8);
            assert!(((b - a) - expected).abs() < 1e-12);
            assert!(((b - a).abs() - 0.005).abs() < 1e-9);
        }
    }

    #[test]
    fn frozen_ranges_untouched() {
        let mut p = params();
        let before = p.clone();
        let mut g = ParamGrads::zeros_like(&p);
        g.data.iter_mut().for_each(|x| *x = 1.0);
        let mut st = AdamState::new(&p);
        let frozen = p.comm_head_ranges();
        for _ in 0..5 {
            adam_update(&mut p, &g, &mut st, &AdamConfig::default(), &frozen).unwrap();
        }
        for r in &frozen {
            for i in r.clone() {
                assert_eq!(p.as_slice()[i].to_bits(), before.as_slice()[i].to_bits());
                assert_eq!(st.m[i], 0.0);
            }
        }
        assert_ne!(p, before);
    }

    #[test]
    fn deterministic() {
        let mut g = ParamGrads::zeros_like(&params());
        g.data.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64).sin());
        let run = || {
            let mut p = params();
            let mut st = AdamState::new(&p);
            adam_update(&mut p, &g, &mut st, &AdamConfig::default(), &[]).unwrap();
            (p, st)
        };
        assert_eq!(run(), run());
    }
}
