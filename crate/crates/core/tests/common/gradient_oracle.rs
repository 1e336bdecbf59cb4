//! Finite-difference oracle for the composite per-round loss.

use mcg::net::{Activation, Architecture, NetShape, ParamGrads, PolicyParams};
use mcg::train::{round_loss, LearnConfig, PhaseOutputs};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-6;

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

fn neg_entropy(z: &[f64]) -> f64 {
    log_softmax(z).iter().map(|lp| lp.exp() * lp).sum()
}

pub struct Instance {
    pub params: PolicyParams<f64>,
    pub o_msg: Vec<f64>,
    pub o_act: Vec<f64>,
    message: Option<usize>,
    action: usize,
    ret: f64,
    cfg: LearnConfig<f64>,
}

impl Instance {
    pub fn random(
        rng: &mut ChaCha8Rng,
        activation: Activation,
        architecture: Architecture,
        with_message: bool,
    ) -> Self {
        let shape = NetShape {
            input: rng.random_range(4..12),
            hidden: rng.random_range(3..9),
            n_actions: rng.random_range(2..5),
            n_messages: rng.random_range(2..6),
            architecture,
            activation,
        };
        let mut params = PolicyParams::init(shape, rng);
        for p in params.as_mut_slice() {
            let noise: f64 = StandardNormal.sample(rng);
            *p += 0.3 * noise;
        }
        let mut obs = || {
            (0..shape.input)
                .map(|_| StandardNormal.sample(rng))
                .collect::<Vec<f64>>()
        };
        let (o_msg, o_act) = (obs(), obs());
        let cfg = LearnConfig {
            lambda_c: rng.random_range(0.0..1.0),
            lambda_ent: rng.random_range(0.0..0.5),
            lambda_v: rng.random_range(0.0..1.0),
            ..LearnConfig::default()
        };
        Self {
            message: with_message.then(|| rng.random_range(0..shape.n_messages)),
            action: rng.random_range(0..shape.n_actions),
            ret: 3.0 * Distribution::<f64>::sample(&StandardNormal, rng),
            params,
            o_msg,
            o_act,
            cfg,
        }
    }

    /// Loss with both advantages frozen at the given values.
    fn surrogate(&self, params: &PolicyParams<f64>, adv: f64, adv_c: f64) -> f64 {
        let c = &self.cfg;
        let out = params.forward(&self.o_act).unwrap();
        let mut loss = -log_softmax(&out.action_logits)[self.action] * adv
            + c.lambda_ent * neg_entropy(&out.action_logits)
            + c.lambda_v * (self.ret - out.value).powi(2);
        if let Some(m) = self.message {
            let out = params.forward(&self.o_msg).unwrap();
            loss +=
                c.lambda_c * (-log_softmax(&out.comm_logits)[m] * adv_c) + c.lambda_ent * neg_entropy(&out.comm_logits);
        }
        loss
    }

    /// Largest relative error over all parameters.
    pub fn check(&self) -> f64 {
        let out_a = self.params.forward(&self.o_act).unwrap();
        let out_m = self.params.forward(&self.o_msg).unwrap();
        let phases = PhaseOutputs {
            message: self.message.map(|m| (&out_m, m)),
            action: (&out_a, self.action),
        };
        let loss = round_loss(&phases, self.ret, &self.cfg).unwrap();
        let adv = self.ret - out_a.value;
        let adv_c = self.ret - out_m.value;
        let value = self.surrogate(&self.params, adv, adv_c);
        assert!((loss.terms.total(&self.cfg) - value).abs() < 1e-10 * value.abs().max(1.0));

        let mut analytic = self.params.backward(&self.o_act, &loss.action_grads).unwrap();
        let msg: ParamGrads<f64> = self.params.backward(&self.o_msg, &loss.message_grads).unwrap();
        analytic.data.iter_mut().zip(&msg.data).for_each(|(a, b)| *a += b);

        let mut worst: f64 = 0.0;
        let mut p = self.params.clone();
        for i in 0..p.as_slice().len() {
            let x = p.as_slice()[i];
            p.as_mut_slice()[i] = x + STEP;
            let up = self.surrogate(&p, adv, adv_c);
            p.as_mut_slice()[i] = x - STEP;
            let down = self.surrogate(&p, adv, adv_c);
            p.as_mut_slice()[i] = x;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic.data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
        }
        worst
    }
}

/// Runs `count` random instances cycling through activations,
/// architectures and with/without a trained message; returns the worst error.
pub fn worst_error(seed: u64, count: usize) -> f64 {
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let activation = if k % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let architecture = if k % 4 < 2 {
            Architecture::Shared
        } else {
            Architecture::SeparateComm
        };
        let inst = Instance::random(&mut rng, activation, architecture, k % 8 != 7);
        worst = worst.max(inst.check());
    }
    worst
}
