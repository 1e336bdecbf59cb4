//! Analytic gradients of the composite per-round loss against central
//! finite differences of an independently written surrogate.

#[path = "common/gradient_oracle.rs"]
mod gradient_oracle;

use gradient_oracle::{worst_error, Instance, FLOOR, STEP, TOLERANCE};
use mcg::net::{Activation, Architecture, HeadGrads};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn composite_loss_gradient_matches_finite_differences() {
    let worst = worst_error(2024, 100);
    assert!(worst < TOLERANCE, "worst relative error {worst:e}");
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for activation in [Activation::Tanh, Activation::Relu] {
        let inst = Instance::random(&mut rng, activation, Architecture::Shared, true);
        let n = inst.params.shape().n_actions;
        for k in 0..n {
            let mut onehot = vec![0.0; n];
            onehot[k] = 1.0;
            let heads = HeadGrads {
                action: Some(onehot),
                ..Default::default()
            };
            let analytic = inst.params.input_gradient(&inst.o_act, &heads).unwrap();
            let mut x = inst.o_act.clone();
            for j in 0..x.len() {
                let v = x[j];
                x[j] = v + STEP;
                let up = inst.params.forward(&x).unwrap().action_logits[k];
                x[j] = v - STEP;
                let down = inst.params.forward(&x).unwrap().action_logits[k];
                x[j] = v;
                let numeric = (up - down) / (2.0 * STEP);
                let rel = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(FLOOR);
                assert!(rel < TOLERANCE, "logit {k} input {j}: {rel:e}");
            }
        }
    }
}
