use super::config::LearnConfig;
use crate::error::Result;
use crate::net::{Categorical, HeadGrads, NetOutputs};
use crate::scalar::Scalar;

/// Per-round loss components for one agent.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RoundLossTerms<T> {
    pub j_pol_a: T,
    pub j_pol_c: T,
    pub j_ent_a: T,
    pub j_ent_c: T,
    pub j_v: T,
}

impl<T: Scalar> RoundLossTerms<T> {
    pub fn total(&self, config: &LearnConfig<T>) -> T {
        self.j_pol_a
            + config.lambda_c * self.j_pol_c
            + config.lambda_ent * (self.j_ent_a + self.j_ent_c)
            + config.lambda_v * self.j_v
    }
}

/// Network outputs at the phases one agent acted in, with the sampled choices.
#[derive(Debug, Clone, Copy)]
pub struct PhaseOutputs<'a, T> {
    /// Message-phase outputs and the sent message; `None` when the message
    /// policy is not trained.
    pub message: Option<(&'a NetOutputs<T>, usize)>,
    pub action: (&'a NetOutputs<T>, usize),
}

#[derive(Debug, Clone)]
pub struct RoundLoss<T> {
    pub terms: RoundLossTerms<T>,
    /// Head gradients at the message-phase forward pass.
    pub message_grads: HeadGrads<T>,
    /// Head gradients at the act-phase forward pass.
    pub action_grads: HeadGrads<T>,
    /// Advantage used by the action term, `ret - V(o_act)`.
    pub advantage: T,
}

fn axpy<T: Scalar>(k: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += k * xi;
    }
}

/// Composite loss of one agent for one round given the return `ret`.
///
/// Baselines enter the policy terms as constants, so the value head only
/// receives gradient from the squared error at the act phase.
pub fn round_loss<T: Scalar>(outputs: &PhaseOutputs<'_, T>, ret: T, config: &LearnConfig<T>) -> Result<RoundLoss<T>> {
    let (act_out, action) = outputs.action;
    let pa = Categorical::from_logits(&act_out.action_logits)?;
    let advantage = ret - act_out.value;

    let mut terms = RoundLossTerms {
        j_pol_a: -pa.log_probs[action] * advantage,
        j_ent_a: -pa.entropy(),
        j_v: advantage * advantage,
        ..Default::default()
    };
    let mut ga = pa.nll_grad(action);
    ga.iter_mut().for_each(|g| *g *= advantage);
    axpy(config.lambda_ent, &pa.neg_entropy_grad(), &mut ga);
    let two = T::lit(2.0);
    let action_grads = HeadGrads {
        action: Some(ga),
        comm: None,
        value: Some(-two * config.lambda_v * advantage),
    };

    let mut message_grads = HeadGrads::default();
    if let Some((msg_out, message)) = outputs.message {
        let pc = Categorical::from_logits(&msg_out.comm_logits)?;
        let adv_c = ret - msg_out.value;
        terms.j_pol_c = -pc.log_probs[message] * adv_c;
        terms.j_ent_c = -pc.entropy();
        let mut gc = pc.nll_grad(message);
        gc.iter_mut().for_each(|g| *g *= config.lambda_c * adv_c);
        axpy(config.lambda_ent, &pc.neg_entropy_grad(), &mut gc);
        message_grads.comm = Some(gc);
    }

    Ok(RoundLoss {
        terms,
        message_grads,
        action_grads,
        advantage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outputs(value: f64) -> NetOutputs<f64> {
        NetOutputs {
            action_logits: vec![0.3, -0.2],
            comm_logits: vec![0.1, 0.0, -0.4, 0.2],
            value,
            hidden: vec![],
        }
    }

    #[test]
    fn zero_advantage() {
        let o = outputs(1.25);
        let cfg = LearnConfig::default();
        let l = round_loss(
            &PhaseOutputs {
                message: None,
                action: (&o, 1),
            },
            1.25,
            &cfg,
        )
        .unwrap();
        assert_eq!(l.terms.j_pol_a, 0.0);
        assert_eq!(l.terms.j_v, 0.0);
        assert_eq!(l.action_grads.value, Some(0.0));
    }

    #[test]
    fn untrained_message_contributes_nothing() {
        let o = outputs(0.0);
        let cfg = LearnConfig::default();
        let l = round_loss(
            &PhaseOutputs {
                message: None,
                action: (&o, 0),
            },
            2.0,
            &cfg,
        )
        .unwrap();
        assert_eq!(l.terms.j_pol_c, 0.0);
        assert_eq!(l.terms.j_ent_c, 0.0);
        assert!(l.message_grads.comm.is_none());
        assert!(l.terms.j_v >= 0.0);
    }

    #[test]
    fn total_weights() {
        let t = RoundLossTerms::<f64> {
            j_pol_a: 1.0,
            j_pol_c: 2.0,
            j_ent_a: 3.0,
            j_ent_c: 4.0,
            j_v: 5.0,
        };
        let cfg = LearnConfig::default();
        assert!((t.total(&cfg) - (1.0 + 0.2 + 0.07 + 0.5)).abs() < 1e-12);
    }
}
