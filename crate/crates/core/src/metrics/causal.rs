//! One-step causal influence of communication.
//!
//! For each fresh game the speaker's message is forced to every value in
//! turn and the listener's full action distribution is read off; the
//! per-game mutual information is computed from these within-game
//! probabilities, weighted by the speaker's own message distribution.

use rand::Rng;

use crate::env::{build_observation, AgentId, GameConfig, ObsLayout, ObsVector, Phase};
use crate::error::{Error, Result};
use crate::net::{Categorical, PolicyParams};
use crate::scalar::Scalar;

pub const DEFAULT_CIC_EPSILON: f64 = 0.02;

/// An agent that exposes its full action distribution.
pub trait ActionDistribution<T> {
    fn action_probs(&self, obs: &ObsVector<T>) -> Result<Vec<T>>;
    /// Most likely message at `obs`; used to pin the listener's own slot.
    fn greedy_message(&self, obs: &ObsVector<T>) -> Result<usize>;
}

/// An agent that exposes its full message distribution.
pub trait MessageDistribution<T> {
    fn message_probs(&self, obs: &ObsVector<T>) -> Result<Vec<T>>;
}

impl<T: Scalar> ActionDistribution<T> for PolicyParams<T> {
    fn action_probs(&self, obs: &ObsVector<T>) -> Result<Vec<T>> {
        Ok(Categorical::from_logits(&self.forward(&obs.values)?.action_logits)?.probs)
    }

    fn greedy_message(&self, obs: &ObsVector<T>) -> Result<usize> {
        Ok(Categorical::from_logits(&self.forward(&obs.values)?.comm_logits)?.argmax())
    }
}

impl<T: Scalar> MessageDistribution<T> for PolicyParams<T> {
    fn message_probs(&self, obs: &ObsVector<T>) -> Result<Vec<T>> {
        Ok(Categorical::from_logits(&self.forward(&obs.values)?.comm_logits)?.probs)
    }
}

/// A speaker whose message is its own sampled action (truthful signaling).
#[derive(Debug, Clone, Copy)]
pub struct ActionAsMessage<'a, T> {
    pub policy: &'a PolicyParams<T>,
}

impl<T: Scalar> MessageDistribution<T> for ActionAsMessage<'_, T> {
    fn message_probs(&self, obs: &ObsVector<T>) -> Result<Vec<T>> {
        let mut p = self.policy.action_probs(obs)?;
        p.resize(obs.layout.n_messages, T::zero());
        Ok(p)
    }
}

/// A speaker that ignores its input and sends every message equally often.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformMessages;

impl<T: Scalar> MessageDistribution<T> for UniformMessages {
    fn message_probs(&self, obs: &ObsVector<T>) -> Result<Vec<T>> {
        let m = obs.layout.n_messages;
        Ok(vec![T::one() / T::from_usize_lossy(m); m])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CicReport<T> {
    pub per_game: Vec<T>,
    pub mean: T,
}

impl<T: Scalar> CicReport<T> {
    pub fn from_values(per_game: Vec<T>) -> Self {
        let mean = if per_game.is_empty() {
            T::zero()
        } else {
            per_game.iter().copied().sum::<T>() / T::from_usize_lossy(per_game.len())
        };
        Self { per_game, mean }
    }

    /// Fraction of games whose influence is strictly below `eps` nats.
    pub fn fraction_below(&self, eps: T) -> T {
        if self.per_game.is_empty() {
            return T::zero();
        }
        let k = self.per_game.iter().filter(|&&v| v < eps).count();
        T::from_usize_lossy(k) / T::from_usize_lossy(self.per_game.len())
    }
}

fn check_distribution<T: Scalar>(p: &[T], what: &str) -> Result<()> {
    let s: T = p.iter().copied().sum();
    if (s - T::one()).abs() > T::lit(1e-6) || p.iter().any(|x| *x < T::zero() || !x.is_finite()) {
        return Err(Error::Numeric(format!("{what} distribution sums to {s}")));
    }
    Ok(())
}

/// Interventional mutual information for a single game given the speaker's
/// message distribution and the listener's action distribution under each
/// forced message.
pub fn interventional_mi<T: Scalar>(p_message: &[T], p_action_given: &[Vec<T>]) -> T {
    let n = p_action_given.first().map_or(0, Vec::len);
    let mut p_action = vec![T::zero(); n];
    for (pm, row) in p_message.iter().zip(p_action_given) {
        for (pa, &q) in p_action.iter_mut().zip(row) {
            *pa += *pm * q;
        }
    }
    let mut mi = T::zero();
    for (pm, row) in p_message.iter().zip(p_action_given) {
        if *pm <= T::zero() {
            continue;
        }
        for (&q, &pa) in row.iter().zip(&p_action) {
            if q <= T::zero() || pa <= T::zero() {
                continue;
            }
            mi += *pm * q * (q / pa).ln();
        }
    }
    mi.max(T::zero())
}

/// Influence of `speaker`'s message on `listener`'s next action, over
/// `games` freshly sampled games.
pub fn causal_influence<T, L, S, R>(
    listener: &L,
    listener_id: AgentId,
    speaker: &S,
    game: &GameConfig<T>,
    games: usize,
    rng: &mut R,
) -> Result<CicReport<T>>
where
    T: Scalar,
    L: ActionDistribution<T> + ?Sized,
    S: MessageDistribution<T> + ?Sized,
    R: Rng + ?Sized,
{
    if games == 0 {
        return Err(Error::Precondition("need at least one test game".into()));
    }
    let speaker_id = listener_id.other();
    let layout = ObsLayout::new(game.n_actions, game.n_messages, game.memory_rounds());
    let m = game.n_messages;
    let mut values = Vec::with_capacity(games);
    for _ in 0..games {
        let payoffs = game.sample_payoffs(rng)?;
        let speaker_obs = build_observation(&payoffs, &layout, speaker_id, Phase::SpeakFirst, None, None, None)?;
        let p_message = speaker.message_probs(&speaker_obs)?;
        if p_message.len() != m {
            return Err(Error::shape("speaker message distribution", m, p_message.len()));
        }
        check_distribution(&p_message, "speaker message")?;

        let listener_pre = build_observation(&payoffs, &layout, listener_id, Phase::SpeakFirst, None, None, None)?;
        let own = listener.greedy_message(&listener_pre)?;

        let mut p_action_given = Vec::with_capacity(m);
        for j in 0..m {
            let (m1, m2) = match speaker_id {
                AgentId::One => (j, own),
                AgentId::Two => (own, j),
            };
            let obs = build_observation(&payoffs, &layout, listener_id, Phase::Act, Some(m1), Some(m2), None)?;
            let p = listener.action_probs(&obs)?;
            check_distribution(&p, "listener action")?;
            p_action_given.push(p);
        }
        values.push(interventional_mi(&p_message, &p_action_given));
    }
    Ok(CicReport::from_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use approx::assert_abs_diff_eq;

    struct Deaf;
    impl ActionDistribution<f64> for Deaf {
        fn action_probs(&self, _: &ObsVector<f64>) -> Result<Vec<f64>> {
            Ok(vec![0.3, 0.7])
        }
        fn greedy_message(&self, _: &ObsVector<f64>) -> Result<usize> {
            Ok(0)
        }
    }

    /// Takes action = index of agent 1's message.
    struct Copier;
    impl ActionDistribution<f64> for Copier {
        fn action_probs(&self, obs: &ObsVector<f64>) -> Result<Vec<f64>> {
            let slot = obs.segment(obs.layout.message_slot(AgentId::One));
            Ok(slot[..2].to_vec())
        }
        fn greedy_message(&self, _: &ObsVector<f64>) -> Result<usize> {
            Ok(1)
        }
    }

    struct Broken;
    impl MessageDistribution<f64> for Broken {
        fn message_probs(&self, _: &ObsVector<f64>) -> Result<Vec<f64>> {
            Ok(vec![0.5, 0.4])
        }
    }

    fn game(m: usize) -> GameConfig<f64> {
        let mut g = GameConfig::randomized(2);
        g.n_messages = m;
        g
    }

    #[test]
    fn deaf_listener_has_zero_influence() {
        let mut rng = stream(0, Stream::Eval);
        let rep = causal_influence(&Deaf, AgentId::Two, &UniformMessages, &game(4), 50, &mut rng).unwrap();
        assert!(rep.per_game.iter().all(|&v| v == 0.0));
        assert_eq!(rep.mean, 0.0);
        assert_eq!(rep.fraction_below(0.02), 1.0);
    }

    #[test]
    fn copy_channel_gives_ln2() {
        let mut rng = stream(1, Stream::Eval);
        let rep = causal_influence(&Copier, AgentId::Two, &UniformMessages, &game(2), 20, &mut rng).unwrap();
        for v in &rep.per_game {
            assert_abs_diff_eq!(*v, 2f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn bad_distribution_is_numeric_error() {
        let mut rng = stream(2, Stream::Eval);
        let err = causal_influence(&Deaf, AgentId::Two, &Broken, &game(2), 1, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn report_statistics() {
        let r = CicReport::from_values(vec![0.0, 0.01, 0.5, 0.03]);
        assert_abs_diff_eq!(r.mean, 0.135, epsilon = 1e-12);
        assert_eq!(r.fraction_below(0.02), 0.5);
    }
}
