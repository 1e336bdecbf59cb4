use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Softmax distribution over logits, normalized with max-subtraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical<T> {
    pub probs: Vec<T>,
    pub log_probs: Vec<T>,
}

impl<T: Scalar> Categorical<T> {
    pub fn from_logits(logits: &[T]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Numeric("empty logits".into()));
        }
        if logits.iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("NaN logit".into()));
        }
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        if !max.is_finite() {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        let shifted: Vec<T> = logits.iter().map(|&z| z - max).collect();
        let log_norm = shifted.iter().map(|&z| z.exp()).sum::<T>().ln();
        let log_probs: Vec<T> = shifted.iter().map(|&z| z - log_norm).collect();
        let probs = log_probs.iter().map(|&l| l.exp()).collect();
        Ok(Self { probs, log_probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> T {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(p, _)| **p > T::zero())
            .map(|(&p, &l)| p * l)
            .sum::<T>()
    }

    /// Inverse-CDF draw using one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::unit_uniform(rng);
        let mut acc = T::zero();
        for (k, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // rounding left the cumulative sum just below u; take the last
        // index with positive mass
        self.probs
            .iter()
            .rposition(|&p| p > T::zero())
            .unwrap_or(self.probs.len() - 1)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    /// d(-log p[k]) / d logits = p - onehot(k)
    pub fn nll_grad(&self, k: usize) -> Vec<T> {
        let mut g = self.probs.clone();
        g[k] -= T::one();
        g
    }

    /// d(-H) / d logits, elementwise `p_i (log p_i + H)`.
    pub fn neg_entropy_grad(&self) -> Vec<T> {
        let h = self.entropy();
        self.probs
            .iter()
            .zip(&self.log_probs)
            .map(|(&p, &l)| p * (l + h))
            .collect()
    }
}

/// Samples an index and returns it with its log-probability and the
/// distribution's entropy.
pub fn sample_categorical<T: Scalar, R: Rng + ?Sized>(logits: &[T], rng: &mut R) -> Result<(usize, T, T)> {
    let dist = Categorical::from_logits(logits)?;
    let k = dist.sample(rng);
    Ok((k, dist.log_probs[k], dist.entropy()))
}
