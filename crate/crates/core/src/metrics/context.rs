use log::warn;

use crate::env::{AgentId, RoundRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Maps a round (from one agent's point of view) to a concept label in
/// `[0, n_concepts)`.
pub trait ConceptExtractor<T> {
    fn n_concepts(&self) -> usize;
    fn concept(&self, record: &RoundRecord<T>, agent: AgentId) -> usize;
}

/// The concept is the agent's own action in that round.
#[derive(Debug, Clone, Copy)]
pub struct OwnAction {
    pub n_actions: usize,
}

impl<T: Scalar> ConceptExtractor<T> for OwnAction {
    fn n_concepts(&self) -> usize {
        self.n_actions
    }

    fn concept(&self, record: &RoundRecord<T>, agent: AgentId) -> usize {
        record.action(agent)
    }
}

/// Context independence for one agent from (concept, message) counts
/// laid out `counts[c][m]`.
pub fn context_independence_from_counts<T: Scalar>(counts: &[Vec<u64>]) -> T {
    let n_concepts = counts.len();
    if n_concepts == 0 {
        return T::zero();
    }
    let n_messages = counts[0].len();
    let msg_totals: Vec<u64> = (0..n_messages).map(|m| counts.iter().map(|row| row[m]).sum()).collect();
    let mut acc = T::zero();
    for (c, row) in counts.iter().enumerate() {
        let concept_total: u64 = row.iter().sum();
        if concept_total == 0 {
            warn!("concept {c} never occurs; contributes 0 to CI");
            continue;
        }
        let p_cm = |m: usize| {
            if msg_totals[m] == 0 {
                T::zero()
            } else {
                T::lit(row[m] as f64) / T::lit(msg_totals[m] as f64)
            }
        };
        // argmax over messages, lowest index wins ties
        let mut best = 0;
        for m in 1..n_messages {
            if p_cm(m) > p_cm(best) {
                best = m;
            }
        }
        let p_mc = T::lit(row[best] as f64) / T::lit(concept_total as f64);
        acc += p_mc * p_cm(best);
    }
    acc / T::from_usize_lossy(n_concepts)
}

pub fn context_independence<T: Scalar, E: ConceptExtractor<T>>(
    records: &[RoundRecord<T>],
    n_messages: usize,
    extractor: &E,
) -> Result<(T, T)> {
    if records.is_empty() {
        return Err(Error::Precondition("no records".into()));
    }
    let k = extractor.n_concepts();
    let ci = |agent: AgentId| -> Result<T> {
        let mut counts = vec![vec![0u64; n_messages]; k];
        for r in records {
            let c = extractor.concept(r, agent);
            if c >= k {
                return Err(Error::Range {
                    what: "concept",
                    index: c,
                    bound: k,
                });
            }
            let m = r.message(agent);
            if m >= n_messages {
                return Err(Error::Range {
                    what: "message",
                    index: m,
                    bound: n_messages,
                });
            }
            counts[c][m] += 1;
        }
        Ok(context_independence_from_counts(&counts))
    };
    Ok((ci(AgentId::One)?, ci(AgentId::Two)?))
}
