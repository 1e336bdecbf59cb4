use crate::env::{AgentId, RoundRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Joint counts of (message, action) pairs; rows are messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceMatrix {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    total: u64,
}

impl CooccurrenceMatrix {
    pub fn new(n_messages: usize, n_actions: usize) -> Self {
        Self {
            rows: n_messages,
            cols: n_actions,
            counts: vec![0; n_messages * n_actions],
            total: 0,
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Precondition("ragged counts matrix".into()));
        }
        let counts: Vec<u64> = rows.iter().flatten().copied().collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            total: counts.iter().sum(),
            counts,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, message: usize, action: usize) -> u64 {
        self.counts[message * self.cols + action]
    }

    pub fn add(&mut self, message: usize, action: usize) {
        self.counts[message * self.cols + action] += 1;
        self.total += 1;
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.cols.max(1)).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut out = vec![0; self.cols];
        for row in self.counts.chunks(self.cols.max(1)) {
            for (o, &c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }

    /// Returns a copy with rows reordered so that new row `k` is old row `perm[k]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut out = Self::new(self.rows, self.cols);
        for (k, &src) in perm.iter().enumerate() {
            for a in 0..self.cols {
                out.counts[k * self.cols + a] = self.get(src, a);
            }
        }
        out.total = self.total;
        out
    }
}

/// Plug-in mutual information (nats) of the empirical joint.
pub fn mutual_information<T: Scalar>(counts: &CooccurrenceMatrix) -> Result<T> {
    if counts.total == 0 {
        return Err(Error::Precondition("mutual information of empty counts".into()));
    }
    let total = T::lit(counts.total as f64);
    let rows = counts.row_sums();
    let cols = counts.col_sums();
    let mut terms = Vec::with_capacity(counts.counts.len());
    for (m, &row) in rows.iter().enumerate() {
        if row == 0 {
            continue;
        }
        for (a, &col) in cols.iter().enumerate() {
            let c = counts.get(m, a);
            if c == 0 {
                continue;
            }
            // p(a,m) log p(a,m) / (p(a) p(m)) = c/N log (c N / (row col))
            let c_t = T::lit(c as f64);
            let ratio = c_t * total / (T::lit(row as f64) * T::lit(col as f64));
            terms.push(c_t / total * ratio.ln());
        }
    }
    // A fixed summation order makes the result exactly invariant to
    // relabeling messages or actions.
    terms.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let mi = terms.into_iter().fold(T::zero(), |acc, t| acc + t);
    Ok(mi.max(T::zero()))
}

/// Shannon entropy (nats) of a histogram.
pub fn entropy_of_counts<T: Scalar>(counts: &[u64]) -> T {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return T::zero();
    }
    let n = T::lit(total as f64);
    let h = -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = T::lit(c as f64) / n;
            p * p.ln()
        })
        .sum::<T>();
    h.max(T::zero())
}

fn shape_of<T: Scalar>(records: &[RoundRecord<T>], n_messages: usize) -> Result<(usize, usize)> {
    let first = records
        .first()
        .ok_or_else(|| Error::Precondition("no records".into()))?;
    let n = first.payoffs.n_actions();
    for r in records {
        if r.payoffs.n_actions() != n {
            return Err(Error::Precondition("records mix payoff sizes".into()));
        }
        if r.m1.max(r.m2) >= n_messages {
            return Err(Error::Range {
                what: "message",
                index: r.m1.max(r.m2),
                bound: n_messages,
            });
        }
    }
    Ok((n_messages, n))
}

/// Counts of (sender's message, listener's action).
pub fn message_action_counts<T: Scalar>(
    records: &[RoundRecord<T>],
    n_messages: usize,
    sender: AgentId,
    actor: AgentId,
) -> Result<CooccurrenceMatrix> {
    let (m, n) = shape_of(records, n_messages)?;
    let mut c = CooccurrenceMatrix::new(m, n);
    for r in records {
        c.add(r.message(sender), r.action(actor));
    }
    Ok(c)
}

/// Mutual information between each agent's message and its own action.
pub fn speaker_consistency<T: Scalar>(records: &[RoundRecord<T>], n_messages: usize) -> Result<(T, T)> {
    let sc = |a| mutual_information(&message_action_counts(records, n_messages, a, a)?);
    Ok((sc(AgentId::One)?, sc(AgentId::Two)?))
}

/// Mutual information between each agent's message and the other agent's action.
pub fn instantaneous_coordination<T: Scalar>(records: &[RoundRecord<T>], n_messages: usize) -> Result<(T, T)> {
    let ic = |a: AgentId| mutual_information(&message_action_counts(records, n_messages, a, a.other())?);
    Ok((ic(AgentId::One)?, ic(AgentId::Two)?))
}

/// Entropy of each agent's empirical message distribution.
pub fn message_entropy<T: Scalar>(records: &[RoundRecord<T>], n_messages: usize) -> Result<(T, T)> {
    shape_of(records, n_messages)?;
    let hist = |a: AgentId| {
        let mut h = vec![0u64; n_messages];
        for r in records {
            h[r.message(a)] += 1;
        }
        entropy_of_counts(&h)
    };
    Ok((hist(AgentId::One), hist(AgentId::Two)))
}
