//! Flat observation vectors.
//!
//! Layout, from the observing agent's point of view:
//!
//! ```text
//! [ own payoff (n*n) | opponent payoff (n*n) | agent-1 message (M) | agent-2 message (M) | memory ]
//! ```
//!
//! Both payoff tables are indexed `[own action][opponent action]` and
//! flattened row-major, so agent 2 sees transposed views of `r2` and `r1`.
//! Message slots are keyed by agent identity, not by speaking order. The
//! memory block holds `memory_len` entries of one-hot `(a1, a2, m1, m2)`,
//! most recent first, zero-padded.

use std::collections::VecDeque;
use std::ops::Range;

use super::config::AgentId;
use super::payoffs::PayoffPair;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObsLayout {
    pub n_actions: usize,
    pub n_messages: usize,
    pub memory_len: usize,
}

impl ObsLayout {
    pub fn new(n_actions: usize, n_messages: usize, memory_len: usize) -> Self {
        Self {
            n_actions,
            n_messages,
            memory_len,
        }
    }

    fn table(&self) -> usize {
        self.n_actions * self.n_actions
    }

    pub fn memory_entry_len(&self) -> usize {
        2 * self.n_actions + 2 * self.n_messages
    }

    pub fn len(&self) -> usize {
        2 * self.table() + 2 * self.n_messages + self.memory_len * self.memory_entry_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn own_payoff(&self) -> Range<usize> {
        0..self.table()
    }

    pub fn opponent_payoff(&self) -> Range<usize> {
        self.table()..2 * self.table()
    }

    pub fn payoffs(&self) -> Range<usize> {
        0..2 * self.table()
    }

    pub fn message_slot(&self, sender: AgentId) -> Range<usize> {
        let start = 2 * self.table() + sender.index() * self.n_messages;
        start..start + self.n_messages
    }

    pub fn messages(&self) -> Range<usize> {
        let start = 2 * self.table();
        start..start + 2 * self.n_messages
    }

    pub fn memory(&self) -> Range<usize> {
        let start = 2 * self.table() + 2 * self.n_messages;
        start..self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    SpeakFirst,
    SpeakSecond,
    Act,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsVector<T> {
    pub values: Vec<T>,
    pub layout: ObsLayout,
}

impl<T: Scalar> ObsVector<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, range: Range<usize>) -> &[T] {
        &self.values[range]
    }

    /// Overwrites the message slot of `sender` with `message` (one-hot) or zeros.
    pub fn set_message(&mut self, sender: AgentId, message: Option<usize>) -> Result<()> {
        let slot = self.layout.message_slot(sender);
        if let Some(m) = message {
            check_message(m, self.layout.n_messages)?;
        }
        for (k, v) in self.values[slot].iter_mut().enumerate() {
            *v = if Some(k) == message { T::one() } else { T::zero() };
        }
        Ok(())
    }
}

fn check_message(m: usize, bound: usize) -> Result<()> {
    if m >= bound {
        return Err(Error::Range {
            what: "message",
            index: m,
            bound,
        });
    }
    Ok(())
}

fn check_action(a: usize, bound: usize) -> Result<()> {
    if a >= bound {
        return Err(Error::Range {
            what: "action",
            index: a,
            bound,
        });
    }
    Ok(())
}

/// One remembered round: true actions and true messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryEntry {
    pub a1: usize,
    pub a2: usize,
    pub m1: usize,
    pub m2: usize,
}

/// Ring buffer of the most recent rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryBuffer {
    capacity: usize,
    entries: VecDeque<MemoryEntry>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn push(&mut self, entry: MemoryEntry) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_back();
        }
        self.entries.push_front(entry);
    }

    /// Most recent first.
    pub fn iter(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    fn encode_into<T: Scalar>(&self, layout: &ObsLayout, out: &mut [T]) -> Result<()> {
        let n = layout.n_actions;
        let m = layout.n_messages;
        let width = layout.memory_entry_len();
        for (slot, e) in self.entries.iter().take(layout.memory_len).enumerate() {
            check_action(e.a1, n)?;
            check_action(e.a2, n)?;
            check_message(e.m1, m)?;
            check_message(e.m2, m)?;
            let base = slot * width;
            out[base + e.a1] = T::one();
            out[base + n + e.a2] = T::one();
            out[base + 2 * n + e.m1] = T::one();
            out[base + 2 * n + m + e.m2] = T::one();
        }
        Ok(())
    }
}

/// Builds the observation of `role` at `phase`.
///
/// `speak_first` leaves both message slots zero, `speak_second` fills only
/// the opponent's slot, `act` fills both. Messages that the phase does not
/// reveal are ignored.
pub fn build_observation<T: Scalar>(
    payoffs: &PayoffPair<T>,
    layout: &ObsLayout,
    role: AgentId,
    phase: Phase,
    msg1_observed: Option<usize>,
    msg2_observed: Option<usize>,
    memory: Option<&MemoryBuffer>,
) -> Result<ObsVector<T>> {
    let n = layout.n_actions;
    if payoffs.n_actions() != n {
        return Err(Error::shape("payoff", n, payoffs.n_actions()));
    }
    let mut values = vec![T::zero(); layout.len()];
    let (own, opp) = values[layout.payoffs()].split_at_mut(n * n);
    for i in 0..n {
        for j in 0..n {
            // i = own action, j = opponent action
            let (o, p) = match role {
                AgentId::One => (payoffs.r1(i, j), payoffs.r2(i, j)),
                AgentId::Two => (payoffs.r2(j, i), payoffs.r1(j, i)),
            };
            own[i * n + j] = o;
            opp[i * n + j] = p;
        }
    }

    let mut obs = ObsVector {
        values,
        layout: *layout,
    };
    let shown = |sender: AgentId, msg: Option<usize>| match phase {
        Phase::SpeakFirst => None,
        Phase::SpeakSecond if sender == role => None,
        _ => msg,
    };
    obs.set_message(AgentId::One, shown(AgentId::One, msg1_observed))?;
    obs.set_message(AgentId::Two, shown(AgentId::Two, msg2_observed))?;

    if layout.memory_len > 0 {
        if let Some(mem) = memory {
            let range = layout.memory();
            mem.encode_into(layout, &mut obs.values[range])?;
        }
    }
    Ok(obs)
}
