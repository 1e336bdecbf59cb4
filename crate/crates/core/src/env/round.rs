use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{AgentId, GameConfig, SpeakerOrder};
use super::observation::{build_observation, MemoryBuffer, MemoryEntry, ObsLayout, ObsVector, Phase};
use super::payoffs::PayoffPair;
use crate::error::{Error, Result};
use crate::scalar::{round_sig9, Scalar};

/// Sampling interface an agent exposes to the environment.
pub trait RoundPolicy<T: Scalar> {
    fn message<R: Rng + ?Sized>(&mut self, obs: &ObsVector<T>, rng: &mut R) -> usize;
    fn action<R: Rng + ?Sized>(&mut self, obs: &ObsVector<T>, rng: &mut R) -> usize;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<T> {
    pub payoffs: PayoffPair<T>,
    pub first_speaker: AgentId,
    pub m1: usize,
    pub m2: usize,
    pub m1_observed: usize,
    pub m2_observed: usize,
    pub a1: usize,
    pub a2: usize,
    pub r1: T,
    pub r2: T,
    pub episode: u64,
    pub seed: u64,
}

impl<T: Scalar> RoundRecord<T> {
    pub fn message(&self, agent: AgentId) -> usize {
        match agent {
            AgentId::One => self.m1,
            AgentId::Two => self.m2,
        }
    }

    pub fn observed_message(&self, agent: AgentId) -> usize {
        match agent {
            AgentId::One => self.m1_observed,
            AgentId::Two => self.m2_observed,
        }
    }

    pub fn action(&self, agent: AgentId) -> usize {
        match agent {
            AgentId::One => self.a1,
            AgentId::Two => self.a2,
        }
    }

    pub fn reward(&self, agent: AgentId) -> T {
        match agent {
            AgentId::One => self.r1,
            AgentId::Two => self.r2,
        }
    }
}

/// Episode index and seed stamped onto each record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stamp {
    pub episode: u64,
    pub seed: u64,
}

/// Intermediate observations of one round, for learners that need them.
#[derive(Debug, Clone)]
pub struct RoundObservations<T> {
    pub speak: [ObsVector<T>; 2],
    pub act: [ObsVector<T>; 2],
}

fn draw_first_speaker<R: Rng + ?Sized>(order: SpeakerOrder, rng: &mut R) -> AgentId {
    match order {
        SpeakerOrder::Random => {
            if rng.random_bool(0.5) {
                AgentId::Two
            } else {
                AgentId::One
            }
        }
        SpeakerOrder::Always(agent) => agent,
    }
}

fn checked(index: usize, bound: usize, what: &str, agent: AgentId) -> Result<usize> {
    if index >= bound {
        return Err(Error::Protocol(format!(
            "agent {} emitted {what} {index}, valid range is [0, {bound})",
            agent.number()
        )));
    }
    Ok(index)
}

/// Plays one round with turn-based messaging followed by simultaneous actions.
///
/// Under scrambling each sent message is replaced by a uniform redraw
/// before anyone observes it; both agents see the same replacement. The
/// memory, when given, is updated with the true actions and messages.
pub fn env_step<T, P1, P2, R>(
    policy1: &mut P1,
    policy2: &mut P2,
    payoffs: &PayoffPair<T>,
    rng: &mut R,
    config: &GameConfig<T>,
    memory: Option<&mut MemoryBuffer>,
    stamp: Stamp,
) -> Result<RoundRecord<T>>
where
    T: Scalar,
    P1: RoundPolicy<T>,
    P2: RoundPolicy<T>,
    R: Rng + ?Sized,
{
    env_step_observed(policy1, policy2, payoffs, rng, config, memory, stamp).map(|(r, _)| r)
}

/// Same as [`env_step`] but also returns every observation shown to the agents.
pub fn env_step_observed<T, P1, P2, R>(
    policy1: &mut P1,
    policy2: &mut P2,
    payoffs: &PayoffPair<T>,
    rng: &mut R,
    config: &GameConfig<T>,
    memory: Option<&mut MemoryBuffer>,
    stamp: Stamp,
) -> Result<(RoundRecord<T>, RoundObservations<T>)>
where
    T: Scalar,
    P1: RoundPolicy<T>,
    P2: RoundPolicy<T>,
    R: Rng + ?Sized,
{
    let n = config.n_actions;
    let m = config.n_messages;
    if payoffs.n_actions() != n {
        return Err(Error::shape("payoff", n, payoffs.n_actions()));
    }
    let layout = ObsLayout::new(n, m, config.memory_rounds());
    let mem = memory.as_deref();

    let first = draw_first_speaker(config.speaker_order, rng);
    let second = first.other();

    let mut speak =
        |agent: AgentId, phase: Phase, sent: [Option<usize>; 2], rng: &mut R| -> Result<(usize, ObsVector<T>)> {
            let obs = build_observation(payoffs, &layout, agent, phase, sent[0], sent[1], mem)?;
            let msg = match agent {
                AgentId::One => policy1.message(&obs, rng),
                AgentId::Two => policy2.message(&obs, rng),
            };
            Ok((checked(msg, m, "message", agent)?, obs))
        };

    let scramble = |msg: usize, rng: &mut R| {
        if config.scramble {
            rng.random_range(0..m)
        } else {
            msg
        }
    };

    let mut observed = [None, None];
    let mut sent = [0usize; 2];
    let (msg_first, obs_first) = speak(first, Phase::SpeakFirst, observed, rng)?;
    sent[first.index()] = msg_first;
    observed[first.index()] = Some(scramble(msg_first, rng));
    let (msg_second, obs_second) = speak(second, Phase::SpeakSecond, observed, rng)?;
    sent[second.index()] = msg_second;
    observed[second.index()] = Some(scramble(msg_second, rng));

    let act_obs = |agent| build_observation(payoffs, &layout, agent, Phase::Act, observed[0], observed[1], mem);
    let obs_act1 = act_obs(AgentId::One)?;
    let obs_act2 = act_obs(AgentId::Two)?;
    let a1 = checked(policy1.action(&obs_act1, rng), n, "action", AgentId::One)?;
    let a2 = checked(policy2.action(&obs_act2, rng), n, "action", AgentId::Two)?;

    let record = RoundRecord {
        payoffs: payoffs.clone(),
        first_speaker: first,
        m1: sent[0],
        m2: sent[1],
        m1_observed: observed[0].expect("sent"),
        m2_observed: observed[1].expect("sent"),
        a1,
        a2,
        r1: payoffs.r1(a1, a2),
        r2: payoffs.r2(a1, a2),
        episode: stamp.episode,
        seed: stamp.seed,
    };
    if let Some(mem) = memory {
        mem.push(MemoryEntry {
            a1,
            a2,
            m1: sent[0],
            m2: sent[1],
        });
    }

    let (speak1, speak2) = match first {
        AgentId::One => (obs_first, obs_second),
        AgentId::Two => (obs_second, obs_first),
    };
    Ok((
        record,
        RoundObservations {
            speak: [speak1, speak2],
            act: [obs_act1, obs_act2],
        },
    ))
}

// JSONL wire form. Floats rounded to nine significant digits.
#[derive(Serialize, Deserialize)]
struct RecordWire {
    payoffs: PayoffWire,
    first_speaker: AgentId,
    m1: usize,
    m2: usize,
    m1_observed: usize,
    m2_observed: usize,
    a1: usize,
    a2: usize,
    r1: f64,
    r2: f64,
    episode: u64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct PayoffWire {
    r1: Vec<Vec<f64>>,
    r2: Vec<Vec<f64>>,
    n: usize,
}

fn rows_f64<T: Scalar>(rows: Vec<Vec<T>>) -> Vec<Vec<f64>> {
    rows.into_iter()
        .map(|r| r.into_iter().map(|x| round_sig9(x.as_f64())).collect())
        .collect()
}

fn rows_t<T: Scalar>(rows: &[Vec<f64>]) -> Vec<Vec<T>> {
    rows.iter().map(|r| r.iter().map(|&x| T::lit(x)).collect()).collect()
}

impl<T: Scalar> RoundRecord<T> {
    pub fn to_json_line(&self) -> Result<String> {
        let wire = RecordWire {
            payoffs: PayoffWire {
                r1: rows_f64(self.payoffs.r1_rows()),
                r2: rows_f64(self.payoffs.r2_rows()),
                n: self.payoffs.n_actions(),
            },
            first_speaker: self.first_speaker,
            m1: self.m1,
            m2: self.m2,
            m1_observed: self.m1_observed,
            m2_observed: self.m2_observed,
            a1: self.a1,
            a2: self.a2,
            r1: round_sig9(self.r1.as_f64()),
            r2: round_sig9(self.r2.as_f64()),
            episode: self.episode,
            seed: self.seed,
        };
        Ok(serde_json::to_string(&wire)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let w: RecordWire = serde_json::from_str(line)?;
        let payoffs = PayoffPair::from_rows(&rows_t(&w.payoffs.r1), &rows_t(&w.payoffs.r2))?;
        if payoffs.n_actions() != w.payoffs.n {
            return Err(Error::shape("payoffs.n", payoffs.n_actions(), w.payoffs.n));
        }
        Ok(Self {
            payoffs,
            first_speaker: w.first_speaker,
            m1: w.m1,
            m2: w.m2,
            m1_observed: w.m1_observed,
            m2_observed: w.m2_observed,
            a1: w.a1,
            a2: w.a2,
            r1: T::lit(w.r1),
            r2: T::lit(w.r2),
            episode: w.episode,
            seed: w.seed,
        })
    }
}

pub fn write_jsonl<T: Scalar, W: Write>(records: &[RoundRecord<T>], mut out: W) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line()?)?;
    }
    Ok(())
}

pub fn read_jsonl<T: Scalar, B: BufRead>(input: B) -> Result<Vec<RoundRecord<T>>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(RoundRecord::from_json_line(&line)?);
    }
    Ok(out)
}
