use std::io::Write;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Ablation, Algo, LearnConfig};
use super::loss::{round_loss, PhaseOutputs};
use super::returns::n_step_return;
use crate::env::{
    env_step_observed, AgentId, GameConfig, MemoryBuffer, ObsLayout, ObsVector, RoundObservations, RoundPolicy,
    RoundRecord, SpeakerOrder, Stamp,
};
use crate::error::{Error, Result};
use crate::metrics::{entropy_of_counts, mutual_information, CooccurrenceMatrix};
use crate::net::{
    adam_update, default_hidden_width, AdamConfig, AdamState, Architecture, Categorical, NetShape, ParamGrads,
    PolicyParams, Trace,
};
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;

/// How an agent chooses its message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageMode {
    /// Sampled from the message head.
    Learned,
    /// Uniform over the channel, ignoring the network.
    Uniform,
    /// The action the agent is about to take, sampled at message time.
    OwnAction,
}

/// The two trained agents and how each emits messages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPair<T> {
    pub agents: [PolicyParams<T>; 2],
    pub modes: [MessageMode; 2],
}

impl<T: Scalar> TrainedPair<T> {
    pub fn agent(&self, id: AgentId) -> &PolicyParams<T> {
        &self.agents[id.index()]
    }

    pub fn mode(&self, id: AgentId) -> MessageMode {
        self.modes[id.index()]
    }
}

/// Statistics over one block of `log_window` episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats<T> {
    pub window_start: usize,
    pub episodes: usize,
    pub reward: [T; 2],
    pub sc: [T; 2],
    pub entropy: [T; 2],
    pub reward_var: [T; 2],
    pub advantage_var: [T; 2],
    /// SHA-256 of each agent's message head at the end of the window.
    pub comm_digest: [String; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog<T> {
    pub windows: Vec<WindowStats<T>>,
    pub optimizer_steps: usize,
}

impl<T: Scalar> TrainLog<T> {
    pub fn last(&self) -> Option<&WindowStats<T>> {
        self.windows.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window_start", "reward1", "reward2", "sc1", "sc2", "ent1", "ent2"])?;
        for s in &self.windows {
            let f = |x: T| format!("{}", crate::scalar::round_sig9(x.as_f64()));
            w.write_record([
                s.window_start.to_string(),
                f(s.reward[0]),
                f(s.reward[1]),
                f(s.sc[0]),
                f(s.sc[1]),
                f(s.entropy[0]),
                f(s.entropy[1]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples from a policy network and keeps the forward passes it made.
pub struct Actor<'a, T> {
    params: &'a PolicyParams<T>,
    mode: MessageMode,
    keep: bool,
    speak: Option<(Trace<T>, usize)>,
    act: Option<(Trace<T>, usize)>,
    pending_action: Option<usize>,
    error: Option<Error>,
}

impl<'a, T: Scalar> Actor<'a, T> {
    pub fn new(params: &'a PolicyParams<T>, mode: MessageMode) -> Self {
        Self {
            params,
            mode,
            keep: false,
            speak: None,
            act: None,
            pending_action: None,
            error: None,
        }
    }

    /// Keep forward passes for a later backward pass.
    pub fn recording(mut self) -> Self {
        self.keep = true;
        self
    }

    fn sample<R: Rng + ?Sized>(&mut self, obs: &ObsVector<T>, rng: &mut R, comm: bool) -> Option<(Trace<T>, usize)> {
        if self.error.is_some() {
            return None;
        }
        let mut run = || -> Result<(Trace<T>, usize)> {
            let trace = self.params.forward_trace(&obs.values)?;
            let logits = if comm {
                &trace.outputs.comm_logits
            } else {
                &trace.outputs.action_logits
            };
            let k = Categorical::from_logits(logits)?.sample(rng);
            Ok((trace, k))
        };
        match run() {
            Ok(v) => Some(v),
            Err(e) => {
                self.error = Some(e);
                None
            }
        }
    }

    fn take(self) -> Result<(Option<(Trace<T>, usize)>, Option<(Trace<T>, usize)>)> {
        match self.error {
            Some(e) => Err(e),
            None => Ok((self.speak, self.act)),
        }
    }
}

impl<T: Scalar> RoundPolicy<T> for Actor<'_, T> {
    fn message<R: Rng + ?Sized>(&mut self, obs: &ObsVector<T>, rng: &mut R) -> usize {
        match self.mode {
            MessageMode::Uniform => rng.random_range(0..obs.layout.n_messages),
            MessageMode::Learned | MessageMode::OwnAction => {
                let comm = self.mode == MessageMode::Learned;
                let Some((trace, k)) = self.sample(obs, rng, comm) else {
                    return 0;
                };
                if !comm {
                    self.pending_action = Some(k);
                }
                if self.keep {
                    self.speak = Some((trace, k));
                }
                k
            }
        }
    }

    fn action<R: Rng + ?Sized>(&mut self, obs: &ObsVector<T>, rng: &mut R) -> usize {
        if self.mode == MessageMode::OwnAction {
            return match self.pending_action.take() {
                Some(a) => a,
                None => {
                    self.error
                        .get_or_insert(Error::Protocol("action requested before message".into()));
                    0
                }
            };
        }
        let Some((trace, k)) = self.sample(obs, rng, false) else {
            return 0;
        };
        if self.keep {
            self.act = Some((trace, k));
        }
        k
    }
}

/// How each agent emits messages under `ablation`.
pub fn message_modes(ablation: Ablation, truthful: bool) -> [MessageMode; 2] {
    let base = if ablation == Ablation::RandomC {
        MessageMode::Uniform
    } else {
        MessageMode::Learned
    };
    let first = if truthful { MessageMode::OwnAction } else { base };
    [first, base]
}

/// Plays `games` evaluation games without learning. Iterated games run
/// `rounds_per_game` rounds each with a fresh memory; payoffs are drawn
/// anew every round.
pub fn play_games<T: Scalar, R: Rng + ?Sized>(
    pair: &TrainedPair<T>,
    game: &GameConfig<T>,
    games: usize,
    rounds_per_game: usize,
    rng: &mut R,
    seed: u64,
) -> Result<Vec<RoundRecord<T>>> {
    let mut out = Vec::new();
    play_games_observed(pair, game, games, rounds_per_game, rng, seed, &mut |rec, _| {
        out.push(rec.clone())
    })?;
    Ok(out)
}

/// [`play_games`] that hands every record and the observations behind it to
/// `visit` instead of collecting them.
pub fn play_games_observed<T: Scalar, R: Rng + ?Sized>(
    pair: &TrainedPair<T>,
    game: &GameConfig<T>,
    games: usize,
    rounds_per_game: usize,
    rng: &mut R,
    seed: u64,
    visit: &mut dyn FnMut(&RoundRecord<T>, &RoundObservations<T>),
) -> Result<()> {
    let rounds = if game.iterated { rounds_per_game } else { 1 };
    for g in 0..games {
        let mut memory = game.iterated.then(|| MemoryBuffer::new(game.memory_rounds()));
        for _ in 0..rounds {
            let payoffs = game.sample_payoffs(rng)?;
            let mut p1 = Actor::new(&pair.agents[0], pair.modes[0]);
            let mut p2 = Actor::new(&pair.agents[1], pair.modes[1]);
            let stamp = Stamp {
                episode: g as u64,
                seed,
            };
            let (rec, obs) = env_step_observed(&mut p1, &mut p2, &payoffs, rng, game, memory.as_mut(), stamp)?;
            p1.take()?;
            p2.take()?;
            visit(&rec, &obs);
        }
    }
    Ok(())
}

struct Learner<T> {
    params: PolicyParams<T>,
    grads: ParamGrads<T>,
    adam: AdamState<T>,
    frozen: Vec<Range<usize>>,
}

impl<T: Scalar> Learner<T> {
    fn new(params: PolicyParams<T>, freeze_comm: bool) -> Self {
        let frozen = if freeze_comm {
            params.comm_head_ranges()
        } else {
            Vec::new()
        };
        Self {
            grads: ParamGrads::zeros_like(&params),
            adam: AdamState::new(&params),
            params,
            frozen,
        }
    }

    fn step(&mut self, rounds: usize, adam: &AdamConfig<T>) -> Result<()> {
        self.grads.scale(T::one() / T::from_usize_lossy(rounds));
        adam_update(&mut self.params, &self.grads, &mut self.adam, adam, &self.frozen)?;
        self.grads.reset();
        Ok(())
    }
}

/// One agent's side of a played round.
struct Step<T> {
    speak: Option<(Trace<T>, usize)>,
    act: Option<(Trace<T>, usize)>,
    reward: T,
}

fn act_pass<T>(s: &Step<T>, own_action: bool) -> Option<&(Trace<T>, usize)> {
    if own_action {
        s.speak.as_ref()
    } else {
        s.act.as_ref()
    }
}

#[derive(Default)]
struct WindowAcc {
    count: usize,
    sum_r: [f64; 2],
    sum_r2: [f64; 2],
    sum_adv: [f64; 2],
    sum_adv2: [f64; 2],
    n_adv: [usize; 2],
    counts: Vec<CooccurrenceMatrix>,
}

impl WindowAcc {
    fn new(m: usize, n: usize) -> Self {
        Self {
            counts: vec![CooccurrenceMatrix::new(m, n), CooccurrenceMatrix::new(m, n)],
            ..Default::default()
        }
    }

    fn add_record<T: Scalar>(&mut self, rec: &RoundRecord<T>) {
        self.count += 1;
        for id in AgentId::BOTH {
            let i = id.index();
            let r = rec.reward(id).as_f64();
            self.sum_r[i] += r;
            self.sum_r2[i] += r * r;
            self.counts[i].add(rec.message(id), rec.action(id));
        }
    }

    fn add_advantage(&mut self, agent: usize, adv: f64) {
        self.sum_adv[agent] += adv;
        self.sum_adv2[agent] += adv * adv;
        self.n_adv[agent] += 1;
    }

    fn finish<T: Scalar>(&self, window_start: usize, episodes: usize, digests: [String; 2]) -> Result<WindowStats<T>> {
        let var = |s: f64, s2: f64, n: usize| {
            if n == 0 {
                0.0
            } else {
                let mean = s / n as f64;
                (s2 / n as f64 - mean * mean).max(0.0)
            }
        };
        let per = |f: &dyn Fn(usize) -> Result<T>| -> Result<[T; 2]> { Ok([f(0)?, f(1)?]) };
        Ok(WindowStats {
            window_start,
            episodes,
            reward: per(&|i| Ok(T::lit(self.sum_r[i] / self.count as f64)))?,
            sc: per(&|i| mutual_information(&self.counts[i]))?,
            entropy: per(&|i| Ok(entropy_of_counts(&self.counts[i].row_sums())))?,
            reward_var: per(&|i| Ok(T::lit(var(self.sum_r[i], self.sum_r2[i], self.count))))?,
            advantage_var: per(&|i| Ok(T::lit(var(self.sum_adv[i], self.sum_adv2[i], self.n_adv[i]))))?,
            comm_digest: digests,
        })
    }
}

/// Trains both agents on `game` from scratch.
pub fn train<T: Scalar>(
    game: &GameConfig<T>,
    learn: &LearnConfig<T>,
    seed: u64,
) -> Result<(TrainedPair<T>, TrainLog<T>)> {
    train_observed(game, learn, seed, false, &mut |_| {})
}

/// Trains with agent 1 forced to announce the action it then plays.
pub fn train_truthful_signaler<T: Scalar>(
    game: &GameConfig<T>,
    learn: &LearnConfig<T>,
    seed: u64,
) -> Result<(TrainedPair<T>, TrainLog<T>)> {
    train_observed(game, learn, seed, true, &mut |_| {})
}

/// Effective game settings for a run: ablation and scenario wiring applied.
pub fn effective_game<T: Scalar>(
    game: &GameConfig<T>,
    learn: &LearnConfig<T>,
    truthful: bool,
) -> Result<GameConfig<T>> {
    let mut game = game.clone();
    if learn.ablation == Ablation::ScrambledC {
        game.scramble = true;
    }
    if truthful {
        if game.n_actions > game.n_messages {
            return Err(Error::config(format!(
                "truthful signaling needs at least as many messages as actions ({} > {})",
                game.n_actions, game.n_messages
            )));
        }
        game.speaker_order = SpeakerOrder::Always(AgentId::One);
    }
    game.validate()?;
    Ok(game)
}

/// Network shape used for `game` under `learn`.
pub fn net_shape<T: Scalar>(game: &GameConfig<T>, learn: &LearnConfig<T>) -> NetShape {
    let layout = ObsLayout::new(game.n_actions, game.n_messages, game.memory_rounds());
    NetShape {
        input: layout.len(),
        hidden: learn
            .hidden_width
            .unwrap_or_else(|| default_hidden_width(game.n_actions)),
        n_actions: game.n_actions,
        n_messages: game.n_messages,
        architecture: if learn.ablation == Ablation::SeparateCNet {
            Architecture::SeparateComm
        } else {
            Architecture::Shared
        },
        activation: learn.activation,
    }
}

/// Freshly initialized agents for `seed`, before any training.
pub fn initial_pair<T: Scalar>(
    game: &GameConfig<T>,
    learn: &LearnConfig<T>,
    seed: u64,
    truthful: bool,
) -> TrainedPair<T> {
    let shape = net_shape(game, learn);
    TrainedPair {
        agents: [
            PolicyParams::init(shape, &mut stream(seed, Stream::Agent1Init)),
            PolicyParams::init(shape, &mut stream(seed, Stream::Agent2Init)),
        ],
        modes: message_modes(learn.ablation, truthful),
    }
}

/// Full training loop; `observer` sees every played round in order.
pub fn train_observed<T: Scalar>(
    game: &GameConfig<T>,
    learn: &LearnConfig<T>,
    seed: u64,
    truthful: bool,
    observer: &mut dyn FnMut(&RoundRecord<T>),
) -> Result<(TrainedPair<T>, TrainLog<T>)> {
    learn.validate()?;
    let game = effective_game(game, learn, truthful)?;
    let init = initial_pair(&game, learn, seed, truthful);
    let modes = init.modes;
    let freeze = !learn.ablation.trains_comm();
    let [a1, a2] = init.agents;
    let mut learners = [Learner::new(a1, freeze), Learner::new(a2, freeze)];
    let adam = AdamConfig::with_lr(learn.lr);
    let mut rng = stream(seed, Stream::Env);

    let rounds = if game.iterated { learn.rounds_per_game } else { 1 };
    let n_step = match learn.algo {
        Algo::A2c => learn.n_step,
        Algo::Reinforce => rounds,
    };
    let train_comm = |mode: MessageMode| mode == MessageMode::Learned && learn.ablation.trains_comm();

    let mut log = TrainLog {
        windows: Vec::new(),
        optimizer_steps: 0,
    };
    let mut acc = WindowAcc::new(game.n_messages, game.n_actions);
    let mut batch_rounds = 0usize;
    let mut batch_episodes = 0usize;
    let mut steps: [Vec<Step<T>>; 2] = [Vec::with_capacity(rounds), Vec::with_capacity(rounds)];
    let mut memory = game.iterated.then(|| MemoryBuffer::new(game.memory_rounds()));

    for episode in 0..learn.episodes {
        let window = episode / learn.log_window;
        if let Some(m) = memory.as_mut() {
            m.clear();
        }
        for s in steps.iter_mut() {
            s.clear();
        }
        for _ in 0..rounds {
            let payoffs = game.sample_payoffs(&mut rng)?;
            let [l1, l2] = &learners;
            let mut p1 = Actor::new(&l1.params, modes[0]).recording();
            let mut p2 = Actor::new(&l2.params, modes[1]).recording();
            let stamp = Stamp {
                episode: episode as u64,
                seed,
            };
            let (rec, _) = env_step_observed(&mut p1, &mut p2, &payoffs, &mut rng, &game, memory.as_mut(), stamp)?;
            for (i, p) in [p1, p2].into_iter().enumerate() {
                let (speak, act) = p.take().map_err(|e| match e {
                    Error::Numeric(_) => Error::NonFiniteLoss { window },
                    e => e,
                })?;
                steps[i].push(Step {
                    speak,
                    act,
                    reward: rec.reward(AgentId::BOTH[i]),
                });
            }
            acc.add_record(&rec);
            observer(&rec);
        }

        for (i, learner) in learners.iter_mut().enumerate() {
            let agent_steps = &steps[i];
            let own_action = modes[i] == MessageMode::OwnAction;
            let rewards: Vec<T> = agent_steps.iter().map(|s| s.reward).collect();
            let values: Vec<T> = agent_steps
                .iter()
                .map(|s| act_pass(s, own_action).map_or(T::zero(), |(t, _)| t.outputs.value))
                .collect();
            let returns = n_step_return(&rewards, &values, n_step, learn.gamma);
            let mut total = T::zero();
            for (s, &ret) in agent_steps.iter().zip(&returns) {
                let (act, action) =
                    act_pass(s, own_action).ok_or_else(|| Error::Protocol("missing act-phase pass".into()))?;
                let message = match (&s.speak, train_comm(modes[i])) {
                    (Some((t, m)), true) => Some((&t.outputs, *m)),
                    _ => None,
                };
                let loss = round_loss(
                    &PhaseOutputs {
                        message,
                        action: (&act.outputs, *action),
                    },
                    ret,
                    learn,
                )?;
                total += loss.terms.total(learn);
                acc.add_advantage(i, loss.advantage.as_f64());
                learner
                    .params
                    .backward_into(act, &loss.action_grads, &mut learner.grads)?;
                if let (Some((t, _)), Some(_)) = (&s.speak, &loss.message_grads.comm) {
                    learner
                        .params
                        .backward_into(t, &loss.message_grads, &mut learner.grads)?;
                }
            }
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { window });
            }
        }

        batch_rounds += rounds;
        batch_episodes += 1;
        let last = episode + 1 == learn.episodes;
        if batch_episodes == learn.batch_size || last {
            for l in learners.iter_mut() {
                l.step(batch_rounds, &adam)?;
                if !l.params.is_finite() {
                    return Err(Error::NonFiniteLoss { window });
                }
            }
            log.optimizer_steps += 1;
            batch_rounds = 0;
            batch_episodes = 0;
        }

        if (episode + 1) % learn.log_window == 0 || last {
            let start = window * learn.log_window;
            let digests = learners
                .each_ref()
                .map(|l| l.params.digest(&l.params.comm_head_ranges()));
            log.windows.push(acc.finish(start, episode + 1 - start, digests)?);
            acc = WindowAcc::new(game.n_messages, game.n_actions);
        }
    }

    let [l1, l2] = learners;
    Ok((
        TrainedPair {
            agents: [l1.params, l2.params],
            modes,
        },
        log,
    ))
}
