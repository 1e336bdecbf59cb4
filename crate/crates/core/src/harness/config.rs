use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Deserialize;

use crate::env::{default_channel_size, AgentId, FixedGame, GameConfig, PayoffMode, SpeakerOrder, DEFAULT_MEMORY_LEN};
use crate::error::{Error, Result};
use crate::net::Activation;
use crate::train::{Ablation, Algo, LearnConfig};
use crate::Real;

pub const DEFAULT_EVAL_GAMES: usize = 1000;
pub const MIN_EVAL_GAMES: usize = 100;
pub const DEFAULT_SEEDS: usize = 10;
pub const DEFAULT_OUTPUT_DIR: &str = "results";

/// Per-seed quantities an experiment can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricName {
    /// Mean reward over the evaluation games.
    Reward,
    /// Mean reward in the last training window.
    FinalReward,
    /// Speaker consistency in the last training window.
    FinalSc,
    Sc,
    Ic,
    Entropy,
    Ci,
    Cic,
    /// Fraction of evaluation games with CIC below the threshold.
    CicBelow,
    /// Norm of first-layer weights reading the opponent's message.
    Min,
}

impl MetricName {
    pub const ALL: [MetricName; 10] = [
        MetricName::Reward,
        MetricName::FinalReward,
        MetricName::FinalSc,
        MetricName::Sc,
        MetricName::Ic,
        MetricName::Entropy,
        MetricName::Ci,
        MetricName::Cic,
        MetricName::CicBelow,
        MetricName::Min,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricName::Reward => "reward",
            MetricName::FinalReward => "final_reward",
            MetricName::FinalSc => "final_sc",
            MetricName::Sc => "sc",
            MetricName::Ic => "ic",
            MetricName::Entropy => "entropy",
            MetricName::Ci => "ci",
            MetricName::Cic => "cic",
            MetricName::CicBelow => "cic_below",
            MetricName::Min => "min",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|m| m.name()).collect();
            Error::config(format!("unknown metric `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub game: GameConfig<Real>,
    pub learn: LearnConfig<Real>,
    pub seeds: Vec<u64>,
    pub eval_games: usize,
    pub metrics: BTreeSet<MetricName>,
    pub output_dir: PathBuf,
    /// Agent 1 announces its own action instead of learning messages.
    pub truthful_signaler: bool,
    pub workers: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "default".into(),
            game: GameConfig::randomized(2),
            learn: LearnConfig::default(),
            seeds: (0..DEFAULT_SEEDS as u64).collect(),
            eval_games: DEFAULT_EVAL_GAMES,
            metrics: MetricName::ALL.into_iter().collect(),
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            truthful_signaler: false,
            workers: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.learn.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.eval_games < MIN_EVAL_GAMES {
            return Err(Error::config(format!("eval_games must be at least {MIN_EVAL_GAMES}")));
        }
        if self.truthful_signaler && self.game.n_actions > self.game.n_messages {
            return Err(Error::config("truthful_signaler needs n_messages >= n_actions"));
        }
        Ok(())
    }

    /// Number of worker threads to use for seeds.
    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            return self.workers;
        }
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    #[serde(default)]
    game: RawGame,
    #[serde(default)]
    learn: RawLearn,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    n_actions: Option<usize>,
    n_messages: Option<usize>,
    payoffs: Option<String>,
    payoff_mean: Option<f64>,
    payoff_variance: Option<f64>,
    iterated: Option<bool>,
    memory_len: Option<usize>,
    message_cost: Option<f64>,
    first_speaker: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLearn {
    lambda_c: Option<f64>,
    lambda_ent: Option<f64>,
    lambda_v: Option<f64>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    gamma: Option<f64>,
    n_step: Option<usize>,
    episodes: Option<usize>,
    algo: Option<String>,
    ablation: Option<String>,
    rounds_per_game: Option<usize>,
    log_window: Option<usize>,
    hidden_width: Option<usize>,
    activation: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    name: Option<String>,
    seeds: Option<Vec<u64>>,
    eval_games: Option<usize>,
    metrics: Option<Vec<String>>,
    output_dir: Option<PathBuf>,
    truthful_signaler: Option<bool>,
    workers: Option<usize>,
}

const GAME_KEYS: [&str; 9] = [
    "n_actions",
    "n_messages",
    "payoffs",
    "payoff_mean",
    "payoff_variance",
    "iterated",
    "memory_len",
    "message_cost",
    "first_speaker",
];
const LEARN_KEYS: [&str; 14] = [
    "lambda_c",
    "lambda_ent",
    "lambda_v",
    "lr",
    "batch_size",
    "gamma",
    "n_step",
    "episodes",
    "algo",
    "ablation",
    "rounds_per_game",
    "log_window",
    "hidden_width",
    "activation",
];
const RUN_KEYS: [&str; 7] = [
    "name",
    "seeds",
    "eval_games",
    "metrics",
    "output_dir",
    "truthful_signaler",
    "workers",
];

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned inside `[section]`, or 0 if absent.
fn key_line(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    0
}

fn section_of(key: &str) -> &'static str {
    if GAME_KEYS.contains(&key) {
        "game"
    } else if LEARN_KEYS.contains(&key) {
        "learn"
    } else {
        "run"
    }
}

/// Attaches the key and line to a validation error whose message starts with
/// (or mentions) a configuration key.
fn locate(text: &str, err: Error) -> Error {
    let Error::Config(message) = err else {
        return err;
    };
    let key = GAME_KEYS
        .iter()
        .chain(LEARN_KEYS.iter())
        .chain(RUN_KEYS.iter())
        .filter_map(|k| message.find(k).map(|pos| (pos, *k)))
        .min_by_key(|&(pos, k)| (pos, usize::MAX - k.len()))
        .map(|(_, k)| k);
    match key {
        Some(key) => Error::ConfigAt {
            key: key.to_string(),
            line: key_line(text, section_of(key), key),
            message,
        },
        None => Error::Config(message),
    }
}

fn bad(text: &str, section: &str, key: &str, message: String) -> Error {
    Error::ConfigAt {
        key: key.to_string(),
        line: key_line(text, section, key),
        message,
    }
}

fn parse_activation(s: &str) -> Option<Activation> {
    match s {
        "relu" => Some(Activation::Relu),
        "tanh" => Some(Activation::Tanh),
        _ => None,
    }
}

fn parse_algo(s: &str) -> Option<Algo> {
    match s {
        "reinforce" => Some(Algo::Reinforce),
        "a2c" => Some(Algo::A2c),
        _ => None,
    }
}

/// Parses a TOML experiment description with `[game]`, `[learn]` and `[run]`
/// sections. Missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let raw: RawDoc = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| line_of_offset(text, s.start));
        let key = e
            .message()
            .split('`')
            .nth(1)
            .map(str::to_string)
            .or_else(|| {
                text.lines()
                    .nth(line.saturating_sub(1))
                    .and_then(|l| l.split_once('='))
                    .map(|(k, _)| k.trim().to_string())
            })
            .unwrap_or_default();
        Error::ConfigAt {
            key,
            line,
            message: e.message().to_string(),
        }
    })?;
    let g = raw.game;
    let l = raw.learn;
    let r = raw.run;

    let n_actions = g.n_actions.unwrap_or(2);
    let iterated = g.iterated.unwrap_or(false);
    let payoff_mode = match g.payoffs.as_deref() {
        None | Some("random") => PayoffMode::Randomized {
            mean: g.payoff_mean.unwrap_or(0.0),
            variance: g.payoff_variance.unwrap_or(crate::env::DEFAULT_PAYOFF_VARIANCE),
        },
        Some(name) => {
            let fixed = FixedGame::from_str(name).map_err(|e| bad(text, "game", "payoffs", e.to_string()))?;
            for key in ["payoff_mean", "payoff_variance"] {
                if key_line(text, "game", key) > 0 {
                    return Err(bad(
                        text,
                        "game",
                        key,
                        format!("{key} has no effect with fixed payoffs"),
                    ));
                }
            }
            PayoffMode::Fixed(fixed)
        }
    };
    let speaker_order = match g.first_speaker.as_deref() {
        None | Some("random") => SpeakerOrder::Random,
        Some("1") | Some("agent1") => SpeakerOrder::Always(AgentId::One),
        Some("2") | Some("agent2") => SpeakerOrder::Always(AgentId::Two),
        Some(other) => {
            return Err(bad(
                text,
                "game",
                "first_speaker",
                format!("first_speaker must be random, agent1 or agent2, got `{other}`"),
            ))
        }
    };
    let game = GameConfig {
        n_actions,
        n_messages: g.n_messages.unwrap_or_else(|| default_channel_size(n_actions)),
        payoff_mode,
        iterated,
        memory_len: if iterated {
            g.memory_len.unwrap_or(DEFAULT_MEMORY_LEN)
        } else {
            g.memory_len.unwrap_or(0)
        },
        scramble: false,
        message_cost: g.message_cost.unwrap_or(0.0),
        speaker_order,
    };

    let algo = match l.algo.as_deref() {
        None => {
            if iterated {
                Algo::A2c
            } else {
                Algo::Reinforce
            }
        }
        Some(s) => parse_algo(s).ok_or_else(|| {
            bad(
                text,
                "learn",
                "algo",
                format!("algo must be reinforce or a2c, got `{s}`"),
            )
        })?,
    };
    let base = if algo == Algo::A2c {
        LearnConfig::a2c()
    } else {
        LearnConfig::default()
    };
    let ablation = match l.ablation.as_deref() {
        None => Ablation::None,
        Some(s) => Ablation::from_str(s).map_err(|e| bad(text, "learn", "ablation", e.to_string()))?,
    };
    let activation = match l.activation.as_deref() {
        None => base.activation,
        Some(s) => parse_activation(s).ok_or_else(|| {
            bad(
                text,
                "learn",
                "activation",
                format!("activation must be relu or tanh, got `{s}`"),
            )
        })?,
    };
    let learn = LearnConfig {
        lambda_c: l.lambda_c.unwrap_or(base.lambda_c),
        lambda_ent: l.lambda_ent.unwrap_or(base.lambda_ent),
        lambda_v: l.lambda_v.unwrap_or(base.lambda_v),
        lr: l.lr.unwrap_or(base.lr),
        batch_size: l.batch_size.unwrap_or(base.batch_size),
        gamma: l.gamma.unwrap_or(base.gamma),
        n_step: l.n_step.unwrap_or(base.n_step),
        episodes: l.episodes.unwrap_or(base.episodes),
        algo,
        ablation,
        rounds_per_game: l.rounds_per_game.unwrap_or(base.rounds_per_game),
        log_window: l.log_window.unwrap_or(base.log_window),
        hidden_width: l.hidden_width.or(base.hidden_width),
        activation,
    };

    let defaults = ExperimentSpec::default();
    let metrics = match r.metrics {
        None => defaults.metrics,
        Some(names) => names
            .iter()
            .map(|s| MetricName::from_str(s))
            .collect::<Result<_>>()
            .map_err(|e| {
                locate(
                    text,
                    Error::config(format!(
                        "metrics: {}",
                        e.to_string().trim_start_matches("configuration error: ")
                    )),
                )
            })?,
    };
    let spec = ExperimentSpec {
        name: r.name.unwrap_or(defaults.name),
        game,
        learn,
        seeds: r.seeds.unwrap_or(defaults.seeds),
        eval_games: r.eval_games.unwrap_or(defaults.eval_games),
        metrics,
        output_dir: r.output_dir.unwrap_or(defaults.output_dir),
        truthful_signaler: r.truthful_signaler.unwrap_or(false),
        workers: r.workers.unwrap_or(0),
    };
    spec.validate().map_err(|e| locate(text, e))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn located(text: &str) -> (String, usize) {
        match parse_config(text) {
            Err(Error::ConfigAt { key, line, .. }) => (key, line),
            other => panic!("expected located error, got {other:?}"),
        }
    }

    #[test]
    fn empty_learn_section_uses_defaults() {
        let spec = parse_config("[learn]\n").unwrap();
        assert_eq!(spec.learn.lr, 0.005);
        assert_eq!(spec.learn.batch_size, 64);
        assert_eq!(spec.learn.episodes, 250_000);
        assert_eq!(spec.seeds.len(), 10);
        assert_eq!(spec.eval_games, 1000);
    }

    #[test]
    fn channel_follows_matrix_size() {
        let spec = parse_config("[game]\nn_actions = 4\n").unwrap();
        assert_eq!(spec.game.n_messages, 6);
        let spec = parse_config("[game]\nn_actions = 8\n").unwrap();
        assert_eq!(spec.game.n_messages, 10);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        assert_eq!(located("[run]\n\nseeds = [1, 1]\n"), ("seeds".into(), 3));
    }

    #[test]
    fn unknown_key_named_with_line() {
        assert_eq!(located("[game]\nn_actions = 2\nbogus = 3\n"), ("bogus".into(), 3));
        assert!(matches!(parse_config("[extra]\n"), Err(Error::ConfigAt { .. })));
    }

    #[test]
    fn type_mismatch_named_with_line() {
        assert_eq!(located("[learn]\nlr = \"fast\"\n"), ("lr".into(), 2));
    }

    #[test]
    fn constraint_violation_named_with_line() {
        assert_eq!(located("[learn]\nlr = 0.01\ngamma = 1.5\n"), ("gamma".into(), 3));
        assert_eq!(located("[run]\neval_games = 10\n"), ("eval_games".into(), 2));
        assert_eq!(located("[learn]\nablation = \"loud\"\n"), ("ablation".into(), 2));
    }

    #[test]
    fn iterated_defaults_to_a2c() {
        let spec = parse_config("[game]\niterated = true\n").unwrap();
        assert_eq!(spec.learn.algo, Algo::A2c);
        assert_eq!(spec.learn.gamma, 0.9);
        assert_eq!(spec.learn.n_step, 5);
        assert_eq!(spec.game.memory_len, 5);
    }

    #[test]
    fn fixed_game_and_options() {
        let text = "[game]\npayoffs = \"prisoners_dilemma\"\n[learn]\nactivation = \"tanh\"\nablation = \"random_c\"\n[run]\nmetrics = [\"sc\", \"reward\"]\n";
        let spec = parse_config(text).unwrap();
        assert!(matches!(
            spec.game.payoff_mode,
            PayoffMode::Fixed(FixedGame::PrisonersDilemma)
        ));
        assert_eq!(spec.learn.activation, Activation::Tanh);
        assert_eq!(spec.learn.ablation, Ablation::RandomC);
        assert_eq!(spec.metrics.len(), 2);
    }
}
