use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::{AgentId, GameConfig, ObsVector, RoundRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::{play_games_observed, TrainedPair, DEFAULT_ROUNDS_PER_GAME};

/// Fraction of samples held out for evaluation.
pub const HELD_OUT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSource {
    /// The listener's raw act-phase observation.
    Input,
    /// The listener's last hidden layer on that observation.
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProbeVariant {
    pub source: FeatureSource,
    /// When false the opponent's message slot is zeroed before use.
    pub with_message: bool,
}

impl ProbeVariant {
    pub const ALL: [ProbeVariant; 4] = [
        ProbeVariant {
            source: FeatureSource::Input,
            with_message: true,
        },
        ProbeVariant {
            source: FeatureSource::Input,
            with_message: false,
        },
        ProbeVariant {
            source: FeatureSource::Hidden,
            with_message: true,
        },
        ProbeVariant {
            source: FeatureSource::Hidden,
            with_message: false,
        },
    ];

    pub fn name(&self) -> &'static str {
        match (self.source, self.with_message) {
            (FeatureSource::Input, true) => "input",
            (FeatureSource::Input, false) => "input_no_c",
            (FeatureSource::Hidden, true) => "hidden",
            (FeatureSource::Hidden, false) => "hidden_no_c",
        }
    }
}

impl fmt::Display for ProbeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset<T> {
    pub features: Vec<Vec<T>>,
    /// The opponent's action in the same round.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
    pub variant: ProbeVariant,
}

impl<T: Scalar> ProbeDataset<T> {
    pub fn width(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One played round with the listener's act-phase observation.
#[derive(Debug, Clone)]
pub struct ListenerSample<T> {
    pub record: RoundRecord<T>,
    pub observation: ObsVector<T>,
}

/// Plays `n_games` games and keeps what `listener` saw before acting in
/// every round.
pub fn sample_rounds<T: Scalar, R: Rng + ?Sized>(
    pair: &TrainedPair<T>,
    game: &GameConfig<T>,
    listener: AgentId,
    n_games: usize,
    rng: &mut R,
) -> Result<Vec<ListenerSample<T>>> {
    let mut out = Vec::new();
    play_games_observed(pair, game, n_games, DEFAULT_ROUNDS_PER_GAME, rng, 0, &mut |rec, obs| {
        out.push(ListenerSample {
            record: rec.clone(),
            observation: obs.act[listener.index()].clone(),
        })
    })?;
    Ok(out)
}

/// Splits `0..n` into (train, held-out) with a seeded shuffle.
pub fn split_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let held = ((n as f64) * HELD_OUT_FRACTION).round().max(1.0) as usize;
    let held = held.min(n.saturating_sub(1));
    let train = idx.split_off(held);
    (train, idx)
}

/// Builds a dataset for predicting the opponent's action from what
/// `listener` sees.
pub fn collect_probe_dataset<T: Scalar, R: Rng + ?Sized>(
    pair: &TrainedPair<T>,
    game: &GameConfig<T>,
    listener: AgentId,
    n_games: usize,
    variant: ProbeVariant,
    rng: &mut R,
) -> Result<ProbeDataset<T>> {
    if n_games < 2 {
        return Err(Error::Precondition(format!(
            "probe dataset needs at least 2 games, got {n_games}"
        )));
    }
    let samples = sample_rounds(pair, game, listener, n_games, rng)?;
    let (train, held_out) = split_indices(samples.len(), rng);
    dataset_from_samples(pair, listener, &samples, variant, train, held_out)
}

/// Builds one variant from already played rounds, so that all variants
/// share the same games and split.
pub fn dataset_from_samples<T: Scalar>(
    pair: &TrainedPair<T>,
    listener: AgentId,
    samples: &[ListenerSample<T>],
    variant: ProbeVariant,
    train: Vec<usize>,
    held_out: Vec<usize>,
) -> Result<ProbeDataset<T>> {
    let policy = pair.agent(listener);
    let n_classes = policy.shape().n_actions;
    let mut features = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        let mut obs = s.observation.clone();
        if !variant.with_message {
            obs.set_message(listener.other(), None)?;
        }
        let f = match variant.source {
            FeatureSource::Input => obs.values,
            FeatureSource::Hidden => policy.forward(&obs.values)?.hidden,
        };
        features.push(f);
        labels.push(s.record.action(listener.other()));
    }
    Ok(ProbeDataset {
        features,
        labels,
        n_classes,
        train,
        held_out,
        variant,
    })
}
