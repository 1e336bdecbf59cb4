use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentSpec, MetricName};
use crate::env::{write_jsonl, AgentId, GameConfig, ObsLayout, RoundRecord};
use crate::error::{Error, Result};
use crate::metrics::{
    causal_influence, context_independence, instantaneous_coordination, message_entropy, message_input_norm,
    speaker_consistency, ActionAsMessage, CicReport, MessageDistribution, OwnAction, UniformMessages,
    DEFAULT_CIC_EPSILON,
};
use crate::net::PolicyParams;
use crate::rng::{stream, Stream};
use crate::train::{
    effective_game, message_modes, play_games, train, train_truthful_signaler, MessageMode, TrainLog, TrainedPair,
};
use crate::Real;

const METRICS_FILE: &str = "metrics.csv";
const CIC_FILE: &str = "cic.csv";
const SPEC_FILE: &str = "spec.json";

/// Which agent a metric value belongs to; `Mean` averages the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentLabel {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    Mean,
}

impl AgentLabel {
    pub fn name(self) -> &'static str {
        match self {
            AgentLabel::One => "1",
            AgentLabel::Two => "2",
            AgentLabel::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(AgentLabel::One),
            "2" => Ok(AgentLabel::Two),
            "mean" => Ok(AgentLabel::Mean),
            _ => Err(Error::config(format!("agent must be 1, 2 or mean, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: String,
    pub agent: AgentLabel,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub values: Vec<MetricValue>,
    /// Per-game CIC with each agent as listener; empty when not requested.
    pub cic_per_game: [Vec<f64>; 2],
}

impl SeedResult {
    pub fn value(&self, metric: &str, agent: AgentLabel) -> Option<f64> {
        self.values
            .iter()
            .find(|v| v.metric == metric && v.agent == agent)
            .map(|v| v.value)
    }
}

/// Mean and standard error across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub agent: AgentLabel,
    pub mean: f64,
    pub std_err: f64,
    pub n_seeds: usize,
}

impl Aggregate {
    pub fn two_se(&self) -> f64 {
        2.0 * self.std_err
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Where the reported metrics were measured.
    pub evaluation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub name: String,
    pub dir: PathBuf,
    pub spec_hash: String,
    pub seeds: Vec<u64>,
    pub train_logs: Vec<PathBuf>,
    pub aggregate: Vec<Aggregate>,
    pub provenance: Provenance,
    #[serde(skip)]
    pub per_seed: Vec<SeedResult>,
}

impl ResultBundle {
    pub fn get(&self, metric: &str, agent: AgentLabel) -> Option<&Aggregate> {
        self.aggregate.iter().find(|a| a.metric == metric && a.agent == agent)
    }

    /// Per-game CIC values pooled over seeds for one listener.
    pub fn pooled_cic(&self, listener: AgentId) -> CicReport<f64> {
        let all = self
            .per_seed
            .iter()
            .flat_map(|s| s.cic_per_game[listener.index()].iter().copied())
            .collect();
        CicReport::from_values(all)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Hash of everything that determines per-seed results. Seeds, name, output
/// location and worker count are left out so that more seeds can be added
/// to an existing cell.
pub fn spec_hash(spec: &ExperimentSpec) -> String {
    let description = format!(
        "{}|{:?}|{:?}|{}|{:?}|{}",
        env!("CARGO_PKG_VERSION"),
        spec.game,
        spec.learn,
        spec.eval_games,
        spec.metrics,
        spec.truthful_signaler
    );
    hex::encode(Sha256::digest(description.as_bytes()))
}

pub fn cell_dir(spec: &ExperimentSpec) -> PathBuf {
    spec.output_dir.join(&spec.name)
}

pub fn seed_dir(spec: &ExperimentSpec, seed: u64) -> PathBuf {
    cell_dir(spec).join(format!("seed_{seed}"))
}

#[derive(Debug, Serialize, Deserialize)]
struct SpecStamp {
    spec_hash: String,
    description: String,
}

fn claim_dir(spec: &ExperimentSpec, hash: &str) -> Result<()> {
    let dir = cell_dir(spec);
    fs::create_dir_all(&dir)?;
    let path = dir.join(SPEC_FILE);
    if path.exists() {
        let stamp: SpecStamp = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if stamp.spec_hash != hash {
            return Err(Error::IncompatibleResume {
                dir: dir.display().to_string(),
            });
        }
        return Ok(());
    }
    let stamp = SpecStamp {
        spec_hash: hash.to_string(),
        description: format!("{:?} {:?}", spec.game, spec.learn),
    };
    fs::write(path, serde_json::to_string_pretty(&stamp)?)?;
    Ok(())
}

/// Trains one seed of `spec` from scratch.
pub fn train_seed(spec: &ExperimentSpec, seed: u64) -> Result<(TrainedPair<Real>, TrainLog<Real>)> {
    if spec.truthful_signaler {
        train_truthful_signaler(&spec.game, &spec.learn, seed)
    } else {
        train(&spec.game, &spec.learn, seed)
    }
}

/// Rebuilds a trained pair from the checkpoints in a seed directory.
pub fn load_pair(spec: &ExperimentSpec, dir: &Path) -> Result<TrainedPair<Real>> {
    Ok(TrainedPair {
        agents: [
            PolicyParams::load(&dir.join("agent1.json"))?,
            PolicyParams::load(&dir.join("agent2.json"))?,
        ],
        modes: message_modes(spec.learn.ablation, spec.truthful_signaler),
    })
}

/// The game actually played by `spec`, with ablation effects applied.
pub fn played_game(spec: &ExperimentSpec) -> Result<GameConfig<Real>> {
    effective_game(&spec.game, &spec.learn, spec.truthful_signaler)
}

fn speaker_view<'a>(pair: &'a TrainedPair<Real>, speaker: AgentId) -> Box<dyn MessageDistribution<Real> + 'a> {
    let params = pair.agent(speaker);
    match pair.mode(speaker) {
        MessageMode::Learned => Box::new(params.clone()),
        MessageMode::Uniform => Box::new(UniformMessages),
        MessageMode::OwnAction => Box::new(ActionAsMessage { policy: params }),
    }
}

/// Evaluation records plus every requested metric for one trained pair.
pub struct Evaluation {
    pub records: Vec<RoundRecord<Real>>,
    pub values: Vec<MetricValue>,
    pub cic_per_game: [Vec<f64>; 2],
}

/// Plays `spec.eval_games` fresh games with frozen stochastic policies and
/// computes the requested metrics. `log` supplies the final-window values.
pub fn evaluate(
    spec: &ExperimentSpec,
    pair: &TrainedPair<Real>,
    log: Option<&TrainLog<Real>>,
    seed: u64,
) -> Result<Evaluation> {
    let game = played_game(spec)?;
    let mut rng = stream(seed, Stream::Eval);
    let records = play_games(pair, &game, spec.eval_games, spec.learn.rounds_per_game, &mut rng, seed)?;
    let m = game.n_messages;
    let mut values = Vec::new();
    let mut push = |metric: MetricName, pair_values: [f64; 2]| {
        for (agent, v) in [
            (AgentLabel::One, pair_values[0]),
            (AgentLabel::Two, pair_values[1]),
            (AgentLabel::Mean, 0.5 * (pair_values[0] + pair_values[1])),
        ] {
            values.push(MetricValue {
                metric: metric.name().to_string(),
                agent,
                value: v,
            });
        }
    };
    let mut cic_per_game = [Vec::new(), Vec::new()];
    for &metric in &spec.metrics {
        let v = match metric {
            MetricName::Reward => {
                let n = records.len() as f64;
                let r = |a| records.iter().map(|r| r.reward(a)).sum::<f64>() / n;
                [r(AgentId::One), r(AgentId::Two)]
            }
            MetricName::FinalReward | MetricName::FinalSc => {
                let Some(last) = log.and_then(TrainLog::last) else {
                    continue;
                };
                if metric == MetricName::FinalReward {
                    last.reward
                } else {
                    last.sc
                }
            }
            MetricName::Sc => speaker_consistency(&records, m)?.into(),
            MetricName::Ic => instantaneous_coordination(&records, m)?.into(),
            MetricName::Entropy => message_entropy(&records, m)?.into(),
            MetricName::Ci => {
                let extractor = OwnAction {
                    n_actions: game.n_actions,
                };
                context_independence(&records, m, &extractor)?.into()
            }
            MetricName::Cic | MetricName::CicBelow => {
                if cic_per_game[0].is_empty() {
                    for listener in AgentId::BOTH {
                        let speaker = speaker_view(pair, listener.other());
                        let report = causal_influence(
                            pair.agent(listener),
                            listener,
                            speaker.as_ref(),
                            &game,
                            spec.eval_games,
                            &mut rng,
                        )?;
                        cic_per_game[listener.index()] = report.per_game;
                    }
                }
                let reports = cic_per_game.clone().map(CicReport::from_values);
                if metric == MetricName::Cic {
                    reports.map(|r| r.mean)
                } else {
                    reports.map(|r| r.fraction_below(DEFAULT_CIC_EPSILON))
                }
            }
            MetricName::Min => {
                let layout = ObsLayout::new(game.n_actions, m, game.memory_rounds());
                let norm = |a| message_input_norm(pair.agent(a), &layout, a);
                [norm(AgentId::One)?, norm(AgentId::Two)?]
            }
        };
        push(metric, v);
    }
    Ok(Evaluation {
        records,
        values,
        cic_per_game,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn write_metric_values(values: &[MetricValue]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "agent", "value"])?;
    for v in values {
        w.write_record([v.metric.as_str(), v.agent.name(), &v.value.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn read_metric_values(path: &Path) -> Result<Vec<MetricValue>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let value = row[2]
            .parse()
            .map_err(|_| Error::Numeric(format!("bad value `{}` in {}", &row[2], path.display())))?;
        out.push(MetricValue {
            metric: row[0].to_string(),
            agent: AgentLabel::parse(&row[1])?,
            value,
        });
    }
    Ok(out)
}

/// Per-game CIC as CSV with columns (game, listener, cic).
pub fn cic_csv(per_game: &[Vec<f64>; 2]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["game", "listener", "cic"])?;
    for listener in AgentId::BOTH {
        for (g, v) in per_game[listener.index()].iter().enumerate() {
            w.write_record([g.to_string(), listener.number().to_string(), v.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn read_cic(path: &Path) -> Result<[Vec<f64>; 2]> {
    let mut out = [Vec::new(), Vec::new()];
    if !path.exists() {
        return Ok(out);
    }
    let mut r = csv::Reader::from_path(path)?;
    for row in r.records() {
        let row = row?;
        let listener: u8 = row[1]
            .parse()
            .map_err(|_| Error::Numeric(format!("bad listener in {}", path.display())))?;
        let v: f64 = row[2]
            .parse()
            .map_err(|_| Error::Numeric(format!("bad cic in {}", path.display())))?;
        out[AgentId::from_number(listener)?.index()].push(v);
    }
    Ok(out)
}

/// Trains, evaluates and persists one seed unless its results already exist.
pub fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<SeedResult> {
    let dir = seed_dir(spec, seed);
    let metrics_path = dir.join(METRICS_FILE);
    if !metrics_path.exists() {
        fs::create_dir_all(&dir)?;
        let (pair, log) = train_seed(spec, seed)?;
        let mut csv_bytes = Vec::new();
        log.write_csv(&mut csv_bytes)?;
        write_atomic(&dir.join("train_log.csv"), &csv_bytes)?;
        pair.agents[0].save(&dir.join("agent1.json"))?;
        pair.agents[1].save(&dir.join("agent2.json"))?;
        let eval = evaluate(spec, &pair, Some(&log), seed)?;
        let mut jsonl = Vec::new();
        write_jsonl(&eval.records, &mut jsonl)?;
        write_atomic(&dir.join("eval.jsonl"), &jsonl)?;
        if !eval.cic_per_game[0].is_empty() {
            write_atomic(&dir.join(CIC_FILE), &cic_csv(&eval.cic_per_game)?)?;
        }
        // Written last: its presence marks the seed as complete.
        write_atomic(&metrics_path, &write_metric_values(&eval.values)?)?;
    }
    Ok(SeedResult {
        seed,
        values: read_metric_values(&metrics_path)?,
        cic_per_game: read_cic(&dir.join(CIC_FILE))?,
        dir,
    })
}

/// Mean and standard error of each (metric, agent) across seeds.
pub fn aggregate(results: &[SeedResult]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, AgentLabel), Vec<f64>> = BTreeMap::new();
    for r in results {
        for v in &r.values {
            groups.entry((v.metric.clone(), v.agent)).or_default().push(v.value);
        }
    }
    groups
        .into_iter()
        .map(|((metric, agent), xs)| {
            let (mean, std_err) = mean_and_se(&xs);
            Aggregate {
                metric,
                agent,
                mean,
                std_err,
                n_seeds: xs.len(),
            }
        })
        .collect()
}

/// Sample mean and standard error (sample standard deviation over sqrt n).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn write_aggregate_csv<W: std::io::Write>(aggregate: &[Aggregate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "agent", "mean", "std_err", "n_seeds"])?;
    for a in aggregate {
        w.write_record([
            a.metric.clone(),
            a.agent.name().to_string(),
            a.mean.to_string(),
            a.std_err.to_string(),
            a.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every seed of `spec` on a worker pool, then aggregates.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultBundle> {
    spec.validate()?;
    let started = unix_now();
    let hash = spec_hash(spec);
    claim_dir(spec, &hash)?;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SeedResult>>>> = Mutex::new((0..spec.seeds.len()).map(|_| None).collect());
    let workers = spec.worker_count().min(spec.seeds.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = spec.seeds.get(i) else {
                    break;
                };
                log::info!("{}: seed {seed}", spec.name);
                let result = run_seed(spec, seed);
                slots.lock().expect("result slots")[i] = Some(result);
            });
        }
    });
    let per_seed = slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every seed visited"))
        .collect::<Result<Vec<_>>>()?;

    let aggregate = aggregate(&per_seed);
    let dir = cell_dir(spec);
    let mut bytes = Vec::new();
    write_aggregate_csv(&aggregate, &mut bytes)?;
    write_atomic(&dir.join("aggregate.csv"), &bytes)?;
    let bundle = ResultBundle {
        name: spec.name.clone(),
        dir: dir.clone(),
        spec_hash: hash,
        seeds: spec.seeds.clone(),
        train_logs: per_seed.iter().map(|s| s.dir.join("train_log.csv")).collect(),
        aggregate,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: started,
            finished_unix: unix_now(),
            evaluation: format!(
                "{} post-training test games per seed, stochastic policies",
                spec.eval_games
            ),
        },
        per_seed,
    };
    write_atomic(
        &dir.join("bundle.json"),
        serde_json::to_string_pretty(&bundle)?.as_bytes(),
    )?;
    Ok(bundle)
}

/// Loads a finished cell from disk without training.
pub fn load_bundle(dir: &Path) -> Result<ResultBundle> {
    let file = fs::File::open(dir.join("bundle.json"))?;
    let mut bundle: ResultBundle = serde_json::from_reader(BufReader::new(file))?;
    bundle.per_seed = bundle
        .seeds
        .iter()
        .map(|&seed| {
            let sd = dir.join(format!("seed_{seed}"));
            Ok(SeedResult {
                seed,
                values: read_metric_values(&sd.join(METRICS_FILE))?,
                cic_per_game: read_cic(&sd.join(CIC_FILE))?,
                dir: sd,
            })
        })
        .collect::<Result<_>>()?;
    bundle.dir = dir.to_path_buf();
    Ok(bundle)
}
