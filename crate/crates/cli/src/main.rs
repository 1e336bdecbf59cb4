use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use mcg::env::{default_channel_size, AgentId};
use mcg::harness::{
    cell_dir, check_acceptance, cic_csv, emit_report, evaluate, load_bundle, load_pair, parse_config, parse_criteria,
    played_game, run_experiment, run_grid, run_seed, seed_dir, ExperimentSpec, GridAxes, MetricName, ReportOptions,
    ResultBundle,
};
use mcg::net::Activation;
use mcg::probes::{
    between_class_ratio, collect_activations, dataset_from_samples, pca_project, sample_rounds, split_indices,
    train_probe, write_accuracy_csv, write_pca_csv, ProbeConfig, ProbeKind, ProbeVariant,
};
use mcg::rng::{stream, Stream};
use mcg::train::Ablation;
use mcg::{Error, Pair, Result};

/// Relative output directories are resolved against this when it is set.
const OUTPUT_ROOT_ENV: &str = "MCG_OUTPUT_ROOT";

const EXIT_ACCEPTANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "mcg", version, about = "Matrix communication game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every seed of one experiment cell.
    Train(SpecArgs),
    /// Re-evaluate saved checkpoints and print their metrics.
    Eval {
        #[command(flatten)]
        spec: SpecArgs,
        /// Only this seed (default: all seeds of the spec).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the size by ablation grid and write its report.
    Grid {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        sizes: Vec<usize>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "none,scrambled_c,separate_c_net,no_c_training"
        )]
        ablations: Vec<String>,
        /// Also render SVG bar charts.
        #[arg(long)]
        svg: bool,
    },
    /// Per-game causal influence of communication for one seed.
    Cic {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Opponent-action probes with and without the message.
    Probe {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        games: usize,
        /// Agent whose view is probed (1 or 2).
        #[arg(long, default_value_t = 2)]
        listener: u8,
        #[arg(long, default_value_t = ProbeConfig::default().steps)]
        steps: usize,
    },
    /// PCA of one agent's last-layer activations.
    Pca {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        games: usize,
        #[arg(long, default_value_t = 1)]
        agent: u8,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Write report tables for finished cells.
    Report {
        /// Cell directories, or directories containing cells.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
    },
    /// Check finished cells against a criteria file; exits 1 on any failure.
    Check {
        #[arg(long)]
        criteria: PathBuf,
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

/// Experiment options. Flags override the values from `--config`.
#[derive(Args, Clone, Default)]
struct SpecArgs {
    /// TOML file with [game], [learn] and [run] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    n_actions: Option<usize>,
    #[arg(long)]
    n_messages: Option<usize>,
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    eval_games: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    truthful_signaler: bool,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => ExperimentSpec::default(),
        };
        if let Some(v) = &self.name {
            spec.name = v.clone();
        }
        if let Some(v) = &self.seeds {
            spec.seeds = v.clone();
        }
        if let Some(v) = self.episodes {
            spec.learn.episodes = v;
        }
        if let Some(v) = self.n_actions {
            spec.game.n_actions = v;
            spec.game.n_messages = default_channel_size(v);
        }
        if let Some(v) = self.n_messages {
            spec.game.n_messages = v;
        }
        if let Some(v) = &self.ablation {
            spec.learn.ablation = Ablation::from_str(v)?;
        }
        if let Some(v) = &self.activation {
            spec.learn.activation = match v.as_str() {
                "relu" => Activation::Relu,
                "tanh" => Activation::Tanh,
                _ => return Err(Error::config(format!("activation must be relu or tanh, got `{v}`"))),
            };
        }
        if let Some(v) = self.eval_games {
            spec.eval_games = v;
        }
        if let Some(v) = &self.output_dir {
            spec.output_dir = v.clone();
        }
        if let Some(v) = self.workers {
            spec.workers = v;
        }
        spec.truthful_signaler |= self.truthful_signaler;
        spec.output_dir = under_root(&spec.output_dir);
        spec.validate()?;
        Ok(spec)
    }
}

fn under_root(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn print_bundle(bundle: &ResultBundle) {
    println!(
        "cell {} ({} seeds) -> {}",
        bundle.name,
        bundle.seeds.len(),
        bundle.dir.display()
    );
    for a in &bundle.aggregate {
        println!(
            "  {:<13} {:<4} {:>12.6} +- {:.6}",
            a.metric,
            a.agent.name(),
            a.mean,
            a.two_se()
        );
    }
}

/// Saved checkpoints for `seed`, training and persisting them first if needed.
fn pair_for(spec: &ExperimentSpec, seed: u64) -> Result<Pair> {
    let dir = seed_dir(spec, seed);
    if !dir.join("agent2.json").exists() {
        log::info!("no checkpoint for seed {seed}; training it");
        run_seed(spec, seed)?;
    }
    load_pair(spec, &dir)
}

fn agent(n: u8) -> Result<AgentId> {
    AgentId::from_number(n)
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Cell directories named directly, or found one level below.
fn bundle_dirs(dirs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for d in dirs {
        let d = under_root(d);
        if d.join("bundle.json").exists() {
            out.push(d);
            continue;
        }
        let mut found: Vec<PathBuf> = fs::read_dir(&d)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", d.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("bundle.json").exists())
            .collect();
        if found.is_empty() {
            return Err(Error::config(format!("no finished cells under {}", d.display())));
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

fn load_bundles(dirs: &[PathBuf]) -> Result<Vec<ResultBundle>> {
    bundle_dirs(dirs)?.iter().map(|d| load_bundle(d)).collect()
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let bundle = run_experiment(&args.resolve()?)?;
            print_bundle(&bundle);
        }
        Command::Eval { spec, seed } => {
            let spec = spec.resolve()?;
            let seeds = seed.map_or_else(|| spec.seeds.clone(), |s| vec![s]);
            println!("seed,metric,agent,value");
            for s in seeds {
                let pair = load_pair(&spec, &seed_dir(&spec, s))?;
                let eval = evaluate(&spec, &pair, None, s)?;
                for v in eval.values {
                    println!("{s},{},{},{}", v.metric, v.agent.name(), v.value);
                }
            }
        }
        Command::Grid {
            spec,
            sizes,
            ablations,
            svg,
        } => {
            let base = spec.resolve()?;
            let axes = GridAxes {
                sizes,
                ablations: ablations.iter().map(|a| Ablation::from_str(a)).collect::<Result<_>>()?,
            };
            let cells = run_grid(&base, &axes);
            let mut bundles = Vec::new();
            let mut failed = false;
            for cell in cells {
                match cell.result {
                    Ok(b) => {
                        print_bundle(&b);
                        bundles.push(b);
                    }
                    Err(e) => {
                        eprintln!("cell {}x{} {} failed: {e}", cell.size, cell.size, cell.ablation);
                        failed = true;
                    }
                }
            }
            if !bundles.is_empty() {
                let out = cell_dir(&base).join("report");
                for p in emit_report(&bundles, &out, ReportOptions { svg })? {
                    println!("wrote {}", p.display());
                }
            }
            if failed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Cic { spec, seed } => {
            let mut spec = spec.resolve()?;
            let pair = pair_for(&spec, seed)?;
            spec.metrics = BTreeSet::from([MetricName::Cic, MetricName::CicBelow]);
            let eval = evaluate(&spec, &pair, None, seed)?;
            for v in &eval.values {
                println!("{} {} {:.6}", v.metric, v.agent.name(), v.value);
            }
            write_out(
                &cell_dir(&spec).join(format!("cic_seed{seed}.csv")),
                &cic_csv(&eval.cic_per_game)?,
            )?;
        }
        Command::Probe {
            spec,
            seed,
            games,
            listener,
            steps,
        } => {
            let spec = spec.resolve()?;
            let listener = agent(listener)?;
            let pair = pair_for(&spec, seed)?;
            let game = played_game(&spec)?;
            let mut rng = stream(seed, Stream::Probe);
            let samples = sample_rounds(&pair, &game, listener, games, &mut rng)?;
            let (train, held_out) = split_indices(samples.len(), &mut rng);
            let config = ProbeConfig {
                steps,
                ..ProbeConfig::default()
            };
            let mut curves = Vec::new();
            for variant in ProbeVariant::ALL {
                let data = dataset_from_samples(&pair, listener, &samples, variant, train.clone(), held_out.clone())?;
                let curve = train_probe(&data, ProbeKind::for_source(variant.source), &config, &mut rng)?;
                println!(
                    "{:<12} final accuracy {:.4}",
                    variant.name(),
                    curve.final_accuracy().unwrap_or(f64::NAN)
                );
                curves.push(curve);
            }
            let mut bytes = Vec::new();
            write_accuracy_csv(&curves, &mut bytes)?;
            write_out(&cell_dir(&spec).join(format!("probe_seed{seed}.csv")), &bytes)?;
        }
        Command::Pca {
            spec,
            seed,
            games,
            agent: who,
            k,
        } => {
            let spec = spec.resolve()?;
            let who = agent(who)?;
            let pair = pair_for(&spec, seed)?;
            let game = played_game(&spec)?;
            let mut rng = stream(seed, Stream::Probe);
            let matrix = collect_activations(&pair, who, &game, games, &mut rng)?;
            let dead = matrix.zero_variance_columns();
            if !dead.is_empty() {
                println!("zero-variance units: {dead:?}");
            }
            let pca = pca_project(&matrix.rows, k)?;
            println!("explained variance {:?}", pca.explained);
            println!(
                "between-action share {:.4}",
                between_class_ratio(&pca.points, &matrix.labels)
            );
            let mut bytes = Vec::new();
            write_pca_csv(&pca.points, &matrix.labels, &mut bytes)?;
            write_out(&cell_dir(&spec).join(format!("pca_seed{seed}.csv")), &bytes)?;
        }
        Command::Report { dirs, out, svg } => {
            let bundles = load_bundles(&dirs)?;
            for p in emit_report(&bundles, &under_root(&out), ReportOptions { svg })? {
                println!("wrote {}", p.display());
            }
        }
        Command::Check { criteria, dirs } => {
            let text = fs::read_to_string(&criteria)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", criteria.display())))?;
            let criteria = parse_criteria(&text)?;
            let bundles = load_bundles(&dirs)?;
            let outcomes = check_acceptance(&bundles, &criteria)?;
            let mut all = true;
            for o in &outcomes {
                let c = &o.criterion;
                println!(
                    "{} {} {} agent {} = {:.6} in [{}, {}]",
                    if o.pass { "PASS" } else { "FAIL" },
                    c.cell,
                    c.metric,
                    c.agent.name(),
                    o.value,
                    c.lo,
                    c.hi
                );
                all &= o.pass;
            }
            if !all {
                return Ok(ExitCode::from(EXIT_ACCEPTANCE));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
