use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mcg::error::Error;
use mcg::harness::{
    check_acceptance, emit_report, load_bundle, mean_and_se, parse_criteria, run_experiment, run_grid, seed_dir,
    AgentLabel, ExperimentSpec, GridAxes, MetricName, ReportOptions,
};
use mcg::train::Ablation;

fn tiny(dir: &Path, name: &str, seeds: &[u64]) -> ExperimentSpec {
    let mut spec = ExperimentSpec {
        name: name.into(),
        seeds: seeds.to_vec(),
        eval_games: 100,
        output_dir: dir.to_path_buf(),
        workers: 2,
        ..ExperimentSpec::default()
    };
    spec.learn.episodes = 500;
    spec.learn.log_window = 100;
    spec
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        // Wall-clock provenance lives only in the bundle.
        if rel.ends_with("bundle.json") {
            continue;
        }
        out.insert(rel, fs::read(&entry).unwrap());
    }
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&tiny(a.path(), "cell", &[1, 2])).unwrap();
    let mut spec = tiny(b.path(), "cell", &[1, 2]);
    spec.workers = 1;
    run_experiment(&spec).unwrap();
    let fa = files_under(a.path());
    assert!(fa.keys().any(|k| k.ends_with("metrics.csv")));
    assert_eq!(fa, files_under(b.path()));
}

#[test]
fn resume_matches_fresh_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&tiny(a.path(), "cell", &[1])).unwrap();
    let resumed = run_experiment(&tiny(a.path(), "cell", &[1, 2])).unwrap();
    let fresh = run_experiment(&tiny(b.path(), "cell", &[1, 2])).unwrap();
    assert_eq!(resumed.aggregate, fresh.aggregate);
    assert_eq!(files_under(a.path()), files_under(b.path()));
}

#[test]
fn changed_spec_refuses_to_resume() {
    let a = tempfile::tempdir().unwrap();
    run_experiment(&tiny(a.path(), "cell", &[1])).unwrap();
    let mut spec = tiny(a.path(), "cell", &[1]);
    spec.learn.lr = 0.01;
    let err = run_experiment(&spec).unwrap_err();
    assert!(matches!(err, Error::IncompatibleResume { .. }), "{err}");
    assert!(err.is_config());
}

#[test]
fn aggregate_matches_per_seed_files() {
    let a = tempfile::tempdir().unwrap();
    let spec = tiny(a.path(), "cell", &[3, 4, 5]);
    let bundle = run_experiment(&spec).unwrap();
    let mut per: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for &s in &spec.seeds {
        let mut r = csv::Reader::from_path(seed_dir(&spec, s).join("metrics.csv")).unwrap();
        for row in r.records() {
            let row = row.unwrap();
            per.entry((row[0].to_string(), row[1].to_string()))
                .or_default()
                .push(row[2].parse().unwrap());
        }
    }
    assert_eq!(per.len(), bundle.aggregate.len());
    for agg in &bundle.aggregate {
        let xs = &per[&(agg.metric.clone(), agg.agent.name().to_string())];
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((agg.mean - mean).abs() < 1e-12);
        assert!((agg.std_err - sd / n.sqrt()).abs() < 1e-12);
        assert_eq!(agg.n_seeds, 3);
    }

    let reloaded = load_bundle(&a.path().join("cell")).unwrap();
    assert_eq!(reloaded.aggregate, bundle.aggregate);
    assert_eq!(reloaded.per_seed.len(), 3);
}

#[test]
fn grid_cells_share_seeds() {
    let a = tempfile::tempdir().unwrap();
    let mut base = tiny(a.path(), "grid", &[0, 1]);
    base.metrics = [MetricName::Sc, MetricName::Reward].into_iter().collect();
    let axes = GridAxes {
        sizes: vec![2, 4],
        ablations: vec![Ablation::None, Ablation::ScrambledC],
    };
    let cells = run_grid(&base, &axes);
    assert_eq!(cells.len(), 4);
    for c in &cells {
        let b = c.result.as_ref().unwrap();
        assert_eq!(b.seeds, vec![0, 1]);
        assert_eq!(b.name, format!("{}x{}_{}", c.size, c.size, c.ablation));
        assert!(a.path().join("grid").join(&b.name).join("aggregate.csv").exists());
    }
}

#[test]
fn report_rejects_mixed_schemas_and_svg_matches_csv() {
    let a = tempfile::tempdir().unwrap();
    let mut one = tiny(a.path(), "one", &[1, 2]);
    one.metrics = [MetricName::Sc, MetricName::Entropy].into_iter().collect();
    let mut two = tiny(a.path(), "two", &[1, 2]);
    two.metrics = [MetricName::Sc].into_iter().collect();
    let b1 = run_experiment(&one).unwrap();
    let b2 = run_experiment(&two).unwrap();
    let err = emit_report(&[b1.clone(), b2], &a.path().join("r"), ReportOptions::default()).unwrap_err();
    assert!(err.is_config() && err.to_string().contains("entropy"), "{err}");

    let mut three = tiny(a.path(), "three", &[1, 2]);
    three.metrics = one.metrics.clone();
    three.learn.ablation = Ablation::ScrambledC;
    let b3 = run_experiment(&three).unwrap();
    let out = a.path().join("report");
    emit_report(&[b1, b3], &out, ReportOptions { svg: true }).unwrap();

    let mut expected: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut r = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    for row in r.records() {
        let row = row.unwrap();
        if &row[1] == "sc" && &row[2] == "mean" {
            expected.insert(row[0].to_string(), (row[3].parse().unwrap(), row[4].parse().unwrap()));
        }
    }
    assert_eq!(expected.len(), 2);
    let text = fs::read_to_string(out.join("bars_sc.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let bars: Vec<_> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("bar"))
        .collect();
    assert_eq!(bars.len(), 2);
    for g in bars {
        let (mean, two_se) = expected[g.attribute("data-label").unwrap()];
        assert_eq!(g.attribute("data-mean").unwrap().parse::<f64>().unwrap(), mean);
        assert_eq!(g.attribute("data-two-se").unwrap().parse::<f64>().unwrap(), two_se);
    }
}

#[test]
fn acceptance_checks() {
    let a = tempfile::tempdir().unwrap();
    let mut spec = tiny(a.path(), "cell", &[1, 2]);
    spec.metrics = [MetricName::Sc].into_iter().collect();
    let bundle = run_experiment(&spec).unwrap();
    let sc = bundle.get("sc", AgentLabel::Mean).unwrap().mean;

    let ok = parse_criteria(&format!(
        "cell,metric,agent,lo,hi\n# comment\ncell,sc,mean,{},{}\n",
        sc - 0.01,
        sc + 0.01
    ))
    .unwrap();
    let outcome = check_acceptance(std::slice::from_ref(&bundle), &ok).unwrap();
    assert!(outcome[0].pass);
    assert_eq!(outcome[0].value, sc);

    let bad = parse_criteria(&format!("cell,sc,1,{},{}\n", sc + 1.0, sc + 2.0)).unwrap();
    assert!(!check_acceptance(std::slice::from_ref(&bundle), &bad).unwrap()[0].pass);

    let missing = parse_criteria("elsewhere,sc,mean,0,1\n").unwrap();
    assert!(check_acceptance(std::slice::from_ref(&bundle), &missing).unwrap_err().is_config());
    let no_metric = parse_criteria("cell,ci,mean,0,1\n").unwrap();
    assert!(check_acceptance(&[bundle], &no_metric).unwrap_err().is_config());

    let err = parse_criteria("cell,metric,agent,lo,hi\ncell,sc,mean,0.5,0.1\n").unwrap_err();
    assert!(err.is_config() && err.to_string().contains("line 2"), "{err}");
}

#[test]
fn mean_and_se_edge_cases() {
    assert!(mean_and_se(&[]).0.is_nan());
    assert_eq!(mean_and_se(&[2.5]), (2.5, 0.0));
    let (m, se) = mean_and_se(&[1.0, 3.0]);
    assert_eq!(m, 2.0);
    assert!((se - 1.0).abs() < 1e-15);
}
