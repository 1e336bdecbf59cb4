use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{mean_and_se, AgentLabel, ResultBundle};
use super::grid::parse_cell_name;
use crate::env::AgentId;
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_CIC_EPSILON;
use crate::train::Ablation;

/// Metrics compared between learned and forced-random messages.
pub const TABLE5_METRICS: [&str; 4] = ["sc", "ic", "entropy", "ci"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportOptions {
    pub svg: bool,
}

fn metric_names(b: &ResultBundle) -> BTreeSet<String> {
    b.aggregate.iter().map(|a| a.metric.clone()).collect()
}

fn check_schema(bundles: &[ResultBundle]) -> Result<BTreeSet<String>> {
    let Some(first) = bundles.first() else {
        return Err(Error::Precondition("no result bundles to report".into()));
    };
    let reference = metric_names(first);
    let mut divergent = BTreeSet::new();
    for b in &bundles[1..] {
        let names = metric_names(b);
        divergent.extend(reference.symmetric_difference(&names).cloned());
    }
    if !divergent.is_empty() {
        let list: Vec<_> = divergent.into_iter().collect();
        return Err(Error::config(format!(
            "bundles disagree on metrics: {}",
            list.join(", ")
        )));
    }
    Ok(reference)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn num(x: f64) -> String {
    x.to_string()
}

/// Writes report tables for `bundles` into `out_dir` and returns the paths.
///
/// Always written: `summary.csv` and `cic_report.csv`. Cells named like
/// `4x4_scrambled_c` additionally produce one ablation-by-size table per
/// metric, and sizes with both a `none` and a `random_c` cell produce a
/// learned-versus-random comparison.
pub fn emit_report(bundles: &[ResultBundle], out_dir: &Path, options: ReportOptions) -> Result<Vec<PathBuf>> {
    let metrics = check_schema(bundles)?;
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };

    let header = ["cell", "metric", "agent", "mean", "two_se", "n_seeds"].map(String::from);
    let rows: Vec<Vec<String>> = bundles
        .iter()
        .flat_map(|b| {
            b.aggregate.iter().map(|a| {
                vec![
                    b.name.clone(),
                    a.metric.clone(),
                    a.agent.name().to_string(),
                    num(a.mean),
                    num(a.two_se()),
                    a.n_seeds.to_string(),
                ]
            })
        })
        .collect();
    emit("summary.csv".into(), csv_bytes(&header, &rows)?)?;

    let below = format!("fraction_below({DEFAULT_CIC_EPSILON})");
    let header = ["cell", "listener", "mean_cic", below.as_str(), "n_games"].map(String::from);
    let mut rows = Vec::new();
    for b in bundles {
        for listener in AgentId::BOTH {
            let pooled = b.pooled_cic(listener);
            if pooled.per_game.is_empty() {
                continue;
            }
            rows.push(vec![
                b.name.clone(),
                listener.number().to_string(),
                num(pooled.mean),
                num(pooled.fraction_below(DEFAULT_CIC_EPSILON)),
                pooled.per_game.len().to_string(),
            ]);
        }
    }
    emit("cic_report.csv".into(), csv_bytes(&header, &rows)?)?;

    let mut per_game = Vec::new();
    for b in bundles {
        for s in &b.per_seed {
            for listener in AgentId::BOTH {
                for (g, v) in s.cic_per_game[listener.index()].iter().enumerate() {
                    per_game.push(vec![
                        b.name.clone(),
                        s.seed.to_string(),
                        listener.number().to_string(),
                        g.to_string(),
                        num(*v),
                    ]);
                }
            }
        }
    }
    if !per_game.is_empty() {
        let header = ["cell", "seed", "listener", "game", "cic"].map(String::from);
        emit("cic_per_game.csv".into(), csv_bytes(&header, &per_game)?)?;
    }

    let cells: BTreeMap<(usize, Ablation), &ResultBundle> = bundles
        .iter()
        .filter_map(|b| parse_cell_name(&b.name).map(|k| (k, b)))
        .collect();
    let sizes: BTreeSet<usize> = cells.keys().map(|k| k.0).collect();
    let ablations: BTreeSet<Ablation> = cells.keys().map(|k| k.1).collect();
    if !cells.is_empty() {
        for metric in &metrics {
            let mut header = vec!["ablation".to_string()];
            for n in &sizes {
                header.push(format!("{n}x{n}_mean"));
                header.push(format!("{n}x{n}_2se"));
            }
            let rows: Vec<Vec<String>> = ablations
                .iter()
                .map(|&ab| {
                    let mut row = vec![ab.to_string()];
                    for &n in &sizes {
                        match cells.get(&(n, ab)).and_then(|b| b.get(metric, AgentLabel::Mean)) {
                            Some(a) => row.extend([num(a.mean), num(a.two_se())]),
                            None => row.extend([String::new(), String::new()]),
                        }
                    }
                    row
                })
                .collect();
            emit(format!("table_{metric}.csv"), csv_bytes(&header, &rows)?)?;
        }
    }

    for &n in &sizes {
        let (Some(real), Some(random)) = (cells.get(&(n, Ablation::None)), cells.get(&(n, Ablation::RandomC))) else {
            continue;
        };
        let header = ["metric", "real_c_mean", "real_c_2se", "random_c_mean", "random_c_2se"].map(String::from);
        let rows: Vec<Vec<String>> = TABLE5_METRICS
            .iter()
            .filter_map(|m| {
                let r = real.get(m, AgentLabel::Mean)?;
                let c = random.get(m, AgentLabel::Mean)?;
                Some(vec![
                    m.to_string(),
                    num(r.mean),
                    num(r.two_se()),
                    num(c.mean),
                    num(c.two_se()),
                ])
            })
            .collect();
        emit(format!("table5_{n}x{n}.csv"), csv_bytes(&header, &rows)?)?;
    }

    for b in bundles {
        if let Some(bytes) = curve_csv(b)? {
            emit(format!("curve_{}.csv", b.name.replace('/', "_")), bytes)?;
        }
    }

    if options.svg {
        for metric in &metrics {
            let bars: Vec<Bar> = bundles
                .iter()
                .filter_map(|b| {
                    b.get(metric, AgentLabel::Mean).map(|a| Bar {
                        label: b.name.clone(),
                        mean: a.mean,
                        two_se: a.two_se(),
                    })
                })
                .collect();
            emit(format!("bars_{metric}.svg"), bar_chart_svg(metric, &bars).into_bytes())?;
        }
    }
    Ok(written)
}

/// Training curves averaged across seeds: mean reward and SC of both agents
/// per window.
fn curve_csv(b: &ResultBundle) -> Result<Option<Vec<u8>>> {
    let mut sums: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
    for s in &b.per_seed {
        let path = s.dir.join("train_log.csv");
        if !path.exists() {
            return Ok(None);
        }
        let mut r = csv::Reader::from_path(&path)?;
        for row in r.records() {
            let row = row?;
            let parse = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|_| Error::Numeric(format!("bad entry in {}", path.display())))
            };
            let start: u64 = row[0]
                .parse()
                .map_err(|_| Error::Numeric(format!("bad window in {}", path.display())))?;
            let reward = 0.5 * (parse(1)? + parse(2)?);
            let sc = 0.5 * (parse(3)? + parse(4)?);
            sums.entry(start).or_default().push(vec![reward, sc]);
        }
    }
    if sums.is_empty() {
        return Ok(None);
    }
    let header = ["window_start", "reward_mean", "reward_2se", "sc_mean", "sc_2se"].map(String::from);
    let rows: Vec<Vec<String>> = sums
        .into_iter()
        .map(|(start, vals)| {
            let col = |j: usize| mean_and_se(&vals.iter().map(|v| v[j]).collect::<Vec<_>>());
            let (rm, rse) = col(0);
            let (sm, sse) = col(1);
            vec![start.to_string(), num(rm), num(2.0 * rse), num(sm), num(2.0 * sse)]
        })
        .collect();
    Ok(Some(csv_bytes(&header, &rows)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub mean: f64,
    pub two_se: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A bar chart with twice-standard-error whiskers. Every bar carries its
/// exact values in `data-mean` and `data-two-se` attributes.
pub fn bar_chart_svg(title: &str, bars: &[Bar]) -> String {
    let width = 80 * bars.len().max(1) + 80;
    let height = 320.0;
    let plot = 240.0;
    let top = 40.0;
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let hi = bars
        .iter()
        .map(|b| finite(b.mean + b.two_se).max(finite(b.mean)))
        .fold(0.0f64, f64::max);
    let lo = bars
        .iter()
        .map(|b| finite(b.mean - b.two_se).min(finite(b.mean)))
        .fold(0.0f64, f64::min);
    let span = (hi - lo).max(1e-12);
    let y_of = |v: f64| top + (hi - finite(v)) / span * plot;
    let base = y_of(0.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        svg,
        r#"<line x1="40" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        width - 20
    );
    for (i, b) in bars.iter().enumerate() {
        let x = 60.0 + 80.0 * i as f64;
        let y = y_of(b.mean).min(base);
        let h = (y_of(b.mean) - base).abs();
        let _ = writeln!(
            svg,
            r##"<g class="bar" data-label="{}" data-mean="{}" data-two-se="{}">"##,
            escape(&b.label),
            b.mean,
            b.two_se
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{x}" y="{y}" width="50" height="{h}" fill="#4a7ab5"/>"##
        );
        let center = x + 25.0;
        let (y1, y2) = (y_of(b.mean - b.two_se), y_of(b.mean + b.two_se));
        let _ = writeln!(
            svg,
            r#"<line x1="{center}" y1="{y1}" x2="{center}" y2="{y2}" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" font-size="9">{}</text>"#,
            top + plot + 14.0,
            escape(&b.label)
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

/// One line of a criteria file: `cell,metric,agent,lo,hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub cell: String,
    pub metric: String,
    pub agent: AgentLabel,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub criterion: Criterion,
    pub value: f64,
    pub pass: bool,
}

/// Parses a CSV criteria file with header `cell,metric,agent,lo,hi`.
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_criteria(text: &str) -> Result<Vec<Criterion>> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_seen {
            header_seen = true;
            if fields == ["cell", "metric", "agent", "lo", "hi"] {
                continue;
            }
        }
        let at = |key: &str, message: String| Error::ConfigAt {
            key: key.to_string(),
            line: line_no,
            message,
        };
        if fields.len() != 5 {
            return Err(at("criterion", format!("expected 5 fields, got {}", fields.len())));
        }
        let bound = |key: &str, s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| !v.is_nan())
                .ok_or_else(|| at(key, format!("`{s}` is not a number")))
        };
        let lo = bound("lo", fields[3])?;
        let hi = bound("hi", fields[4])?;
        if lo > hi {
            return Err(at("hi", format!("empty interval [{lo}, {hi}]")));
        }
        out.push(Criterion {
            cell: fields[0].to_string(),
            metric: fields[1].to_string(),
            agent: AgentLabel::parse(fields[2]).map_err(|e| at("agent", e.to_string()))?,
            lo,
            hi,
        });
    }
    Ok(out)
}

/// Evaluates each criterion against the aggregate of its cell.
pub fn check_acceptance(bundles: &[ResultBundle], criteria: &[Criterion]) -> Result<Vec<CriterionOutcome>> {
    criteria
        .iter()
        .map(|c| {
            let bundle = bundles
                .iter()
                .find(|b| b.name == c.cell)
                .ok_or_else(|| Error::config(format!("criterion refers to missing cell `{}`", c.cell)))?;
            let agg = bundle.get(&c.metric, c.agent).ok_or_else(|| {
                Error::config(format!(
                    "cell `{}` has no metric `{}` for agent {}",
                    c.cell,
                    c.metric,
                    c.agent.name()
                ))
            })?;
            Ok(CriterionOutcome {
                criterion: c.clone(),
                value: agg.mean,
                pass: agg.mean >= c.lo && agg.mean <= c.hi,
            })
        })
        .collect()
}
