use std::io::Write;

use rand::Rng;

use crate::env::{AgentId, GameConfig};
use crate::error::{Error, Result};
use crate::scalar::{round_sig9, Scalar};
use crate::train::{play_games_observed, TrainedPair, DEFAULT_ROUNDS_PER_GAME};

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 10_000;

/// Last-layer activations, one row per round, with the acting agent's
/// sampled action beside each row.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix<T> {
    pub rows: Vec<Vec<T>>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> ActivationMatrix<T> {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Columns whose values never change. A ReLU unit that is dead on every
    /// sampled input shows up here.
    pub fn zero_variance_columns(&self) -> Vec<usize> {
        let Some(first) = self.rows.first() else {
            return Vec::new();
        };
        (0..first.len())
            .filter(|&j| self.rows.iter().all(|r| r[j] == first[j]))
            .collect()
    }
}

pub fn collect_activations<T: Scalar, R: Rng + ?Sized>(
    pair: &TrainedPair<T>,
    agent: AgentId,
    game: &GameConfig<T>,
    n_games: usize,
    rng: &mut R,
) -> Result<ActivationMatrix<T>> {
    let policy = pair.agent(agent);
    let mut obs_rows = Vec::new();
    let mut labels = Vec::new();
    play_games_observed(pair, game, n_games, DEFAULT_ROUNDS_PER_GAME, rng, 0, &mut |rec, obs| {
        obs_rows.push(obs.act[agent.index()].values.clone());
        labels.push(rec.action(agent));
    })?;
    let rows = obs_rows
        .iter()
        .map(|o| policy.forward(o).map(|out| out.hidden))
        .collect::<Result<Vec<_>>>()?;
    Ok(ActivationMatrix { rows, labels })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// Unit-norm principal directions, largest eigenvalue first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue over total variance.
    pub explained: Vec<f64>,
    /// Centered rows projected on the components.
    pub points: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let d = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
    }
}

fn mat_vec(c: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    c.iter().map(|row| dot(row, v)).collect()
}

/// Top eigenvector of the symmetric PSD matrix `c` restricted to the
/// complement of `found`.
fn power_iterate(c: &[Vec<f64>], found: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let d = c.len();
    // Canonical start vectors, skipping any that lie in the span already found.
    let mut v = vec![0.0; d];
    for j in 0..d {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[j] = 1.0;
        orthogonalize(&mut v, found);
        if normalize(&mut v) > 1e-6 {
            break;
        }
    }
    // Nudge off the canonical axis so a start vector orthogonal to the
    // leading direction still finds it.
    for (i, x) in v.iter_mut().enumerate() {
        *x += 1e-3 / (i as f64 + 2.0);
    }
    orthogonalize(&mut v, found);
    normalize(&mut v);

    for _ in 0..POWER_MAX_ITERATIONS {
        let mut w = mat_vec(c, &v);
        orthogonalize(&mut w, found);
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return (v, 0.0);
        }
        let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    // Rayleigh quotient is more accurate than the last norm.
    let rq = dot(&v, &mat_vec(c, &v));
    (v, rq.max(0.0))
}

/// Projects mean-centred rows onto their top `k` principal components.
pub fn pca_project<T: Scalar>(rows: &[Vec<T>], k: usize) -> Result<PcaResult> {
    if k == 0 {
        return Err(Error::Precondition("pca needs k >= 1".into()));
    }
    if rows.len() <= k {
        return Err(Error::Precondition(format!(
            "pca needs more than {k} rows, got {}",
            rows.len()
        )));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Precondition("pca rows have different widths".into()));
    }
    let n = rows.len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x.as_f64() - m).collect())
        .collect();

    let mut cov = vec![vec![0.0; d]; d];
    for r in &centered {
        for i in 0..d {
            if r[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let total: f64 = (0..d).map(|i| cov[i][i]).sum();

    let max_rank = (n - 1).min(d);
    let kept = if k > max_rank {
        log::warn!("pca asked for {k} components but rank is at most {max_rank}");
        max_rank
    } else {
        k
    };

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(kept);
    let mut eigenvalues = Vec::with_capacity(kept);
    for _ in 0..kept {
        let (mut v, lambda) = power_iterate(&cov, &components);
        let lead = v
            .iter()
            .copied()
            .fold(0.0, |best: f64, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    let explained = eigenvalues
        .iter()
        .map(|l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    let points = centered
        .iter()
        .map(|r| components.iter().map(|c| dot(r, c)).collect())
        .collect();
    Ok(PcaResult {
        components,
        eigenvalues,
        explained,
        points,
    })
}

/// Share of the projected variance explained by the class means.
pub fn between_class_ratio(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let d = points[0].len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / n);
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    let total: f64 = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
        .sum();
    let between: f64 = (0..classes)
        .filter(|&c| counts[c] > 0)
        .map(|c| {
            let cnt = counts[c] as f64;
            cnt * sums[c]
                .iter()
                .zip(&mean)
                .map(|(s, m)| (s / cnt - m).powi(2))
                .sum::<f64>()
        })
        .sum();
    if total > 0.0 {
        between / total
    } else {
        0.0
    }
}

/// Writes (pc1, pc2, pc3, action_label); missing components are written as 0.
pub fn write_pca_csv<W: Write>(points: &[Vec<f64>], labels: &[usize], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pc1", "pc2", "pc3", "action_label"])?;
    for (p, l) in points.iter().zip(labels) {
        let pc = |i: usize| round_sig9(p.get(i).copied().unwrap_or(0.0)).to_string();
        w.write_record([pc(0), pc(1), pc(2), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
