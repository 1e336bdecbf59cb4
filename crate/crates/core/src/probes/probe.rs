use std::io::Write;

use rand::Rng;

use super::dataset::{FeatureSource, ProbeDataset};
use crate::error::{Error, Result};
use crate::net::{adam_step, AdamConfig, AdamState, Categorical};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Linear,
    Mlp,
}

impl ProbeKind {
    /// The probe paired with each feature source.
    pub fn for_source(source: FeatureSource) -> Self {
        match source {
            FeatureSource::Input => ProbeKind::Mlp,
            FeatureSource::Hidden => ProbeKind::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Smallest training-set size on the accuracy curve; sizes double from here.
    pub min_train_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            steps: 2000,
            lr: 0.005,
            batch_size: 64,
            min_train_size: 32,
        }
    }
}

/// Held-out accuracy against training-set size.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    pub variant: String,
    pub points: Vec<(usize, f64)>,
}

impl AccuracyCurve {
    /// Accuracy at the largest training size.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }
}

pub fn write_accuracy_csv<W: Write>(curves: &[AccuracyCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["train_size", "variant", "accuracy"])?;
    for c in curves {
        for (size, acc) in &c.points {
            w.write_record([
                size.to_string(),
                c.variant.clone(),
                crate::scalar::round_sig9(*acc).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Doubling sizes from `min` up to and including `max`.
pub fn geometric_sizes(min: usize, max: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut s = min.max(1);
    while s < max {
        sizes.push(s);
        s *= 2;
    }
    sizes.push(max);
    sizes
}

/// A softmax classifier, either linear or with one ReLU hidden layer.
#[derive(Debug, Clone)]
struct Classifier<T> {
    kind: ProbeKind,
    d: usize,
    h: usize,
    k: usize,
    p: Vec<T>,
}

impl<T: Scalar> Classifier<T> {
    fn new<R: Rng + ?Sized>(kind: ProbeKind, d: usize, h: usize, k: usize, rng: &mut R) -> Self {
        let mut p = Vec::new();
        let mut glorot = |rows: usize, cols: usize, p: &mut Vec<T>| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            p.extend((0..rows * cols).map(|_| T::lit(rng.random_range(-a..a))));
            p.extend((0..rows).map(|_| T::zero()));
        };
        match kind {
            ProbeKind::Linear => glorot(k, d, &mut p),
            ProbeKind::Mlp => {
                glorot(h, d, &mut p);
                glorot(k, h, &mut p);
            }
        }
        Self { kind, d, h, k, p }
    }

    fn hidden(&self, x: &[T]) -> Vec<T> {
        let (d, h) = (self.d, self.h);
        (0..h)
            .map(|i| {
                let row = &self.p[i * d..(i + 1) * d];
                let z = row.iter().zip(x).fold(self.p[h * d + i], |acc, (&w, &v)| acc + w * v);
                z.max(T::zero())
            })
            .collect()
    }

    /// Logits and the input to the output layer.
    fn logits(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let (src, off, width) = match self.kind {
            ProbeKind::Linear => (x.to_vec(), 0, self.d),
            ProbeKind::Mlp => (self.hidden(x), self.h * self.d + self.h, self.h),
        };
        let logits = (0..self.k)
            .map(|c| {
                let row = &self.p[off + c * width..off + (c + 1) * width];
                row.iter()
                    .zip(&src)
                    .fold(self.p[off + self.k * width + c], |acc, (&w, &v)| acc + w * v)
            })
            .collect();
        (logits, src)
    }

    fn accumulate_grad(&self, x: &[T], label: usize, g: &mut [T]) -> Result<()> {
        let (logits, src) = self.logits(x);
        let dz = Categorical::from_logits(&logits)?.nll_grad(label);
        let (off, width) = match self.kind {
            ProbeKind::Linear => (0, self.d),
            ProbeKind::Mlp => (self.h * self.d + self.h, self.h),
        };
        for c in 0..self.k {
            for j in 0..width {
                g[off + c * width + j] += dz[c] * src[j];
            }
            g[off + self.k * width + c] += dz[c];
        }
        if self.kind == ProbeKind::Mlp {
            let (d, h) = (self.d, self.h);
            for i in 0..h {
                if src[i] <= T::zero() {
                    continue;
                }
                let dh = (0..self.k).fold(T::zero(), |acc, c| acc + dz[c] * self.p[off + c * width + i]);
                for j in 0..d {
                    g[i * d + j] += dh * x[j];
                }
                g[h * d + i] += dh;
            }
        }
        Ok(())
    }

    fn predict(&self, x: &[T]) -> usize {
        let (logits, _) = self.logits(x);
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        best
    }
}

fn accuracy<T: Scalar>(clf: &Classifier<T>, data: &ProbeDataset<T>) -> f64 {
    if data.held_out.is_empty() {
        return 0.0;
    }
    let hits = data
        .held_out
        .iter()
        .filter(|&&i| clf.predict(&data.features[i]) == data.labels[i])
        .count();
    hits as f64 / data.held_out.len() as f64
}

/// Fits a fresh probe on the first `size` training examples and returns its
/// held-out accuracy.
fn fit_once<T: Scalar, R: Rng + ?Sized>(
    data: &ProbeDataset<T>,
    kind: ProbeKind,
    config: &ProbeConfig,
    size: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut clf = Classifier::new(kind, data.width(), config.hidden, data.n_classes, rng);
    let mut state = AdamState::zeros(clf.p.len());
    let adam = AdamConfig::with_lr(T::lit(config.lr));
    let pool = &data.train[..size];
    let mut g = vec![T::zero(); clf.p.len()];
    for _ in 0..config.steps {
        g.iter_mut().for_each(|v| *v = T::zero());
        let b = config.batch_size.min(pool.len());
        for _ in 0..b {
            let i = pool[rng.random_range(0..pool.len())];
            clf.accumulate_grad(&data.features[i], data.labels[i], &mut g)?;
        }
        let scale = T::one() / T::from_usize_lossy(b);
        g.iter_mut().for_each(|v| *v *= scale);
        adam_step(&mut clf.p, &g, &mut state, &adam, &[])?;
    }
    Ok(accuracy(&clf, data))
}

/// Trains probes on growing prefixes of the training split.
pub fn train_probe<T: Scalar, R: Rng + ?Sized>(
    data: &ProbeDataset<T>,
    kind: ProbeKind,
    config: &ProbeConfig,
    rng: &mut R,
) -> Result<AccuracyCurve> {
    if kind != ProbeKind::for_source(data.variant.source) {
        return Err(Error::Precondition(format!(
            "{kind:?} probe does not match {} features",
            data.variant
        )));
    }
    if data.train.is_empty() || data.held_out.is_empty() {
        return Err(Error::Precondition(
            "probe needs non-empty train and held-out splits".into(),
        ));
    }
    let sizes = geometric_sizes(config.min_train_size.min(data.train.len()), data.train.len());
    let first = data.labels[data.train[0]];
    let single_class = data.labels.iter().all(|&l| l == first);
    if single_class {
        log::warn!(
            "probe dataset {} has a single class; reporting accuracy 1.0",
            data.variant
        );
        return Ok(AccuracyCurve {
            variant: data.variant.name().to_string(),
            points: sizes.into_iter().map(|s| (s, 1.0)).collect(),
        });
    }
    let mut points = Vec::with_capacity(sizes.len());
    for size in sizes {
        points.push((size, fit_once(data, kind, config, size, rng)?));
    }
    Ok(AccuracyCurve {
        variant: data.variant.name().to_string(),
        points,
    })
}
