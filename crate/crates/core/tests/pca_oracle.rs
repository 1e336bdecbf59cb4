use mcg::probes::{pca_project, ActivationMatrix};
use mcg::rng::{stream, Stream};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_rows(seed: u64, n: usize, d: usize, scales: &[f64]) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, Stream::Probe);
    (0..n)
        .map(|_| {
            (0..d)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scales[j % scales.len()] + j as f64
                })
                .collect()
        })
        .collect()
}

/// Eigenvalues of the sample covariance, descending, from a full
/// eigendecomposition.
fn oracle_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

#[test]
fn explained_variance_matches_full_eigendecomposition() {
    for (seed, scales) in [
        (1, vec![3.0, 2.0, 1.0, 0.5, 0.25]),
        (2, vec![5.0, 1.0, 1.0, 0.1]),
        (3, vec![1.0, 0.7]),
    ] {
        let rows = gaussian_rows(seed, 200, 10, &scales);
        let ours = pca_project(&rows, 3).unwrap();
        let ev = oracle_eigenvalues(&rows);
        let total: f64 = ev.iter().sum();
        for k in 0..3 {
            assert!(
                (ours.explained[k] - ev[k] / total).abs() < 1e-8,
                "seed {seed} component {k}"
            );
        }
    }
}

#[test]
fn isotropic_cloud_has_even_spectrum() {
    let rows = gaussian_rows(4, 20_000, 4, &[1.0]);
    let r = pca_project(&rows, 3).unwrap();
    for f in &r.explained {
        assert!((f - 0.25).abs() < 0.02, "{:?}", r.explained);
    }
}

#[test]
fn identical_inputs_give_identical_rows() {
    use mcg::env::{AgentId, FixedGame, GameConfig, PayoffMode};
    use mcg::probes::collect_activations;
    use mcg::train::{initial_pair, LearnConfig};
    let mut game = GameConfig::<f64>::randomized(2);
    game.payoff_mode = PayoffMode::Fixed(FixedGame::PrisonersDilemma);
    let pair = initial_pair(&game, &LearnConfig::default(), 5, false);
    let m: ActivationMatrix<f64> =
        collect_activations(&pair, AgentId::One, &game, 100, &mut stream(5, Stream::Probe)).unwrap();
    assert_eq!(m.rows.len(), 100);
    assert_eq!(m.width(), 40);
    // Rows are a function of the observation: same game, same messages, same row.
    let mut seen = std::collections::HashMap::new();
    let obs_rows = mcg::probes::sample_rounds(&pair, &game, AgentId::One, 100, &mut stream(5, Stream::Probe)).unwrap();
    for s in &obs_rows {
        let h = pair.agents[0].forward(&s.observation.values).unwrap().hidden;
        let key: Vec<u64> = s.observation.values.iter().map(|v| v.to_bits()).collect();
        let prev = seen.entry(key).or_insert_with(|| h.clone());
        assert_eq!(*prev, h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn components_orthonormal_and_ordered(seed in any::<u64>(), d in 3usize..9) {
        let scales: Vec<f64> = (0..d).map(|j| 1.0 + j as f64 * 0.37).collect();
        let rows = gaussian_rows(seed, 60, d, &scales);
        let r = pca_project(&rows, 3).unwrap();
        for (i, a) in r.components.iter().enumerate() {
            let norm: f64 = a.iter().map(|x| x * x).sum();
            prop_assert!((norm - 1.0).abs() < 1e-8);
            for b in &r.components[i + 1..] {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                prop_assert!(dot.abs() < 1e-8);
            }
        }
        prop_assert!(r.explained.windows(2).all(|w| w[0] >= w[1] - 1e-12));
    }
}
