#[path = "common/mi_oracle.rs"]
mod mi_oracle;

use mcg::env::{env_step, AgentId, GameConfig, MemoryBuffer, PayoffPair, RoundPolicy, RoundRecord, Stamp};
use mcg::metrics::{
    causal_influence, context_independence_from_counts, instantaneous_coordination, message_entropy,
    mutual_information, speaker_consistency, ActionDistribution, CooccurrenceMatrix,
};
use mcg::net::{Categorical, PolicyParams};
use mcg::rng::{stream, Stream};
use mcg::train::{initial_pair, play_games, LearnConfig, TrainedPair};
use mi_oracle::direct_mi;
use proptest::prelude::*;

fn counts_matrix() -> impl Strategy<Value = Vec<Vec<u64>>> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
        proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0u64), 0u64..200], c), r)
            .prop_filter("non-empty", |m| m.iter().flatten().sum::<u64>() > 0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mi_matches_direct_summation(m in counts_matrix()) {
        let ours: f64 = mutual_information(&CooccurrenceMatrix::from_rows(&m).unwrap()).unwrap();
        let oracle = direct_mi(&m).max(0.0);
        prop_assert!((ours - oracle).abs() < 1e-12, "{ours} vs {oracle}");
    }

    #[test]
    fn mi_within_bounds(m in counts_matrix()) {
        let c = CooccurrenceMatrix::from_rows(&m).unwrap();
        let mi: f64 = mutual_information(&c).unwrap();
        let used = |v: Vec<u64>| v.iter().filter(|&&x| x > 0).count() as f64;
        let bound = used(c.row_sums()).ln().min(used(c.col_sums()).ln());
        prop_assert!(mi >= 0.0 && mi <= bound + 1e-12);
    }

    #[test]
    fn mi_invariant_under_row_permutation(m in counts_matrix(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let c = CooccurrenceMatrix::from_rows(&m).unwrap();
        let mut perm: Vec<usize> = (0..m.len()).collect();
        perm.shuffle(&mut stream(seed, Stream::Eval));
        let a: f64 = mutual_information(&c).unwrap();
        let b: f64 = mutual_information(&c.permute_rows(&perm)).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn ci_within_unit_interval(m in counts_matrix()) {
        let ci: f64 = context_independence_from_counts(&m);
        prop_assert!((0.0..=1.0).contains(&ci));
    }
}

fn pair(n: usize, seed: u64) -> (TrainedPair<f64>, GameConfig<f64>) {
    let game = GameConfig::randomized(n);
    (initial_pair(&game, &LearnConfig::default(), seed, false), game)
}

fn relabel(records: &[RoundRecord<f64>], perm: &[usize]) -> Vec<RoundRecord<f64>> {
    // Message k under the new labels is old message perm[k].
    let mut inverse = vec![0; perm.len()];
    for (k, &old) in perm.iter().enumerate() {
        inverse[old] = k;
    }
    records
        .iter()
        .map(|r| RoundRecord {
            m1: inverse[r.m1],
            m2: inverse[r.m2],
            m1_observed: inverse[r.m1_observed],
            m2_observed: inverse[r.m2_observed],
            ..r.clone()
        })
        .collect()
}

#[test]
fn relabeling_messages_leaves_record_metrics_unchanged() {
    let (p, game) = pair(2, 3);
    let records = play_games(&p, &game, 3000, 20, &mut stream(3, Stream::Eval), 3).unwrap();
    let perm = [2, 0, 3, 1];
    let moved = relabel(&records, &perm);
    let bits = |x: (f64, f64)| (x.0.to_bits(), x.1.to_bits());
    assert_eq!(
        bits(speaker_consistency(&records, 4).unwrap()),
        bits(speaker_consistency(&moved, 4).unwrap())
    );
    assert_eq!(
        bits(instantaneous_coordination(&records, 4).unwrap()),
        bits(instantaneous_coordination(&moved, 4).unwrap())
    );
    let (h, h2) = message_entropy(&records, 4).unwrap();
    let (g, g2) = message_entropy(&moved, 4).unwrap();
    assert!((h - g).abs() < 1e-12 && (h2 - g2).abs() < 1e-12);
}

/// Relabels messages inside a policy: comm-head rows and both message-slot
/// input columns move together.
fn relabel_params(p: &PolicyParams<f64>, game: &GameConfig<f64>, perm: &[usize]) -> PolicyParams<f64> {
    let layout = mcg::env::ObsLayout::new(game.n_actions, game.n_messages, 0);
    let mut out = p.clone();
    let shape = *p.shape();
    let h = shape.hidden;
    for name in ["comm.w", "comm.b"] {
        let slot = p.slot(name).unwrap();
        for (k, &old) in perm.iter().enumerate() {
            for j in 0..slot.cols {
                out.as_mut_slice()[slot.offset + k * slot.cols + j] = p.as_slice()[slot.offset + old * slot.cols + j];
            }
        }
    }
    for name in ["trunk.w1", "comm_trunk.w1"] {
        let Some(slot) = p.slot(name) else { continue };
        for sender in AgentId::BOTH {
            let cols = layout.message_slot(sender);
            for row in 0..h {
                for (k, &old) in perm.iter().enumerate() {
                    let dst = slot.offset + row * slot.cols + cols.start + k;
                    let src = slot.offset + row * slot.cols + cols.start + old;
                    out.as_mut_slice()[dst] = p.as_slice()[src];
                }
            }
        }
    }
    out
}

#[test]
fn relabeling_messages_leaves_cic_unchanged() {
    let (p, game) = pair(2, 11);
    let perm = [3, 1, 0, 2];
    let q = [
        relabel_params(&p.agents[0], &game, &perm),
        relabel_params(&p.agents[1], &game, &perm),
    ];
    let cic = |a: &[PolicyParams<f64>]| {
        causal_influence(&a[1], AgentId::Two, &a[0], &game, 200, &mut stream(5, Stream::Eval)).unwrap()
    };
    let before = cic(&p.agents);
    let after = cic(&q);
    for (x, y) in before.per_game.iter().zip(&after.per_game) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

/// A listener whose action logits are shifted by a constant.
struct Shifted<'a>(&'a PolicyParams<f64>, f64);

impl ActionDistribution<f64> for Shifted<'_> {
    fn action_probs(&self, obs: &mcg::env::ObsVector<f64>) -> mcg::Result<Vec<f64>> {
        let logits: Vec<f64> = self
            .0
            .forward(&obs.values)?
            .action_logits
            .iter()
            .map(|z| z + self.1)
            .collect();
        Ok(Categorical::from_logits(&logits)?.probs)
    }
    fn greedy_message(&self, obs: &mcg::env::ObsVector<f64>) -> mcg::Result<usize> {
        self.0.greedy_message(obs)
    }
}

#[test]
fn cic_ignores_constant_logit_shift() {
    let (p, game) = pair(4, 8);
    let base = causal_influence(
        &p.agents[1],
        AgentId::Two,
        &p.agents[0],
        &game,
        300,
        &mut stream(1, Stream::Eval),
    )
    .unwrap();
    for shift in [-7.5, 0.25, 40.0] {
        let moved = causal_influence(
            &Shifted(&p.agents[1], shift),
            AgentId::Two,
            &p.agents[0],
            &game,
            300,
            &mut stream(1, Stream::Eval),
        )
        .unwrap();
        assert!((base.mean - moved.mean).abs() < 1e-12);
        for (x, y) in base.per_game.iter().zip(&moved.per_game) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn scrambled_observations_carry_no_information() {
    let (p, mut game) = pair(2, 4);
    game.scramble = true;
    let records = play_games(&p, &game, 10_000, 20, &mut stream(4, Stream::Env), 4).unwrap();
    let m = game.n_messages;
    let mut joint = CooccurrenceMatrix::new(m, m);
    let mut hist = vec![0u64; m];
    for r in &records {
        joint.add(r.m1, r.m1_observed);
        hist[r.m1_observed] += 1;
    }
    let mi: f64 = mutual_information(&joint).unwrap();
    assert!(mi < 0.01, "MI between sent and shown message {mi}");
    // Chi-square against uniform, 3 degrees of freedom, 0.1% critical value.
    let expected = records.len() as f64 / m as f64;
    let chi2: f64 = hist.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 16.27, "chi2 {chi2}");
}

#[test]
fn first_speaker_is_fair_and_rewards_exact() {
    let (p, game) = pair(2, 9);
    let records = play_games(&p, &game, 10_000, 20, &mut stream(9, Stream::Env), 9).unwrap();
    let ones = records.iter().filter(|r| r.first_speaker == AgentId::One).count() as f64 / records.len() as f64;
    assert!((0.48..=0.52).contains(&ones), "{ones}");
    for r in &records {
        assert_eq!(r.r1.to_bits(), r.payoffs.r1(r.a1, r.a2).to_bits());
        assert_eq!(r.r2.to_bits(), r.payoffs.r2(r.a1, r.a2).to_bits());
    }
}

/// Stub that always plays and says 0.
struct Zero;
impl RoundPolicy<f64> for Zero {
    fn message<R: rand::Rng + ?Sized>(&mut self, _: &mcg::env::ObsVector<f64>, _: &mut R) -> usize {
        0
    }
    fn action<R: rand::Rng + ?Sized>(&mut self, _: &mcg::env::ObsVector<f64>, _: &mut R) -> usize {
        0
    }
}

#[test]
fn one_shot_rounds_do_not_depend_on_episode_index() {
    let game = GameConfig::<f64>::randomized(2);
    let payoffs: PayoffPair<f64> = game.sample_payoffs(&mut stream(0, Stream::Env)).unwrap();
    let play = |episode| {
        let mut rng = stream(1, Stream::Env);
        let stamp = Stamp { episode, seed: 1 };
        let mut r = env_step(
            &mut Zero,
            &mut Zero,
            &payoffs,
            &mut rng,
            &game,
            None::<&mut MemoryBuffer>,
            stamp,
        )
        .unwrap();
        r.episode = 0;
        r
    };
    assert_eq!(play(0), play(12345));
}
