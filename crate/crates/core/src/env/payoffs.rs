use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The two agents' reward tables for one round, stored row-major with
/// agent 1's action indexing rows and agent 2's action indexing columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffPair<T> {
    n: usize,
    r1: Vec<T>,
    r2: Vec<T>,
}

impl<T: Scalar> PayoffPair<T> {
    pub fn from_rows(r1: &[Vec<T>], r2: &[Vec<T>]) -> Result<Self> {
        let n = r1.len();
        if n == 0 || r2.len() != n {
            return Err(Error::config(format!(
                "payoff matrices must be non-empty and share a size (got {} and {})",
                n,
                r2.len()
            )));
        }
        let mut flat1 = Vec::with_capacity(n * n);
        let mut flat2 = Vec::with_capacity(n * n);
        for (row1, row2) in r1.iter().zip(r2) {
            if row1.len() != n || row2.len() != n {
                return Err(Error::config("payoff matrices must be square"));
            }
            flat1.extend_from_slice(row1);
            flat2.extend_from_slice(row2);
        }
        if flat1.iter().chain(&flat2).any(|x| !x.is_finite()) {
            return Err(Error::config("payoff entries must be finite"));
        }
        Ok(Self {
            n,
            r1: flat1,
            r2: flat2,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn r1(&self, a1: usize, a2: usize) -> T {
        self.r1[a1 * self.n + a2]
    }

    #[inline]
    pub fn r2(&self, a1: usize, a2: usize) -> T {
        self.r2[a1 * self.n + a2]
    }

    /// Row-major flat table for agent 1 (`[a1][a2]`).
    pub fn r1_flat(&self) -> &[T] {
        &self.r1
    }

    pub fn r2_flat(&self) -> &[T] {
        &self.r2
    }

    pub fn r1_rows(&self) -> Vec<Vec<T>> {
        self.r1.chunks(self.n).map(<[T]>::to_vec).collect()
    }

    pub fn r2_rows(&self) -> Vec<Vec<T>> {
        self.r2.chunks(self.n).map(<[T]>::to_vec).collect()
    }
}

/// Draws every entry of both tables independently from `N(mean, variance)`.
pub fn sample_random_payoffs<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    n_actions: usize,
    mean: T,
    variance: T,
) -> Result<PayoffPair<T>> {
    if !(variance > T::zero()) || !variance.is_finite() {
        return Err(Error::config(format!(
            "payoff variance must be positive, got {variance}"
        )));
    }
    if n_actions == 0 {
        return Err(Error::config("n_actions must be at least 1"));
    }
    let sd = variance.sqrt();
    let cells = n_actions * n_actions;
    let mut draw = |_| mean + sd * T::standard_normal(rng);
    let r1 = (0..cells).map(&mut draw).collect();
    let r2 = (0..cells).map(&mut draw).collect();
    Ok(PayoffPair { n: n_actions, r1, r2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedGame {
    PrisonersDilemma,
    BattleOfSexes,
    MatchingPennies,
}

impl FixedGame {
    pub const ALL: [FixedGame; 3] = [
        FixedGame::PrisonersDilemma,
        FixedGame::BattleOfSexes,
        FixedGame::MatchingPennies,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixedGame::PrisonersDilemma => "prisoners_dilemma",
            FixedGame::BattleOfSexes => "battle_of_sexes",
            FixedGame::MatchingPennies => "matching_pennies",
        }
    }

    pub fn payoffs<T: Scalar>(self) -> PayoffPair<T> {
        let (r1, r2): ([[f64; 2]; 2], [[f64; 2]; 2]) = match self {
            FixedGame::PrisonersDilemma => ([[3., 0.], [4., 1.]], [[3., 4.], [0., 1.]]),
            FixedGame::BattleOfSexes => ([[2., 0.], [0., 1.]], [[1., 0.], [0., 2.]]),
            FixedGame::MatchingPennies => ([[1., -1.], [-1., 1.]], [[-1., 1.], [1., -1.]]),
        };
        let rows = |m: [[f64; 2]; 2]| -> Vec<Vec<T>> {
            m.iter().map(|row| row.iter().map(|&x| T::lit(x)).collect()).collect()
        };
        PayoffPair::from_rows(&rows(r1), &rows(r2)).expect("static tables are valid")
    }
}

impl fmt::Display for FixedGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixedGame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixedGame::ALL.into_iter().find(|g| g.name() == s).ok_or_else(|| {
            let valid: Vec<_> = FixedGame::ALL.iter().map(|g| g.name()).collect();
            Error::config(format!("unknown game '{s}'; valid names: {}", valid.join(", ")))
        })
    }
}

/// Looks up one of the classic 2x2 games by name.
pub fn fixed_payoffs<T: Scalar>(name: &str) -> Result<PayoffPair<T>> {
    Ok(name.parse::<FixedGame>()?.payoffs())
}
