//! Shapley attribution over a coalition value function.
//!
//! Three engines share the [`Game`] abstraction:
//!
//! * [`exact_shapley`] fills a flat `2^n` value table and aggregates the
//!   weighted marginal contributions.
//! * [`sampled_shapley`] averages marginal contributions over seeded random
//!   permutations.
//! * [`permutation_oracle`] enumerates all `n!` orderings. It is slow and only
//!   used to check the other two.

mod exact;
mod permutation;
mod sampled;
mod weight;

use serde::{Deserialize, Serialize};

use crate::coalition::CoalitionMask;
use crate::error::Result;

pub use exact::exact_shapley;
pub use permutation::{permutation_oracle, PERMUTATION_ORACLE_CAP};
pub use sampled::{sampled_shapley, MIN_PERMUTATIONS};
pub use weight::{shapley_weight, shapley_weight_f64};

/// Efficiency tolerance for exact attributions.
pub const EFFICIENCY_TOLERANCE: f64 = 1e-9;

/// A cooperative game: a payoff for every subset of `player_count` players.
pub trait Game: Sync {
    fn player_count(&self) -> usize;

    fn value(&self, coalition: CoalitionMask) -> Result<f64>;

    /// Display names for the players, in ordinal order.
    fn labels(&self) -> Vec<String> {
        (0..self.player_count()).map(|i| format!("p{i}")).collect()
    }
}

impl<G: Game + ?Sized> Game for &G {
    fn player_count(&self) -> usize {
        (**self).player_count()
    }

    fn value(&self, coalition: CoalitionMask) -> Result<f64> {
        (**self).value(coalition)
    }

    fn labels(&self) -> Vec<String> {
        (**self).labels()
    }
}

/// Adapts a closure over masks into a [`Game`].
pub struct FnGame<F> {
    players: usize,
    f: F,
}

impl<F> FnGame<F>
where
    F: Fn(CoalitionMask) -> f64 + Sync,
{
    pub fn new(players: usize, f: F) -> Self {
        Self { players, f }
    }
}

impl<F> Game for FnGame<F>
where
    F: Fn(CoalitionMask) -> f64 + Sync,
{
    fn player_count(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: CoalitionMask) -> Result<f64> {
        Ok((self.f)(coalition))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    Sampled { permutations: usize, seed: u64 },
    /// Full `n!` enumeration.
    Enumerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// `phi_i` by player ordinal.
    pub values: Vec<f64>,
    pub labels: Vec<String>,
    pub v_empty: f64,
    pub v_full: f64,
    pub method: Method,
    /// `|sum(phi) - (v_full - v_empty)|`.
    pub efficiency_residual: f64,
    /// Per-player standard error, sampled attributions only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<Vec<f64>>,
}

impl Attribution {
    pub(crate) fn assemble(
        values: Vec<f64>,
        labels: Vec<String>,
        v_empty: f64,
        v_full: f64,
        method: Method,
        standard_errors: Option<Vec<f64>>,
    ) -> Self {
        let efficiency_residual = (neumaier_sum(values.iter().copied()) - (v_full - v_empty)).abs();
        Self {
            values,
            labels,
            v_empty,
            v_full,
            method,
            efficiency_residual,
            standard_errors,
        }
    }

    pub fn player_count(&self) -> usize {
        self.values.len()
    }

    #[must_use]
    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.values.len(), "one label per player");
        self.labels = labels;
        self
    }

    /// 1-based rank of `|phi_player|` among all `|phi|`, largest first.
    ///
    /// Ties rank pessimistically: a player shares its rank with the last of
    /// the tied group, so an all-zero attribution ranks every player `n`.
    pub fn rank(&self, player: usize) -> usize {
        let own = self.values[player].abs();
        self.values.iter().filter(|v| v.abs() >= own).count()
    }

    /// `|phi_player| / sum |phi|`, zero when every value is zero.
    pub fn share(&self, player: usize) -> f64 {
        let total: f64 = self.values.iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            0.0
        } else {
            self.values[player].abs() / total
        }
    }

    /// Player ordinals sorted by decreasing `|phi|`, ties by ordinal.
    pub fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| {
            self.values[b]
                .abs()
                .total_cmp(&self.values[a].abs())
                .then(a.cmp(&b))
        });
        order
    }
}

/// Compensated sum; keeps the efficiency check meaningful for `2^24` terms.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    values.into_iter().for_each(|v| acc.add(v));
    acc.total()
}

#[derive(Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    compensation: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attribution(values: Vec<f64>) -> Attribution {
        let n = values.len();
        Attribution::assemble(values, vec![String::new(); n], 0.0, 0.0, Method::Exact, None)
    }

    #[test]
    fn rank_and_share() {
        let a = attribution(vec![0.46, -0.2, 0.2046, 0.01]);
        assert_eq!(a.rank(0), 1);
        assert_eq!(a.rank(2), 2);
        assert_eq!(a.rank(1), 3);
        assert_eq!(a.rank(3), 4);
        assert_eq!(a.ranked(), vec![0, 2, 1, 3]);
        assert!((a.share(0) - 0.46 / 0.8746).abs() < 1e-12);
    }

    #[test]
    fn zero_player_ranks_last() {
        let a = attribution(vec![0.3, 0.0, 0.1]);
        assert_eq!(a.rank(1), 3);
        assert_eq!(a.share(1), 0.0);
        let z = attribution(vec![0.0, 0.0]);
        assert_eq!(z.rank(0), 2);
        assert_eq!(z.share(0), 0.0);
    }

    #[test]
    fn compensated_sum() {
        let values = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(values), 2.0);
        let mut acc = Neumaier::default();
        values.iter().for_each(|&v| acc.add(v));
        assert_eq!(acc.total(), 2.0);
    }
}
