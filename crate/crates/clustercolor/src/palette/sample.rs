use rand::seq::SliceRandom;

use crate::rng::CounterRng;

/// A pseudorandom multiset of `size` elements of `[universe]`, expanded from one seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepresentativeSample {
    pub universe: u64,
    pub size: usize,
    pub seed: u64,
}

impl RepresentativeSample {
    /// Members in `1..=universe`, drawn with replacement.
    pub fn members(&self) -> Vec<u64> {
        (0..self.size).map(|i| self.member(i)).collect()
    }

    /// The `i`-th member (0-based), computed without expanding the others.
    pub fn member(&self, i: usize) -> u64 {
        let x = CounterRng::from_subseed(self.seed).draw_at(i as u64);
        1 + ((u128::from(x) * u128::from(self.universe)) >> 64) as u64
    }

    /// Fraction of the sample that falls in `set` (given as a membership test).
    pub fn fraction_in(&self, set: impl Fn(u64) -> bool) -> f64 {
        if self.size == 0 {
            return 0.0;
        }
        self.members().into_iter().filter(|&x| set(x)).count() as f64 / self.size as f64
    }
}

/// Sample size ⌈3·α⁻²·δ⁻¹·ln(2/ν)⌉: large sets keep their density within `1 ± α`, and sets of
/// density below δ stay below `(1 + α)δ`, each except with probability ν.
pub fn representative_size(alpha: f64, delta: f64, nu: f64) -> usize {
    (3.0 / (alpha * alpha * delta) * (2.0 / nu).ln()).ceil() as usize
}

pub fn representative_sample(universe: u64, alpha: f64, delta: f64, nu: f64, seed: u64) -> RepresentativeSample {
    RepresentativeSample { universe: universe.max(1), size: representative_size(alpha, delta, nu), seed }
}

/// Permutation of `0..size` expanded from a broadcast sub-seed by Fisher–Yates.
pub fn sct_permutation(size: usize, subseed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..size).collect();
    perm.shuffle(&mut CounterRng::from_subseed(subseed));
    perm
}
