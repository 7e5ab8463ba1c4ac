use serde::{Deserialize, Serialize};

use crate::rng::CounterRng;

/// Deterministic Miller–Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let (mut d, mut s) = (n - 1, 0);
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `≥ n`.
pub fn next_prime(n: u64) -> u64 {
    let mut p = n.max(2);
    while !is_prime(p) {
        p += 1;
    }
    p
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (u128::from(a) * u128::from(b) % u128::from(m)) as u64
}

fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    r
}

fn bit_len(x: u64) -> u64 {
    u64::from(64 - x.leading_zeros())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashKind {
    /// Random polynomial of the given degree over the field.
    MinWise { degree: u32 },
    /// `((a·x + b) mod p) mod range`.
    AlmostPairwise { range: u64 },
    /// An almost-pairwise function verified injective on a given set.
    CollisionFree { range: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashSpec {
    pub kind: HashKind,
    pub prime: u64,
    /// Polynomial coefficients, constant term first.
    pub coefficients: Vec<u64>,
}

impl HashSpec {
    pub fn evaluate(&self, x: u64) -> u64 {
        let p = self.prime;
        let x = x % p;
        let v = self.coefficients.iter().rev().fold(0u64, |acc, &c| (mul_mod(acc, x, p) + c) % p);
        match self.kind {
            HashKind::MinWise { .. } => v,
            HashKind::AlmostPairwise { range } | HashKind::CollisionFree { range } => v % range,
        }
    }

    /// Size of the wire description: a 2-bit kind tag, then the prime, the range (when present)
    /// and every coefficient at the prime's width.
    pub fn description_bits(&self) -> u64 {
        let w = bit_len(self.prime);
        let range = match self.kind {
            HashKind::MinWise { .. } => 0,
            HashKind::AlmostPairwise { .. } | HashKind::CollisionFree { .. } => w,
        };
        2 + w + range + w * self.coefficients.len() as u64
    }
}

/// Polynomial hash of degree ⌈2·log₂(1/ε)⌉ (at least 2) over a prime field `≥ max(N, 4/ε)²`.
pub fn minwise_hash(epsilon: f64, universe: u64, rng: &mut CounterRng) -> HashSpec {
    let degree = ((2.0 * (1.0 / epsilon).log2()).ceil() as u32).max(2);
    let base = universe.max((4.0 / epsilon).ceil() as u64).max(2);
    let prime = next_prime(base.saturating_mul(base).min(1 << 61));
    let coefficients = (0..=degree).map(|_| rng.below(prime)).collect();
    HashSpec { kind: HashKind::MinWise { degree }, prime, coefficients }
}

/// `((a·x + b) mod p) mod range` with `p` a prime above the universe and `a ≠ 0`.
pub fn almost_pairwise_hash(universe: u64, range: u64, rng: &mut CounterRng) -> HashSpec {
    let prime = next_prime(universe.max(range).saturating_mul(4).max(3));
    let a = 1 + rng.below(prime - 1);
    let b = rng.below(prime);
    HashSpec { kind: HashKind::AlmostPairwise { range: range.max(1) }, prime, coefficients: vec![b, a] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes() {
        assert!(is_prime(2) && is_prime(3) && is_prime(1_000_000_007));
        assert!(!is_prime(1) && !is_prime(561) && !is_prime(1_000_000_007 * 3));
        assert_eq!(next_prime(14), 17);
        assert!(is_prime(18_446_744_073_709_551_557));
    }

    #[test]
    fn deterministic_per_seed() {
        let h1 = minwise_hash(0.1, 1000, &mut CounterRng::new(1, 2, 3, 4));
        let h2 = minwise_hash(0.1, 1000, &mut CounterRng::new(1, 2, 3, 4));
        assert_eq!(h1, h2);
        assert_eq!(h1.evaluate(17), h2.evaluate(17));
    }

    #[test]
    fn description_length_bound() {
        for &(eps, n) in &[(0.1, 1000u64), (0.01, 1 << 20), (0.25, 64)] {
            let h = minwise_hash(eps, n, &mut CounterRng::new(9, 0, 0, 0));
            let bound = 16.0 * (n as f64).log2() * (1.0 / eps).log2().max(1.0);
            assert!((h.description_bits() as f64) <= bound, "{eps} {n}: {}", h.description_bits());
        }
    }
}
