//! Sketches built from maxima of geometric variables.

mod codec;

pub use codec::{decode, encode, encoded_len, EncodedFingerprint};

use rand_core::RngCore;

use crate::engine::{Engine, MessageKind};
use crate::error::{Error, Result};

/// `t` maxima of geometric variables; `-1` marks a maximum over the empty set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FingerprintVector(Vec<i8>);

impl FingerprintVector {
    pub fn empty(t: usize) -> Self {
        Self(vec![-1; t])
    }

    pub fn from_values(values: Vec<i8>) -> Self {
        debug_assert!(values.iter().all(|&y| y >= -1));
        Self(values)
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Coordinatewise maximum.
    pub fn merge(&mut self, other: &[i8]) {
        merge_into(&mut self.0, other);
    }

    pub fn merged(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.merge(&other.0);
        out
    }
}

#[inline]
pub(crate) fn merge_into(acc: &mut [i8], other: &[i8]) {
    for (a, &b) in acc.iter_mut().zip(other) {
        *a = (*a).max(b);
    }
}

/// X with Pr[X ≥ k] = 2^-k: the number of leading one bits of a uniform bit stream.
#[inline]
pub fn sample_geometric(rng: &mut impl RngCore) -> i8 {
    let mut x = 0u32;
    loop {
        let ones = rng.next_u64().trailing_ones();
        x += ones;
        if ones < 64 || x >= 127 {
            return x.min(127) as i8;
        }
    }
}

/// Pr[max of `d` geometric variables < k] = (1 − 2^-k)^d.
pub fn max_cdf(d: u64, k: u32) -> Result<f64> {
    if d < 1 {
        return Err(Error::Domain(format!("count must be at least 1, got {d}")));
    }
    Ok(cdf(d as f64, k))
}

fn cdf(d: f64, k: u32) -> f64 {
    if k == 0 {
        return 0.0;
    }
    (d * (-(0.5f64).powi(k as i32)).ln_1p()).exp()
}

/// Draws the maximum of `d` geometric variables directly by inverting its distribution.
#[derive(Clone, Debug)]
pub struct MaxSampler {
    cdf: Vec<f64>,
}

impl MaxSampler {
    pub fn new(d: u64) -> Self {
        Self { cdf: (0..=128).map(|k| if d == 0 { 1.0 } else { cdf(d as f64, k) }).collect() }
    }

    pub fn sample(&self, rng: &mut impl RngCore) -> i8 {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        // Y = k exactly when F(k) ≤ u < F(k+1); F(0) = 1 encodes the empty maximum.
        if self.cdf[0] >= 1.0 {
            return -1;
        }
        self.cdf[1..].partition_point(|&f| f <= u).min(127) as i8
    }
}

/// d̂ from the smallest level k at which at least 27/40 of the maxima fall below k.
pub fn estimate_from_maxima(v: &FingerprintVector) -> f64 {
    let t = v.len();
    if t == 0 {
        return 0.0;
    }
    let mut hist = [0usize; 129];
    for &y in v.values() {
        hist[(i32::from(y) + 1) as usize] += 1;
    }
    if hist[0] == t {
        return 0.0;
    }
    let target = 27.0 * t as f64 / 40.0;
    let mut below = 0usize;
    for level in 0..=128u32 {
        // Slot `y + 1` holds the count of value `y`, so this sums the entries with Y < level.
        below += hist[level as usize];
        if below as f64 >= target {
            if level == 0 || below == t {
                return 0.0;
            }
            let ratio = below as f64 / t as f64;
            return ratio.ln() / (-(0.5f64).powi(level as i32)).ln_1p();
        }
    }
    0.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UniqueMax {
    NotUnique,
    /// 1-based position of the unique maximum.
    Position(usize),
}

pub fn unique_max_location<T: Ord + Copy>(values: &[T]) -> UniqueMax {
    let Some(&top) = values.iter().max() else {
        return UniqueMax::NotUnique;
    };
    let mut hits = values.iter().enumerate().filter(|&(_, &x)| x == top);
    match (hits.next(), hits.next()) {
        (Some((i, _)), None) => UniqueMax::Position(i + 1),
        _ => UniqueMax::NotUnique,
    }
}

/// One independent row of `t` geometric samples per cluster; clusters that do not sample hold
/// empty rows.
#[derive(Clone, Debug)]
pub struct SketchTable {
    t: usize,
    data: Vec<i8>,
}

impl SketchTable {
    pub fn sample(eng: &Engine<'_>, tag: &str, t: usize, samplers: &[bool], iteration: u64) -> Self {
        let inst = eng.instance();
        let mut data = vec![-1i8; t * inst.num_clusters()];
        for (v, row) in data.chunks_mut(t.max(1)).enumerate().take(inst.num_clusters()) {
            if samplers[v] {
                let mut rng = eng.rng(tag, inst.cluster_id(v).0, iteration);
                for y in row.iter_mut() {
                    *y = sample_geometric(&mut rng);
                }
            }
        }
        Self { t, data }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn row(&self, v: usize) -> &[i8] {
        &self.data[v * self.t..(v + 1) * self.t]
    }

    pub fn vector(&self, v: usize) -> FingerprintVector {
        FingerprintVector(self.row(v).to_vec())
    }

    /// Max over the rows of `v`'s neighbors accepted by `pred(u)`.
    pub fn neighborhood(&self, eng: &Engine<'_>, v: usize, pred: impl Fn(usize) -> bool) -> FingerprintVector {
        let mut acc = FingerprintVector::empty(self.t);
        for &u in eng.instance().neighbors(v) {
            if pred(u) {
                acc.merge(self.row(u));
            }
        }
        acc
    }
}

/// Distributed estimate of `|{u ∈ N(v) : sampler u, pred(v, u)}|` at the leader of each target.
///
/// Each sampler cluster draws `t` geometric variables and sends its encoded vector across
/// every inter-cluster link; the receiving machine evaluates the predicate and the maxima
/// are merged up the support tree of the target.
pub fn approx_count(
    eng: &mut Engine<'_>,
    tag: &str,
    xi: f64,
    samplers: &[bool],
    targets: &[usize],
    pred: impl Fn(usize, usize) -> bool,
    iteration: u64,
) -> Result<Vec<f64>> {
    let inst = eng.instance();
    let t = inst.params().sketch_length(xi, inst.n());
    let table = SketchTable::sample(eng, tag, t, samplers, iteration);
    let mut is_target = vec![false; inst.num_clusters()];
    for &v in targets {
        is_target[v] = true;
    }
    let senders: Vec<usize> = (0..inst.num_clusters()).filter(|&v| samplers[v]).collect();
    let len: Vec<u64> = (0..inst.num_clusters())
        .map(|v| if samplers[v] { encoded_len(&table.vector(v)) as u64 } else { 0 })
        .collect();
    let items: Vec<(usize, u64)> = senders.iter().map(|&v| (v, len[v])).collect();
    eng.broadcast(tag, MessageKind::Bulk, &items)?;
    eng.exchange(tag, MessageKind::Bulk, senders.iter().copied(), |src, dst| is_target[dst].then_some(len[src]))?;
    let merged: Vec<FingerprintVector> =
        targets.iter().map(|&v| table.neighborhood(eng, v, |u| samplers[u] && pred(v, u))).collect();
    let up: Vec<(usize, u64)> = targets.iter().zip(&merged).map(|(&v, m)| (v, encoded_len(m) as u64)).collect();
    eng.convergecast(tag, MessageKind::Bulk, &up)?;
    Ok(merged.iter().map(estimate_from_maxima).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn cdf_values() {
        assert_eq!(max_cdf(1, 1).unwrap(), 0.5);
        assert!((max_cdf(4, 2).unwrap() - 0.316_406_25).abs() < 1e-12);
        assert_eq!(max_cdf(7, 0).unwrap(), 0.0);
        assert!(matches!(max_cdf(0, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn estimator_examples() {
        assert_eq!(estimate_from_maxima(&FingerprintVector::empty(10)), 0.0);
        let v = FingerprintVector::from_values(vec![2, 2, 3, 3, 3, 3, 3, 3, 4, 4]);
        let expect = 0.8f64.ln() / 0.9375f64.ln();
        assert!((estimate_from_maxima(&v) - expect).abs() < 1e-12);
        assert!((expect - 3.4575).abs() < 1e-3);
    }

    #[test]
    fn unique_max_examples() {
        assert_eq!(unique_max_location(&[5, 2, 2]), UniqueMax::Position(1));
        assert_eq!(unique_max_location(&[4, 4, 1]), UniqueMax::NotUnique);
    }

    #[test]
    fn sampler_matches_direct_maximum() {
        let s = MaxSampler::new(1);
        let mut rng = CounterRng::new(1, 2, 3, 4);
        let n = 200_000;
        let below_two = (0..n).filter(|_| s.sample(&mut rng) < 2).count() as f64 / n as f64;
        assert!((below_two - 0.75).abs() < 0.01);
        assert_eq!(MaxSampler::new(0).sample(&mut rng), -1);
    }
}
