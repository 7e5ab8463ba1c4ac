use proptest::prelude::*;

use clustercolor::fingerprint::{
    decode, encode, estimate_from_maxima, max_cdf, sample_geometric, unique_max_location, FingerprintVector, MaxSampler, UniqueMax,
};
use clustercolor::rng::CounterRng;

fn vector() -> impl Strategy<Value = FingerprintVector> {
    prop::collection::vec(-1i8..40, 0..200).prop_map(FingerprintVector::from_values)
}

proptest! {
    #[test]
    fn codec_roundtrip(v in vector()) {
        prop_assert_eq!(decode(&encode(&v)).unwrap(), v);
    }

    #[test]
    fn merge_is_a_semilattice(a in prop::collection::vec(-1i8..30, 32), b in prop::collection::vec(-1i8..30, 32), c in prop::collection::vec(-1i8..30, 32)) {
        let (a, b, c) = (FingerprintVector::from_values(a), FingerprintVector::from_values(b), FingerprintVector::from_values(c));
        prop_assert_eq!(a.merged(&b), b.merged(&a));
        prop_assert_eq!(a.merged(&b).merged(&c), a.merged(&b.merged(&c)));
        prop_assert_eq!(a.merged(&a), a.clone());
        prop_assert_eq!(a.merged(&FingerprintVector::empty(32)), a);
    }

    #[test]
    fn unique_max_agrees_with_counting(values in prop::collection::vec(0u8..6, 1..30)) {
        let top = *values.iter().max().unwrap();
        let hits: Vec<usize> = values.iter().enumerate().filter(|(_, &x)| x == top).map(|(i, _)| i + 1).collect();
        let want = if hits.len() == 1 { UniqueMax::Position(hits[0]) } else { UniqueMax::NotUnique };
        prop_assert_eq!(unique_max_location(&values), want);
    }
}

#[test]
fn truncated_encoding_is_rejected() {
    let v = FingerprintVector::from_values(vec![3, 4, 5, 2, 9]);
    let e = encode(&v);
    let len = e.bit_len();
    let short = clustercolor::fingerprint::EncodedFingerprint::from_raw(e.bytes().to_vec(), len - 3);
    assert!(short.is_err() || decode(&short.unwrap()).is_err());
}

#[test]
fn geometric_tail_is_halving() {
    let mut rng = CounterRng::for_stage(11, "geometric", 0, 0);
    let n = 200_000;
    let mut at_least = [0usize; 6];
    for _ in 0..n {
        let x = sample_geometric(&mut rng) as usize;
        for (k, slot) in at_least.iter_mut().enumerate() {
            if x >= k {
                *slot += 1;
            }
        }
    }
    for (k, &c) in at_least.iter().enumerate() {
        let want = n as f64 * 0.5f64.powi(k as i32);
        assert!((c as f64 - want).abs() < 5.0 * want.sqrt() + 1.0, "Pr[X ≥ {k}]: {c} vs {want}");
    }
}

#[test]
fn max_sampler_matches_explicit_maximum() {
    let d = 37u64;
    let sampler = MaxSampler::new(d);
    let mut direct = CounterRng::for_stage(3, "direct", 0, 0);
    let mut inverted = CounterRng::for_stage(3, "inverted", 0, 0);
    let trials = 40_000;
    let mut a = [0f64; 16];
    let mut b = [0f64; 16];
    for _ in 0..trials {
        let x = (0..d).map(|_| sample_geometric(&mut direct)).max().unwrap();
        a[(x as usize).min(15)] += 1.0;
        b[(sampler.sample(&mut inverted) as usize).min(15)] += 1.0;
    }
    for k in 0..16 {
        let p = max_cdf(d, k as u32 + 1).unwrap() - max_cdf(d, k as u32).unwrap();
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((a[k] - trials as f64 * p).abs() <= 5.0 * sd + 2.0, "direct level {k}");
        assert!((b[k] - trials as f64 * p).abs() <= 5.0 * sd + 2.0, "sampler level {k}");
    }
    assert_eq!(MaxSampler::new(0).sample(&mut inverted), -1);
}

#[test]
fn estimator_is_close_for_long_sketches() {
    let mut rng = CounterRng::for_stage(5, "estimate", 0, 0);
    for d in [1u64, 10, 300] {
        let sampler = MaxSampler::new(d);
        let v = FingerprintVector::from_values((0..20_000).map(|_| sampler.sample(&mut rng)).collect());
        let est = estimate_from_maxima(&v);
        assert!((est - d as f64).abs() <= 0.15 * d as f64 + 0.5, "d = {d}, estimate {est}");
    }
    assert_eq!(estimate_from_maxima(&FingerprintVector::empty(100)), 0.0);
}
