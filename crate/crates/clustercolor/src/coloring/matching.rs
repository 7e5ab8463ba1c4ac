use std::collections::{BTreeMap, BTreeSet};

use crate::acd::AcdLabeling;
use crate::coloring::{Color, PartialColoring};
use crate::engine::{Engine, MachineTree, MessageKind};
use crate::error::Result;
use crate::fingerprint::{encoded_len, sample_geometric, FingerprintVector};
use crate::netmodel::ParamSet;
use crate::palette::minwise_hash;
use crate::verify;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchingOutcome {
    /// `M_K = |K ∩ dom φ| − |φ(K)|` per listed clique.
    pub sizes: BTreeMap<usize, u64>,
    /// Colors committed by the matching, per clique.
    pub colors: BTreeMap<usize, BTreeSet<Color>>,
    pub iterations: u32,
}

/// Colorful matching by repeated random trials above the excluded prefix.
///
/// Every uncolored member of a listed clique samples a color and drops it when a neighbor
/// holds or sampled the same color. Within each clique, the survivors whose colors fall in
/// the same range of `C·log n` colors are joined by a depth-2 BFS, and bitmaps aggregated on
/// those trees reveal the colors held by two or more survivors. Exactly those colors are kept.
#[allow(clippy::too_many_arguments)]
pub fn colorful_matching_high(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &mut PartialColoring,
    cliques: &[usize],
    epsilon: f64,
    excluded: u32,
    iteration: u64,
) -> Result<MatchingOutcome> {
    let inst = eng.instance();
    let q = inst.delta() as Color + 1;
    let iterations = (inst.params().matching_rounds / epsilon).ceil() as u32;
    let range_len = (inst.params().c_range * ParamSet::log_n(inst.n())).max(1);
    let mut out = MatchingOutcome { iterations, ..MatchingOutcome::default() };
    for &k in cliques {
        out.colors.insert(k, BTreeSet::new());
    }
    let cbits = eng.color_bits();
    if excluded < q {
        let tag = "colorful-matching";
        for it in 0..iterations {
            let round = iteration * 10_000 + u64::from(it);
            let mut sampled: Vec<Option<Color>> = vec![None; inst.num_clusters()];
            let mut samplers = Vec::new();
            for &k in cliques {
                for &v in &labeling.cliques[k].members {
                    if coloring.is_colored(v) {
                        continue;
                    }
                    let mut rng = eng.rng(tag, inst.cluster_id(v).0, round);
                    sampled[v] = Some(excluded + 1 + rng.below(u64::from(q - excluded)) as Color);
                    samplers.push(v);
                }
            }
            samplers.sort_unstable();
            eng.h_round(tag, MessageKind::Unit, &samplers, cbits, 1)?;
            let retained: Vec<usize> = samplers
                .iter()
                .copied()
                .filter(|&v| {
                    let c = sampled[v].expect("sampler");
                    inst.neighbors(v).iter().all(|&u| sampled[u] != Some(c) && coloring.get(u) != Some(c))
                })
                .collect();

            // One subgraph per (clique, range) holding retained members.
            let mut groups: BTreeMap<(usize, u32), Vec<usize>> = BTreeMap::new();
            for &v in &retained {
                let k = labeling.clique_of(v).expect("dense sampler");
                let c = sampled[v].expect("sampler");
                groups.entry((k, (c - excluded - 1) / range_len)).or_default().push(v);
            }
            let keys: Vec<(usize, u32)> = groups.keys().copied().collect();
            let subgraphs: Vec<Vec<usize>> = groups.into_values().collect();
            let sources: Vec<usize> = subgraphs.iter().map(|g| g[0]).collect();
            let forest = eng.parallel_bfs(&subgraphs, &sources, 2)?;
            let trees: Vec<&MachineTree> = forest.trees.iter().map(|t| &t.machines).collect();
            let len = u64::from(range_len);
            eng.forest_cast(tag, MessageKind::Unit, &trees, |_| len, true)?;
            eng.forest_cast(tag, MessageKind::Unit, &trees, |_| len, true)?;
            eng.forest_cast(tag, MessageKind::Unit, &trees, |_| len, false)?;

            let mut committed = Vec::new();
            for (tree, &(k, _)) in forest.trees.iter().zip(&keys) {
                let mut holders: BTreeMap<Color, Vec<usize>> = BTreeMap::new();
                for &v in &tree.clusters {
                    holders.entry(sampled[v].expect("sampler")).or_default().push(v);
                }
                for (c, hs) in holders {
                    if hs.len() >= 2 {
                        for &v in &hs {
                            coloring.set(v, c, "colorful-matching");
                            committed.push(v);
                        }
                        out.colors.get_mut(&k).expect("listed clique").insert(c);
                    }
                }
            }
            committed.sort_unstable();
            eng.exchange(tag, MessageKind::Unit, committed, |_, _| Some(cbits))?;
        }
    }
    // M_K from palette counts before and after, aggregated on each clique tree.
    let trees: Vec<&MachineTree> = cliques.iter().map(|&k| &labeling.cliques[k].tree).collect();
    let word = eng.word();
    eng.forest_cast("colorful-matching", MessageKind::Unit, &trees, |_| 2 * word, true)?;
    eng.forest_cast("colorful-matching", MessageKind::Unit, &trees, |_| word, false)?;
    for &k in cliques {
        out.sizes.insert(k, verify::matching_size(&labeling.cliques[k].members, coloring));
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FingerprintMatching {
    /// Anti-edges `(u_i, w_i)`: `u_i` the trial's unique maximum, `w_i` its sampled anti-neighbor.
    pub pairs: Vec<(usize, usize)>,
    pub trials: u64,
    /// Trials passing the first filter.
    pub accepted: usize,
}

/// Number of fingerprint-matching trials, ⌈6·C·log₂ n/(ε·τ)⌉ with τ = 4ε.
pub fn matching_trials(epsilon: f64, c: f64, n: usize) -> u64 {
    let tau = 4.0 * epsilon;
    (6.0 * c * f64::from(ParamSet::log_n(n)) / (epsilon * tau)).ceil() as u64
}

/// Anti-edge matching inside a clique from unique maxima of geometric fingerprints.
///
/// Each member draws one geometric variable per trial. A trial is kept when its maximum over
/// the clique is attained at a single member `u` that was not the unique maximum of an earlier
/// trial, and some member's closed-neighborhood maximum misses it, i.e. `u` has an
/// anti-neighbor. The trial's anti-neighbor `w` minimizes a fresh min-wise hash of the local
/// identifiers over those members. Surviving trials are then selected greedily in index order
/// so that the pairs form a matching.
pub fn fingerprint_matching(
    eng: &mut Engine<'_>,
    members: &[usize],
    tree: &MachineTree,
    epsilon: f64,
    iteration: u64,
) -> Result<FingerprintMatching> {
    let inst = eng.instance();
    let tag = "fingerprint-matching";
    let m = members.len();
    let k = matching_trials(epsilon, inst.params().matching_c, inst.n());
    let mut out = FingerprintMatching { trials: k, ..FingerprintMatching::default() };
    if m < 2 {
        return Ok(out);
    }
    let kk = k as usize;
    let mut best = vec![-1i8; kk];
    let mut arg = vec![0u32; kk];
    let mut count = vec![0u32; kk];
    for (j, &v) in members.iter().enumerate() {
        let mut rng = eng.rng(tag, inst.cluster_id(v).0, iteration);
        for i in 0..kk {
            let x = sample_geometric(&mut rng);
            if x > best[i] {
                best[i] = x;
                arg[i] = j as u32;
                count[i] = 1;
            } else if x == best[i] {
                count[i] += 1;
            }
        }
    }

    // Fingerprints to clique neighbors, Y^K over the tree, then local identifiers.
    let mut in_k = vec![false; inst.num_clusters()];
    for &v in members {
        in_k[v] = true;
    }
    let fp_bits = encoded_len(&FingerprintVector::from_values(best.clone())) as u64;
    eng.exchange(tag, MessageKind::Bulk, members.iter().copied(), |_, dst| in_k[dst].then_some(fp_bits))?;
    eng.forest_cast(tag, MessageKind::Bulk, &[tree], |_| fp_bits, true)?;
    eng.forest_cast(tag, MessageKind::Bulk, &[tree], |_| fp_bits, false)?;
    let marks = members.iter().map(|&v| (inst.leader(v), 1i64)).collect();
    eng.prefix_sums(&[tree], &marks)?;

    let mut seen = vec![false; m];
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for i in 0..kk {
        if count[i] != 1 {
            continue;
        }
        let u = arg[i] as usize;
        if std::mem::replace(&mut seen[u], true) {
            continue;
        }
        let anti: Vec<usize> =
            (0..m).filter(|&j| j != u && !inst.adjacent(members[u], members[j])).collect();
        if anti.is_empty() {
            continue;
        }
        let mut rng = eng.rng("fingerprint-matching-hash", inst.cluster_id(members[0]).0, iteration * kk as u64 + i as u64);
        let h = minwise_hash(0.5, m as u64, &mut rng);
        let w = *anti.iter().min_by_key(|&&j| (h.evaluate(j as u64 + 1), j)).expect("non-empty");
        kept.push((u, w));
    }
    out.accepted = kept.len();
    let ibits = kept.len() as u64;
    eng.forest_cast(tag, MessageKind::Bulk, &[tree], |_| k, true)?;
    eng.forest_cast(tag, MessageKind::Bulk, &[tree], |_| k, false)?;
    eng.exchange(tag, MessageKind::Bulk, members.iter().copied(), |_, dst| in_k[dst].then_some(ibits.max(1)))?;
    let hbits = ibits * 2 * eng.word();
    eng.forest_cast(tag, MessageKind::Bulk, &[tree], |_| hbits, true)?;
    eng.forest_cast(tag, MessageKind::Bulk, &[tree], |_| hbits, false)?;

    // Trials in index order; a trial survives when neither endpoint is in a surviving pair.
    let mut taken = BTreeSet::new();
    for &(u, w) in &kept {
        if taken.contains(&u) || taken.contains(&w) {
            continue;
        }
        taken.insert(u);
        taken.insert(w);
        out.pairs.push((members[u], members[w]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BandwidthPolicy;
    use crate::netmodel::{generate_planted, Preset};

    fn clique(size: usize, anti_edges: usize) -> crate::netmodel::Instance {
        let mut spec = Preset::PlantedCabals.spec(1, size, 1);
        spec.cliques[0].anti_edges = anti_edges;
        spec.cliques[0].anti_regular = 0;
        spec.cliques[0].external_degree = 0;
        generate_planted(5, &spec).unwrap().instance
    }

    #[test]
    fn true_clique_has_no_matching() {
        let inst = clique(24, 0);
        let members: Vec<usize> = (0..24).collect();
        let labeling = AcdLabeling::from_cliques(&inst, std::slice::from_ref(&members));
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(24);
        let m = colorful_matching_high(&mut eng, &labeling, &mut phi, &[0], 0.05, 2, 0).unwrap();
        assert_eq!(m.sizes[&0], 0);
        assert_eq!(phi.colored_count(), 0);
        let f = fingerprint_matching(&mut eng, &members, &labeling.cliques[0].tree, 0.05, 0).unwrap();
        assert!(f.pairs.is_empty());
    }

    #[test]
    fn single_anti_edge_is_found() {
        let inst = clique(24, 1);
        let members: Vec<usize> = (0..24).collect();
        let missing: Vec<(usize, usize)> = (0..24)
            .flat_map(|a| (a + 1..24).map(move |b| (a, b)))
            .filter(|&(a, b)| !inst.adjacent(a, b))
            .collect();
        assert_eq!(missing.len(), 1);
        let (a, b) = missing[0];
        let labeling = AcdLabeling::from_cliques(&inst, std::slice::from_ref(&members));
        let mut eng = Engine::new(&inst, 2, BandwidthPolicy::Audit, false);
        let f = fingerprint_matching(&mut eng, &members, &labeling.cliques[0].tree, 0.05, 0).unwrap();
        assert_eq!(f.pairs.len(), 1);
        for &(u, w) in &f.pairs {
            assert!((u, w) == (a, b) || (u, w) == (b, a));
        }
    }

    #[test]
    fn trial_count_formula() {
        assert_eq!(matching_trials(0.25, 1.0, 1024), (6.0f64 * 10.0 / (0.25 * 1.0)).ceil() as u64);
    }
}
