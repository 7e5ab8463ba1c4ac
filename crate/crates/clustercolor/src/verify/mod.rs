//! Centralized exact checkers and brute-force oracles. Nothing here touches an engine.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::acd::AcdLabeling;
use crate::coloring::{Color, PartialColoring};
use crate::engine::RoundLedger;
use crate::netmodel::Instance;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub witnesses: Vec<String>,
    pub measured: BTreeMap<String, f64>,
}

const MAX_WITNESSES: usize = 20;

impl Verdict {
    pub fn new(check: &str) -> Self {
        Self { check: check.to_string(), pass: true, ..Self::default() }
    }

    /// Records a failure with its witness.
    pub fn fail(&mut self, witness: String) {
        self.pass = false;
        if self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(witness);
        }
    }

    pub fn measure(&mut self, key: &str, value: f64) {
        self.measured.insert(key.to_string(), value);
    }
}

/// No monochromatic H-edge and every color in `[Δ+1]`.
pub fn check_proper(inst: &Instance, coloring: &PartialColoring) -> Verdict {
    let mut out = Verdict::new("proper");
    let q = inst.delta() as Color + 1;
    for v in 0..inst.num_clusters() {
        let Some(c) = coloring.get(v) else { continue };
        if c < 1 || c > q {
            out.fail(format!("cluster {} holds color {c} outside [1, {q}]", inst.cluster_id(v)));
        }
        for &u in inst.neighbors(v) {
            if u > v && coloring.get(u) == Some(c) {
                out.fail(format!("edge {}-{} has both ends colored {c}", inst.cluster_id(v), inst.cluster_id(u)));
            }
        }
    }
    out.measure("colored", coloring.colored_count() as f64);
    out
}

/// Every listed cluster holds a color.
pub fn check_total(inst: &Instance, coloring: &PartialColoring, targets: impl IntoIterator<Item = usize>) -> Verdict {
    let mut out = Verdict::new("total");
    let mut missing = 0usize;
    for v in targets {
        if !coloring.is_colored(v) {
            missing += 1;
            out.fail(format!("cluster {} is uncolored", inst.cluster_id(v)));
        }
    }
    out.measure("uncolored", missing as f64);
    out
}

/// Adjacency rows as bitsets, for fast neighborhood intersections.
struct Bits {
    words: usize,
    rows: Vec<u64>,
}

impl Bits {
    fn new(inst: &Instance) -> Self {
        let n = inst.num_clusters();
        let words = n.div_ceil(64).max(1);
        let mut rows = vec![0u64; n * words];
        for v in 0..n {
            for &u in inst.neighbors(v) {
                rows[v * words + u / 64] |= 1 << (u % 64);
            }
        }
        Self { words, rows }
    }

    fn row(&self, v: usize) -> &[u64] {
        &self.rows[v * self.words..(v + 1) * self.words]
    }

    fn common(&self, u: usize, v: usize) -> usize {
        self.row(u).iter().zip(self.row(v)).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }
}

/// ζ_v = (C(Δ, 2) − ½ Σ_{u ∈ N(v)} |N(u) ∩ N(v)|) / Δ.
pub fn sparsity(inst: &Instance, v: usize) -> f64 {
    sparsity_with(inst, &Bits::new(inst), v)
}

fn sparsity_with(inst: &Instance, bits: &Bits, v: usize) -> f64 {
    let delta = inst.delta() as f64;
    if delta == 0.0 {
        return 0.0;
    }
    let shared: usize = inst.neighbors(v).iter().map(|&u| bits.common(u, v)).sum();
    (delta * (delta - 1.0) / 2.0 - shared as f64 / 2.0) / delta
}

pub fn sparsity_all(inst: &Instance) -> Vec<f64> {
    let bits = Bits::new(inst);
    (0..inst.num_clusters()).map(|v| sparsity_with(inst, &bits, v)).collect()
}

/// Exact evaluation of the decomposition conditions: sparse clusters are
/// `c_sparse·ε²Δ`-sparse, every clique has `|K| ≤ (1+ε)Δ`, and each member has at least
/// `(1−ε)|K|` neighbors in its clique.
pub fn check_acd(inst: &Instance, labeling: &AcdLabeling, eps: f64, c_sparse: f64) -> Verdict {
    let mut out = Verdict::new("acd");
    let delta = inst.delta() as f64;
    let zeta_min = c_sparse * eps * eps * delta;
    out.measure("zeta_threshold", zeta_min);
    let bits = Bits::new(inst);
    let mut worst = f64::INFINITY;
    for v in labeling.sparse() {
        let z = sparsity_with(inst, &bits, v);
        worst = worst.min(z);
        if z < zeta_min {
            out.fail(format!("part 1: sparse cluster {} has sparsity {z:.3} < {zeta_min:.3}", inst.cluster_id(v)));
        }
    }
    if worst.is_finite() {
        out.measure("min_sparse_zeta", worst);
    }
    let mut covered = vec![false; inst.num_clusters()];
    for (k, c) in labeling.cliques.iter().enumerate() {
        let size = c.members.len() as f64;
        if size > (1.0 + eps) * delta {
            out.fail(format!("part 2(i): clique {k} has {} members > (1+eps)·{delta}", c.members.len()));
        }
        let mut in_k = vec![false; inst.num_clusters()];
        for &v in &c.members {
            in_k[v] = true;
            if covered[v] {
                out.fail(format!("cluster {} belongs to two cliques", inst.cluster_id(v)));
            }
            covered[v] = true;
        }
        for &v in &c.members {
            let inside = inst.neighbors(v).iter().filter(|&&u| in_k[u]).count();
            if (inside as f64) < (1.0 - eps) * size {
                out.fail(format!(
                    "part 2(ii): cluster {} has {inside} neighbors in clique {k} of size {}",
                    inst.cluster_id(v),
                    c.members.len()
                ));
            }
        }
    }
    out.measure("cliques", labeling.cliques.len() as f64);
    out.measure("sparse", labeling.sparse().len() as f64);
    out
}

/// Brute-force per-cluster and per-clique quantities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExactQuantities {
    /// Neighbors outside `K_v` (all neighbors for sparse clusters).
    pub external: Vec<usize>,
    /// Non-neighbors inside `K_v`, excluding `v`.
    pub anti: Vec<usize>,
    /// `|L_φ(v)| − deg_φ(v)` with `deg_φ` the uncolored degree.
    pub slack: Vec<i64>,
    /// Colored neighbors minus distinct neighbor colors.
    pub reuse_slack: Vec<usize>,
    pub palette_size: Vec<usize>,
    /// Average anti-degree per clique.
    pub a_k: Vec<f64>,
    /// Average external degree per clique.
    pub e_k: Vec<f64>,
    /// `|L_φ(K)|` per clique.
    pub clique_palette: Vec<usize>,
}

pub fn exact_quantities(inst: &Instance, labeling: &AcdLabeling, coloring: &PartialColoring) -> ExactQuantities {
    let n = inst.num_clusters();
    let q = inst.delta() + 1;
    let mut out = ExactQuantities::default();
    for v in 0..n {
        let k = labeling.clique_of(v);
        let same = |u: usize| k.is_some() && labeling.clique_of(u) == k;
        let inside = inst.neighbors(v).iter().filter(|&&u| same(u)).count();
        out.external.push(inst.degree(v) - inside);
        out.anti.push(k.map_or(0, |k| labeling.cliques[k].members.len() - 1 - inside));
        let palette = coloring.palette(inst, v);
        let free = palette.iter().filter(|&&b| b).count();
        out.palette_size.push(free);
        out.slack.push(free as i64 - coloring.uncolored_degree(inst, v) as i64);
        let colored = coloring.colored_degree(inst, v);
        out.reuse_slack.push(colored - (q - free));
    }
    for c in &labeling.cliques {
        let size = c.members.len() as f64;
        out.a_k.push(c.members.iter().map(|&v| out.anti[v] as f64).sum::<f64>() / size);
        out.e_k.push(c.members.iter().map(|&v| out.external[v] as f64).sum::<f64>() / size);
        let used: BTreeSet<Color> = c.members.iter().filter_map(|&v| coloring.get(v)).collect();
        out.clique_palette.push(q - used.len());
    }
    out
}

/// `z_v = (Δ+1−r) − Σ_{c>r} μ^K(c) − Σ_{c>r} μ^e(c) + γ·e_K + 40·a_K + x_v` with exact
/// degrees, for a dense cluster `v`.
pub fn z_exact(
    inst: &Instance,
    labeling: &AcdLabeling,
    exact: &ExactQuantities,
    coloring: &PartialColoring,
    v: usize,
    reserved: u32,
    gamma: f64,
) -> f64 {
    let k = labeling.clique_of(v).expect("dense cluster");
    let c = &labeling.cliques[k];
    let q = inst.delta() + 1;
    let above = |u: usize| coloring.get(u).is_some_and(|col| col > reserved);
    let mu_k = c.members.iter().filter(|&&u| above(u)).count();
    let mu_e = inst.neighbors(v).iter().filter(|&&u| labeling.clique_of(u) != Some(k) && above(u)).count();
    let x = c.members.len() as f64 - q as f64 + exact.external[v] as f64;
    (q as f64 - f64::from(reserved)) - mu_k as f64 - mu_e as f64 + gamma * exact.e_k[k] + 40.0 * exact.a_k[k] + x
}

/// Per-link per-round load against the budget, from the per-round records (and from the
/// per-link entries when they were recorded), plus the per-category message budgets.
pub fn audit_bandwidth(ledger: &RoundLedger, budget: u64) -> Verdict {
    let mut out = Verdict::new("bandwidth");
    let mut max = ledger.max_link_bits();
    for r in ledger.round_records() {
        max = max.max(r.largest_message);
        if r.largest_message > budget {
            out.fail(format!("stage {}: a {}-bit message in round {}", r.stage, r.largest_message, r.round));
        }
    }
    if ledger.is_recording() {
        let mut load: BTreeMap<(u64, u32, u32), u64> = BTreeMap::new();
        for e in ledger.entries() {
            *load.entry((e.round, e.from, e.to)).or_default() += e.bits;
        }
        max = max.max(load.values().copied().max().unwrap_or(0));
        for (&(round, from, to), &bits) in &load {
            if bits > budget {
                out.fail(format!("link {from}->{to} carries {bits} bits in round {round}"));
            }
        }
    }
    for v in ledger.violations() {
        out.fail(format!("stage {}: link {}->{} carries {} bits in round {}", v.stage, v.from, v.to, v.bits, v.round));
    }
    for (tag, cat) in ledger.categories() {
        if let Some(b) = cat.budget.filter(|&b| cat.max_bits > b) {
            out.fail(format!("category {tag}: largest message {} bits exceeds its budget {b}", cat.max_bits));
        }
    }
    out.measure("max_link_bits", max as f64);
    out.measure("budget", budget as f64);
    out
}

/// Colorful-matching validity for one clique: each listed color is held by at least two
/// pairwise non-adjacent members and lies outside the first `excluded` colors.
pub fn check_matching(
    inst: &Instance,
    members: &[usize],
    coloring: &PartialColoring,
    colors: &BTreeSet<Color>,
    excluded: u32,
) -> Verdict {
    let mut out = Verdict::new("colorful-matching");
    let mut holders: BTreeMap<Color, Vec<usize>> = BTreeMap::new();
    for &v in members {
        if let Some(c) = coloring.get(v).filter(|c| colors.contains(c)) {
            holders.entry(c).or_default().push(v);
        }
    }
    for &c in colors {
        let hs = holders.get(&c).map_or(&[][..], |h| h.as_slice());
        if c <= excluded {
            out.fail(format!("matched color {c} lies in the excluded prefix [{excluded}]"));
        }
        if hs.len() < 2 {
            out.fail(format!("matched color {c} is held by {} member(s)", hs.len()));
        }
        for (i, &a) in hs.iter().enumerate() {
            for &b in &hs[i + 1..] {
                if inst.adjacent(a, b) {
                    out.fail(format!("matched color {c} on adjacent {}-{}", inst.cluster_id(a), inst.cluster_id(b)));
                }
            }
        }
    }
    let size: usize = holders.values().map(|h| h.len().saturating_sub(1)).sum();
    out.measure("M_K", size as f64);
    out
}

/// Matching size `|K ∩ dom φ| − |φ(K)|`.
pub fn matching_size(members: &[usize], coloring: &PartialColoring) -> u64 {
    let colored = members.iter().filter(|&&v| coloring.is_colored(v)).count();
    let distinct: BTreeSet<Color> = members.iter().filter_map(|&v| coloring.get(v)).collect();
    (colored - distinct.len()) as u64
}

/// Put-aside conditions for a family of cabals: `|P_K| = r`, no edge between the put-aside
/// sets of different cabals, and at most `|K|/100` members of `K` with a neighbor in another
/// cabal's put-aside set.
pub fn check_put_aside(inst: &Instance, cabals: &[(&[usize], &[usize], u32)]) -> Verdict {
    let mut out = Verdict::new("put-aside");
    let mut owner = vec![usize::MAX; inst.num_clusters()];
    let mut clique_of = vec![usize::MAX; inst.num_clusters()];
    for (i, &(members, p, r)) in cabals.iter().enumerate() {
        if p.len() != r as usize {
            out.fail(format!("cabal {i}: |P_K| = {} but r = {r}", p.len()));
        }
        for &v in members {
            clique_of[v] = i;
        }
        for &v in p {
            owner[v] = i;
        }
    }
    let mut worst = 0f64;
    for (i, &(members, p, _)) in cabals.iter().enumerate() {
        for &v in p {
            if clique_of[v] != i {
                out.fail(format!("cabal {i}: put-aside cluster {} is not a member", inst.cluster_id(v)));
            }
            for &u in inst.neighbors(v) {
                if owner[u] != usize::MAX && owner[u] != i && u > v {
                    out.fail(format!("put-aside edge {}-{} between cabals", inst.cluster_id(v), inst.cluster_id(u)));
                }
            }
        }
        let exposed = members
            .iter()
            .filter(|&&v| inst.neighbors(v).iter().any(|&u| owner[u] != usize::MAX && owner[u] != i))
            .count();
        worst = worst.max(exposed as f64 / members.len().max(1) as f64);
        if exposed as f64 > members.len() as f64 / 100.0 {
            out.fail(format!("cabal {i}: {exposed} members see another put-aside set"));
        }
    }
    out.measure("max_exposed_fraction", worst);
    out
}

/// Swap audit: `after` is proper, agrees with `before` outside `allowed`, and every listed
/// cluster changed only as allowed.
pub fn check_swap(inst: &Instance, before: &PartialColoring, after: &PartialColoring, allowed: &BTreeSet<usize>) -> Verdict {
    let mut out = check_proper(inst, after);
    out.check = "donation-swap".to_string();
    for v in 0..inst.num_clusters() {
        if before.get(v) != after.get(v) && !allowed.contains(&v) {
            out.fail(format!("cluster {} changed color outside the allowed set", inst.cluster_id(v)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{BandwidthPolicy, Engine, MessageKind};
    use crate::netmodel::{generate_planted, GeneratorSpec, PlantedClique};

    fn cliques(k: usize, size: usize) -> Instance {
        let spec = GeneratorSpec {
            preset: "test".into(),
            cliques: vec![PlantedClique { size, anti_edges: 0, anti_regular: 0, external_degree: 0 }; k],
            sparse_nodes: 0,
            sparse_degree: 0.0,
            sparse_cross: 0,
            expansion: 1,
            ell: None,
            params: None,
        };
        generate_planted(1, &spec).unwrap().instance
    }

    fn planted_lists(inst: &Instance) -> Vec<Vec<usize>> {
        // Components of a disjoint union of cliques.
        let mut seen = vec![false; inst.num_clusters()];
        let mut out = Vec::new();
        for v in 0..inst.num_clusters() {
            if !seen[v] {
                let mut c: Vec<usize> = std::iter::once(v).chain(inst.neighbors(v).iter().copied()).collect();
                c.sort_unstable();
                for &u in &c {
                    seen[u] = true;
                }
                out.push(c);
            }
        }
        out
    }

    #[test]
    fn empty_coloring_is_proper() {
        let inst = cliques(1, 5);
        assert!(check_proper(&inst, &PartialColoring::new(5)).pass);
    }

    #[test]
    fn monochromatic_edge_fails() {
        let inst = cliques(1, 5);
        let mut c = PartialColoring::new(5);
        c.set(0, 2, "t");
        c.set(1, 2, "t");
        let v = check_proper(&inst, &c);
        assert!(!v.pass);
        assert_eq!(v.witnesses.len(), 1);
    }

    #[test]
    fn planted_cliques_pass_acd() {
        let inst = cliques(3, 40);
        let lab = AcdLabeling::from_cliques(&inst, &planted_lists(&inst));
        assert!(check_acd(&inst, &lab, 0.05, 1.0).pass);
    }

    #[test]
    fn oversized_clique_fails_part_2i() {
        let inst = cliques(2, 12);
        let lab = AcdLabeling::from_cliques(&inst, &[(0..24).collect()]);
        let v = check_acd(&inst, &lab, 0.05, 1.0);
        assert!(!v.pass);
        assert!(v.witnesses.iter().any(|w| w.starts_with("part 2(i)")));
    }

    #[test]
    fn sparse_node_inside_clique_fails_part_1() {
        let inst = cliques(1, 12);
        let mut lists = planted_lists(&inst);
        let dropped = lists[0].pop().unwrap();
        let lab = AcdLabeling::from_cliques(&inst, &lists);
        assert_eq!(sparsity(&inst, dropped), 0.0);
        let v = check_acd(&inst, &lab, 0.05, 1.0);
        assert!(v.witnesses.iter().any(|w| w.starts_with("part 1")));
    }

    #[test]
    fn reuse_slack_counts_shared_colors() {
        // Path 0-1-2: the two ends may share a color.
        let ids: Vec<crate::netmodel::MachineId> = (0..3).map(crate::netmodel::MachineId).collect();
        let comm = crate::netmodel::CommGraph::new(ids.clone(), &[(ids[0], ids[1]), (ids[1], ids[2])]).unwrap();
        let part = crate::netmodel::ClusterPartition::from_groups(&ids.iter().map(|&m| vec![m]).collect::<Vec<_>>()).unwrap();
        let inst = crate::netmodel::build_instance(comm, part, crate::netmodel::ParamSet::desk()).unwrap();
        let mut c = PartialColoring::new(3);
        c.set(0, 1, "t");
        c.set(2, 1, "t");
        let q = exact_quantities(&inst, &AcdLabeling::all_sparse(3), &c);
        assert_eq!(q.reuse_slack[1], 1);
        assert_eq!(q.slack[1], 2);
    }

    #[test]
    fn clique_member_has_no_anti_degree() {
        let inst = cliques(1, 6);
        let lab = AcdLabeling::from_cliques(&inst, &planted_lists(&inst));
        let mut c = PartialColoring::new(6);
        for v in 0..6 {
            c.set(v, v as Color + 1, "t");
        }
        let q = exact_quantities(&inst, &lab, &c);
        assert!(q.anti.iter().all(|&a| a == 0));
        assert!(q.reuse_slack.iter().all(|&r| r == 0));
    }

    #[test]
    fn z_on_uncolored_clique() {
        let inst = cliques(1, 6);
        let lab = AcdLabeling::from_cliques(&inst, &planted_lists(&inst));
        let c = PartialColoring::new(6);
        let q = exact_quantities(&inst, &lab, &c);
        // Δ+1 = 6, r = 2: (6 − 2) + 0 + 0 + x where x = 6 − 6 + 0.
        assert_eq!(z_exact(&inst, &lab, &q, &c, 0, 2, 0.5), 4.0);
    }

    #[test]
    fn bandwidth_audit() {
        let inst = cliques(2, 4);
        let eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, true);
        let budget = eng.budget();
        assert!(audit_bandwidth(eng.ledger(), budget).pass);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, true);
        eng.exchange("burst", MessageKind::Unit, [0usize], |_, _| Some(2 * budget)).unwrap();
        let v = audit_bandwidth(eng.ledger(), budget);
        assert!(!v.pass && !v.witnesses.is_empty());
    }
}
