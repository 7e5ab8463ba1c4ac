//! Almost-clique decomposition, external-degree estimates and cabal classification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, MachineTree, MessageKind};
use crate::error::{Error, Result};
use crate::fingerprint::{approx_count, encoded_len, estimate_from_maxima, SketchTable};
use crate::netmodel::{ClusterId, Instance, ParamSet};
use crate::verify;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Sparse,
    /// Member of the almost-clique with this index.
    Dense(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlmostClique {
    /// Cluster indices, ascending.
    pub members: Vec<usize>,
    /// Cluster that sourced the BFS (smallest identifier).
    pub leader: usize,
    /// Depth-2 BFS tree spanning the machines of every member.
    pub tree: MachineTree,
    pub e_tilde: f64,
    pub cabal: bool,
    pub reserved: u32,
    /// Colorful-matching size, once known.
    pub matching: Option<u64>,
}

impl AlmostClique {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcdLabeling {
    pub roles: Vec<Role>,
    pub cliques: Vec<AlmostClique>,
    /// ẽ_v per cluster (0 for sparse clusters).
    pub e_tilde: Vec<f64>,
    /// x_v = |K| − (Δ+1) + ẽ_v per dense cluster.
    pub x: Vec<f64>,
    /// Inlier flag before the colorful matching is known.
    pub inlier_provisional: Vec<bool>,
    /// Final inlier flag.
    pub inlier: Vec<Option<bool>>,
    /// Attempts used by `compute_acd` (1 when the first attempt passed the checker).
    pub attempts: u32,
    /// The accepted labeling came from the central repair step.
    pub repaired: bool,
}

impl AcdLabeling {
    pub fn all_sparse(n: usize) -> Self {
        Self {
            roles: vec![Role::Sparse; n],
            cliques: Vec::new(),
            e_tilde: vec![0.0; n],
            x: vec![0.0; n],
            inlier_provisional: vec![false; n],
            inlier: vec![None; n],
            attempts: 0,
            repaired: false,
        }
    }

    /// Builds a labeling from explicit clique member lists; every other cluster is sparse.
    pub fn from_cliques(inst: &Instance, cliques: &[Vec<usize>]) -> Self {
        let mut out = Self::all_sparse(inst.num_clusters());
        let mut sets: Vec<Vec<usize>> = cliques.iter().filter(|c| !c.is_empty()).cloned().collect();
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        sets.sort();
        for (k, members) in sets.into_iter().enumerate() {
            for &v in &members {
                out.roles[v] = Role::Dense(k);
            }
            out.cliques.push(AlmostClique {
                leader: members[0],
                tree: MachineTree::singleton(inst.leader(members[0])),
                members,
                e_tilde: 0.0,
                cabal: false,
                reserved: 0,
                matching: None,
            });
        }
        out
    }

    pub fn clique_of(&self, v: usize) -> Option<usize> {
        match self.roles[v] {
            Role::Dense(k) => Some(k),
            Role::Sparse => None,
        }
    }

    pub fn is_sparse(&self, v: usize) -> bool {
        self.roles[v] == Role::Sparse
    }

    pub fn sparse(&self) -> Vec<usize> {
        (0..self.roles.len()).filter(|&v| self.is_sparse(v)).collect()
    }

    pub fn is_cabal_member(&self, v: usize) -> bool {
        self.clique_of(v).is_some_and(|k| self.cliques[k].cabal)
    }

    pub fn is_inlier(&self, v: usize) -> bool {
        self.inlier[v].unwrap_or(self.inlier_provisional[v])
    }

    pub fn to_export(&self, inst: &Instance) -> LabelingExport {
        let clusters = (0..self.roles.len())
            .map(|v| {
                let k = self.clique_of(v);
                let label = ClusterLabel {
                    role: if k.is_some() { "dense" } else { "sparse" }.to_string(),
                    clique: k.map(|k| inst.cluster_id(self.cliques[k].leader)),
                    e_tilde: k.map(|_| self.e_tilde[v]),
                    x: k.map(|_| self.x[v]),
                    inlier: k.map(|_| self.is_inlier(v)),
                };
                (inst.cluster_id(v), label)
            })
            .collect();
        let cliques = self
            .cliques
            .iter()
            .map(|c| CliqueLabel {
                id: inst.cluster_id(c.leader),
                size: c.size(),
                e_k_tilde: c.e_tilde,
                cabal: c.cabal,
                r_k: c.reserved,
                m_k: c.matching,
                members: c.members.iter().map(|&v| inst.cluster_id(v)).collect(),
            })
            .collect();
        LabelingExport { clusters, cliques }
    }

    /// Rebuilds a labeling from its export. Trees are not part of the export; each clique gets
    /// a singleton tree at its leader.
    pub fn from_export(inst: &Instance, export: &LabelingExport) -> Result<Self> {
        let index = |id: ClusterId| {
            inst.cluster_index(id).ok_or_else(|| Error::Validation(format!("labeling names unknown cluster {id}")))
        };
        let mut lists = Vec::new();
        for c in &export.cliques {
            lists.push(c.members.iter().map(|&id| index(id)).collect::<Result<Vec<_>>>()?);
        }
        let mut out = Self::from_cliques(inst, &lists);
        for c in &export.cliques {
            let k = out.clique_of(index(c.id)?).ok_or_else(|| Error::Validation(format!("clique {} lists no leader", c.id)))?;
            let q = &mut out.cliques[k];
            q.e_tilde = c.e_k_tilde;
            q.cabal = c.cabal;
            q.reserved = c.r_k;
            q.matching = c.m_k;
        }
        for (&id, label) in &export.clusters {
            let v = index(id)?;
            out.e_tilde[v] = label.e_tilde.unwrap_or(0.0);
            out.x[v] = label.x.unwrap_or(0.0);
            out.inlier_provisional[v] = label.inlier.unwrap_or(false);
            out.inlier[v] = label.inlier;
        }
        Ok(out)
    }
}

/// `labeling.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelingExport {
    pub clusters: BTreeMap<ClusterId, ClusterLabel>,
    pub cliques: Vec<CliqueLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabel {
    pub role: String,
    #[serde(rename = "K")]
    pub clique: Option<ClusterId>,
    pub e_tilde: Option<f64>,
    pub x: Option<f64>,
    pub inlier: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CliqueLabel {
    pub id: ClusterId,
    pub size: usize,
    #[serde(rename = "e_K_tilde")]
    pub e_k_tilde: f64,
    pub cabal: bool,
    #[serde(rename = "r_K")]
    pub r_k: u32,
    #[serde(rename = "M_K")]
    pub m_k: Option<u64>,
    pub members: Vec<ClusterId>,
}

/// Per-link answers of the buddy predicate, aligned with `Instance::neighbors`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuddyVerdicts {
    verdicts: Vec<Vec<bool>>,
    /// Clusters answered No on every link by the degree pre-filter.
    pub filtered: Vec<bool>,
}

impl BuddyVerdicts {
    /// Whether the `j`-th neighbor of `v` is a buddy.
    pub fn at(&self, v: usize, j: usize) -> bool {
        self.verdicts[v][j]
    }

    pub fn is_buddy(&self, inst: &Instance, u: usize, v: usize) -> bool {
        inst.neighbors(u).binary_search(&v).is_ok_and(|j| self.verdicts[u][j])
    }

    pub fn buddy_degree(&self, v: usize) -> usize {
        self.verdicts[v].iter().filter(|&&b| b).count()
    }
}

/// Precision used by the degree estimates inside the predicate: ξ′ = 2ξ/6.
pub fn inner_precision(xi: f64) -> f64 {
    xi / 3.0
}

/// ξ-buddy predicate on every H-edge.
///
/// Clusters whose estimated degree is below `(1 − 1.5ξ′)Δ` answer No on all their links. The
/// others exchange neighborhood fingerprints across every link; each link merges the two
/// vectors into a sketch of `N(u) ∪ N(v)` and answers Yes when the estimate is at most
/// `(1 + 1.5ξ′)Δ`.
pub fn buddy_predicate(eng: &mut Engine<'_>, xi: f64, iteration: u64) -> Result<BuddyVerdicts> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::Domain(format!("buddy precision must lie in (0, 1), got {xi}")));
    }
    let inst = eng.instance();
    let n = inst.num_clusters();
    let delta = inst.delta() as f64;
    let inner = inner_precision(xi);
    let all: Vec<usize> = (0..n).collect();
    let everyone = vec![true; n];
    let degree = approx_count(eng, "acd-degree", 0.5 * inner, &everyone, &all, |_, _| true, iteration)?;
    let filtered: Vec<bool> = degree.iter().map(|&d| d < (1.0 - 1.5 * inner) * delta).collect();

    let t = inst.params().sketch_length(0.5 * inner, inst.n());
    let table = SketchTable::sample(eng, "acd-buddy", t, &everyone, iteration);
    let own: Vec<(usize, u64)> = all.iter().map(|&v| (v, encoded_len(&table.vector(v)) as u64)).collect();
    eng.broadcast("acd-buddy", MessageKind::Bulk, &own)?;
    eng.exchange("acd-buddy", MessageKind::Bulk, all.iter().copied(), |src, _| Some(own[src].1))?;
    let hood: Vec<_> = all.iter().map(|&v| table.neighborhood(eng, v, |_| true)).collect();
    let hood_len: Vec<u64> = hood.iter().map(|y| encoded_len(y) as u64).collect();
    let up: Vec<(usize, u64)> = all.iter().map(|&v| (v, hood_len[v])).collect();
    eng.convergecast("acd-buddy", MessageKind::Bulk, &up)?;
    eng.broadcast("acd-buddy", MessageKind::Bulk, &up)?;
    let active: Vec<usize> = all.iter().copied().filter(|&v| !filtered[v]).collect();
    eng.exchange("acd-buddy", MessageKind::Bulk, active.iter().copied(), |src, dst| {
        (!filtered[dst]).then_some(hood_len[src])
    })?;

    let threshold = (1.0 + 1.5 * inner) * delta;
    let mut verdicts: Vec<Vec<bool>> = all.iter().map(|&v| vec![false; inst.degree(v)]).collect();
    for u in 0..n {
        if filtered[u] {
            continue;
        }
        for (j, &v) in inst.neighbors(u).iter().enumerate() {
            if filtered[v] || v < u {
                continue;
            }
            let f = estimate_from_maxima(&hood[u].merged(&hood[v]));
            if f <= threshold {
                verdicts[u][j] = true;
                let i = inst.neighbors(v).binary_search(&u).expect("symmetric adjacency");
                verdicts[v][i] = true;
            }
        }
    }
    Ok(BuddyVerdicts { verdicts, filtered })
}

/// One decomposition attempt: popular clusters (estimated buddy degree at least
/// `(1 − 1.5ξ)Δ`) grouped by connected components of buddy edges.
fn attempt(eng: &mut Engine<'_>, iteration: u64) -> Result<AcdLabeling> {
    let inst = eng.instance();
    let params = inst.params();
    let n = inst.num_clusters();
    let xi = params.buddy_xi;
    let buddies = buddy_predicate(eng, xi, iteration)?;
    let all: Vec<usize> = (0..n).collect();
    let everyone = vec![true; n];
    let bd = approx_count(eng, "acd-popular", 0.5 * xi, &everyone, &all, |v, u| buddies.is_buddy(inst, v, u), iteration)?;
    let delta = inst.delta() as f64;
    let popular: Vec<bool> = bd.iter().map(|&d| d >= (1.0 - 1.5 * xi) * delta && delta > 0.0).collect();

    // Components of the buddy graph among popular clusters.
    let mut comp = vec![usize::MAX; n];
    let mut lists: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if !popular[s] || comp[s] != usize::MAX {
            continue;
        }
        let id = lists.len();
        let mut stack = vec![s];
        comp[s] = id;
        let mut members = Vec::new();
        while let Some(u) = stack.pop() {
            members.push(u);
            for (j, &w) in inst.neighbors(u).iter().enumerate() {
                if popular[w] && comp[w] == usize::MAX && buddies.at(u, j) {
                    comp[w] = id;
                    stack.push(w);
                }
            }
        }
        members.sort_unstable();
        lists.push(members);
    }
    lists.retain(|c| c.len() > 1);
    // Leader election: two flooding rounds of the smallest identifier over buddy edges.
    let dense: Vec<usize> = lists.iter().flatten().copied().collect();
    let word = eng.word();
    for _ in 0..2 {
        eng.h_round("acd-leader", MessageKind::Unit, &dense, word, word)?;
    }
    let mut labeling = AcdLabeling::from_cliques(inst, &lists);
    build_trees(eng, &mut labeling)?;
    Ok(labeling)
}

/// Depth-2 BFS from each clique leader; clusters the BFS does not reach become sparse.
fn build_trees(eng: &mut Engine<'_>, labeling: &mut AcdLabeling) -> Result<()> {
    let subgraphs: Vec<Vec<usize>> = labeling.cliques.iter().map(|c| c.members.clone()).collect();
    let sources: Vec<usize> = labeling.cliques.iter().map(|c| c.leader).collect();
    let forest = eng.parallel_bfs(&subgraphs, &sources, 2)?;
    let mut lists = Vec::new();
    let mut trees = Vec::new();
    for tree in forest.trees {
        let mut reached = tree.clusters.clone();
        reached.sort_unstable();
        lists.push(reached);
        trees.push(tree.machines);
    }
    let inst = eng.instance();
    let mut rebuilt = AcdLabeling::from_cliques(inst, &lists);
    // `from_cliques` keeps the list order because every list starts at its (smallest) leader
    // and lists are disjoint; pair each rebuilt clique with its tree by leader.
    let by_leader: BTreeMap<usize, MachineTree> = lists.iter().map(|l| l[0]).zip(trees).collect();
    for c in &mut rebuilt.cliques {
        c.tree = by_leader[&c.leader].clone();
    }
    rebuilt.attempts = labeling.attempts;
    rebuilt.repaired = labeling.repaired;
    *labeling = rebuilt;
    Ok(())
}

/// Decomposition with validation: each attempt is checked exactly and retried with fresh
/// randomness. When every attempt fails, the last one is repaired centrally (violating
/// members move to the sparse side) and flagged.
pub fn compute_acd(eng: &mut Engine<'_>) -> Result<AcdLabeling> {
    let inst = eng.instance();
    let params = inst.params().clone();
    if inst.num_clusters() == 0 {
        return Ok(AcdLabeling::all_sparse(0));
    }
    let mut last = None;
    for a in 0..=params.retries {
        let mut labeling = attempt(eng, u64::from(a))?;
        labeling.attempts = a + 1;
        if verify::check_acd(inst, &labeling, params.epsilon, params.c_sparse).pass {
            return Ok(labeling);
        }
        last = Some(labeling);
    }
    let mut labeling = last.expect("at least one attempt");
    repair(inst, &mut labeling, params.epsilon);
    labeling.repaired = true;
    build_trees(eng, &mut labeling)?;
    Ok(labeling)
}

/// Central repair: shrink every clique until part 2 holds, then re-admit sparse clusters that
/// fit an existing clique without breaking it.
fn repair(inst: &Instance, labeling: &mut AcdLabeling, eps: f64) {
    let delta = inst.delta() as f64;
    let mut lists: Vec<Vec<usize>> = labeling.cliques.iter().map(|c| c.members.clone()).collect();
    let inside = |v: usize, set: &[usize]| inst.neighbors(v).iter().filter(|u| set.binary_search(u).is_ok()).count();
    for set in &mut lists {
        loop {
            let worst = set.iter().copied().min_by_key(|&v| (inside(v, set), std::cmp::Reverse(v)));
            let Some(w) = worst else { break };
            let ok_size = set.len() as f64 <= (1.0 + eps) * delta;
            if ok_size && inside(w, set) as f64 >= (1.0 - eps) * set.len() as f64 {
                break;
            }
            set.retain(|&v| v != w);
        }
    }
    lists.retain(|s| s.len() > 1);
    let zeta_min = inst.params().c_sparse * eps * eps * delta;
    let sparse_zeta = verify::sparsity_all(inst);
    let mut assigned = vec![false; inst.num_clusters()];
    for s in &lists {
        for &v in s {
            assigned[v] = true;
        }
    }
    for v in 0..inst.num_clusters() {
        if assigned[v] || sparse_zeta[v] >= zeta_min {
            continue;
        }
        for set in &mut lists {
            let mut grown = set.clone();
            let pos = grown.binary_search(&v).unwrap_err();
            grown.insert(pos, v);
            let fits = grown.len() as f64 <= (1.0 + eps) * delta
                && grown.iter().all(|&u| inside(u, &grown) as f64 >= (1.0 - eps) * grown.len() as f64);
            if fits {
                *set = grown;
                assigned[v] = true;
                break;
            }
        }
    }
    let attempts = labeling.attempts;
    *labeling = AcdLabeling::from_cliques(inst, &lists);
    labeling.attempts = attempts;
}

/// ẽ_v by fingerprint counting of neighbors outside `K_v`, exact `|K|` and the average ẽ_K by
/// aggregation on each clique tree, and x_v.
pub fn degree_estimates(eng: &mut Engine<'_>, labeling: &mut AcdLabeling, delta_precision: f64, iteration: u64) -> Result<()> {
    let inst = eng.instance();
    let n = inst.num_clusters();
    let dense: Vec<usize> = (0..n).filter(|&v| !labeling.is_sparse(v)).collect();
    if dense.is_empty() {
        return Ok(());
    }
    let roles = labeling.roles.clone();
    let everyone = vec![true; n];
    let est = approx_count(eng, "acd-external", delta_precision, &everyone, &dense, |v, u| roles[u] != roles[v], iteration)?;
    for (&v, &e) in dense.iter().zip(&est) {
        labeling.e_tilde[v] = e;
    }
    let trees: Vec<&MachineTree> = labeling.cliques.iter().map(|c| &c.tree).collect();
    let word = eng.word();
    // Up: member count and the sum of estimates; down: both totals.
    eng.forest_cast("acd-aggregate", MessageKind::Unit, &trees, |_| 3 * word, true)?;
    eng.forest_cast("acd-aggregate", MessageKind::Unit, &trees, |_| 3 * word, false)?;
    let q = (inst.delta() + 1) as f64;
    for c in &mut labeling.cliques {
        let size = c.members.len() as f64;
        c.e_tilde = c.members.iter().map(|&v| labeling.e_tilde[v]).sum::<f64>() / size;
        for &v in &c.members {
            labeling.x[v] = size - q + labeling.e_tilde[v];
        }
    }
    Ok(())
}

/// Cabal flags, reserved prefixes and inlier flags (provisional for non-cabals, final for
/// cabals).
pub fn classify(labeling: &mut AcdLabeling, params: &ParamSet) {
    for k in 0..labeling.cliques.len() {
        let c = &mut labeling.cliques[k];
        c.cabal = c.e_tilde < params.ell;
        c.reserved = params.reserved(c.e_tilde);
        let (cabal, ek) = (c.cabal, c.e_tilde);
        for &v in &labeling.cliques[k].members {
            let ok = labeling.e_tilde[v] <= 20.0 * ek;
            labeling.inlier_provisional[v] = ok;
            labeling.inlier[v] = cabal.then_some(ok);
        }
    }
}

/// Final non-cabal inlier flags once `M_K` is known: `ẽ_v ≤ 20ẽ_K` and
/// `x_v ≤ M_K/2 + (γ/8)ẽ_K`.
pub fn finalize_inliers(labeling: &mut AcdLabeling, k: usize, matching: u64, params: &ParamSet) {
    let c = &mut labeling.cliques[k];
    c.matching = Some(matching);
    if c.cabal {
        return;
    }
    let ek = c.e_tilde;
    let bound = matching as f64 / 2.0 + params.gamma_sg / 8.0 * ek;
    for &v in &labeling.cliques[k].members {
        labeling.inlier[v] = Some(labeling.e_tilde[v] <= 20.0 * ek && labeling.x[v] <= bound);
    }
}
