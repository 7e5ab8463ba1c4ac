//! Seeded planted-structure instance factory.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{build_instance, ClusterId, ClusterPartition, CommGraph, GroundTruth, LoadedInstance, MachineId, ParamSet};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedClique {
    pub size: usize,
    /// Number of random non-edges removed inside the clique.
    pub anti_edges: usize,
    /// Every member additionally misses exactly this many clique neighbors (circulant pattern
    /// over a random ordering). Odd values need an even clique size.
    #[serde(default)]
    pub anti_regular: usize,
    /// Target number of neighbors outside the clique, per member.
    pub external_degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub preset: String,
    pub cliques: Vec<PlantedClique>,
    pub sparse_nodes: usize,
    /// Expected degree among sparse nodes.
    pub sparse_degree: f64,
    /// Stubs per sparse node that attach to other groups (cliques or sparse nodes).
    pub sparse_cross: usize,
    /// Machines per cluster.
    pub expansion: usize,
    /// Cabal threshold written into the instance parameters, when set.
    pub ell: Option<f64>,
    #[serde(default)]
    pub params: Option<ParamSet>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PlantedCabals,
    PlantedNonCabals,
    SparseEr,
    Mixed,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "planted-cabals" => Self::PlantedCabals,
            "planted-non-cabals" => Self::PlantedNonCabals,
            "sparse-er" => Self::SparseEr,
            "mixed" => Self::Mixed,
            other => return Err(Error::InvalidParams(format!("unknown preset `{other}`"))),
        })
    }
}

impl Preset {
    pub const ALL: [Preset; 4] = [Self::PlantedCabals, Self::PlantedNonCabals, Self::SparseEr, Self::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Self::PlantedCabals => "planted-cabals",
            Self::PlantedNonCabals => "planted-non-cabals",
            Self::SparseEr => "sparse-er",
            Self::Mixed => "mixed",
        }
    }

    /// Desk-scale spec with `groups` planted cliques of `size` clusters (or the equivalent
    /// node count for the sparse preset) and `expansion` machines per cluster.
    pub fn spec(self, groups: usize, size: usize, expansion: usize) -> GeneratorSpec {
        let anti_regular = usize::from(size.is_multiple_of(2));
        let clique = |external_degree| PlantedClique { size, anti_edges: 0, anti_regular, external_degree };
        let (cliques, sparse_nodes, sparse_degree, sparse_cross) = match self {
            Self::PlantedCabals => (vec![clique(2); groups], 0, 0.0, 0),
            Self::PlantedNonCabals => (vec![clique(10); groups], 0, 0.0, 0),
            Self::SparseEr => (Vec::new(), groups * size, size as f64 * 0.5, 0),
            Self::Mixed => {
                let mut cs = vec![clique(2); groups.div_ceil(2)];
                cs.extend(vec![clique(10); groups / 2]);
                (cs, size, size as f64 * 0.4, 4)
            }
        };
        GeneratorSpec {
            preset: self.name().to_string(),
            cliques,
            sparse_nodes,
            sparse_degree,
            sparse_cross,
            expansion,
            ell: None,
            params: None,
        }
    }
}

struct HGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl HGraph {
    fn add(&mut self, u: usize, v: usize) -> bool {
        u != v && self.edges.insert((u.min(v), u.max(v)))
    }
}

/// Builds the planted instance and its ground truth; deterministic per `(seed, spec)`.
pub fn generate_planted(seed: u64, spec: &GeneratorSpec) -> Result<LoadedInstance> {
    if spec.expansion == 0 {
        return Err(Error::InfeasibleSpec("expansion must be at least 1".into()));
    }
    let mut rng = CounterRng::for_stage(seed, "generate", 0, 0);
    let mut offsets = Vec::new();
    let mut n_h = 0usize;
    for (i, c) in spec.cliques.iter().enumerate() {
        let pairs = c.size * c.size.saturating_sub(1) / 2;
        if c.size < 2 {
            return Err(Error::InfeasibleSpec(format!("clique {i} needs at least 2 members")));
        }
        if c.anti_regular % 2 == 1 && c.size % 2 == 1 {
            return Err(Error::InfeasibleSpec(format!("clique {i}: odd anti-degree needs an even size")));
        }
        let missing = c.anti_edges + c.anti_regular * c.size / 2;
        if c.anti_regular >= c.size / 2 || missing > pairs / 2 {
            return Err(Error::InfeasibleSpec(format!(
                "clique {i}: {missing} anti-edges exceed half of its {pairs} pairs"
            )));
        }
        offsets.push(n_h);
        n_h += c.size;
    }
    let sparse_start = n_h;
    n_h += spec.sparse_nodes;
    if spec.sparse_degree < 0.0 || (spec.sparse_nodes > 0 && spec.sparse_degree > (spec.sparse_nodes - 1) as f64) {
        return Err(Error::InfeasibleSpec("sparse degree exceeds the number of sparse nodes".into()));
    }

    let mut h = HGraph { n: n_h, edges: BTreeSet::new() };
    let mut anti = Vec::new();
    for (i, c) in spec.cliques.iter().enumerate() {
        let base = offsets[i];
        let mut removed = BTreeSet::new();
        let mut order: Vec<usize> = (0..c.size).collect();
        order.shuffle(&mut rng);
        let pair = |x: usize, y: usize| (order[x].min(order[y]), order[x].max(order[y]));
        for off in 1..=c.anti_regular / 2 {
            for x in 0..c.size {
                removed.insert(pair(x, (x + off) % c.size));
            }
        }
        if c.anti_regular % 2 == 1 {
            for x in 0..c.size / 2 {
                removed.insert(pair(x, x + c.size / 2));
            }
        }
        let regular = removed.len();
        while removed.len() < regular + c.anti_edges {
            let a = rng.below(c.size as u64) as usize;
            let b = rng.below(c.size as u64) as usize;
            if a != b {
                removed.insert((a.min(b), a.max(b)));
            }
        }
        for a in 0..c.size {
            for b in a + 1..c.size {
                if !removed.contains(&(a, b)) {
                    h.add(base + a, base + b);
                }
            }
        }
        anti.extend(removed.into_iter().map(|(a, b)| (base + a, base + b)));
    }

    // Sparse noise: Erdős–Rényi among sparse nodes.
    if spec.sparse_nodes > 1 && spec.sparse_degree > 0.0 {
        let p = spec.sparse_degree / (spec.sparse_nodes - 1) as f64;
        for a in 0..spec.sparse_nodes {
            for b in a + 1..spec.sparse_nodes {
                if rng.bernoulli(p) {
                    h.add(sparse_start + a, sparse_start + b);
                }
            }
        }
    }

    // External edges: pair stubs from different groups.
    let group_of = |v: usize| -> usize {
        match offsets.iter().rposition(|&o| o <= v) {
            Some(g) if v < sparse_start => g,
            _ => spec.cliques.len() + (v - sparse_start),
        }
    };
    let mut stubs = Vec::new();
    for (i, c) in spec.cliques.iter().enumerate() {
        for v in offsets[i]..offsets[i] + c.size {
            stubs.extend(std::iter::repeat_n(v, c.external_degree));
        }
    }
    for v in sparse_start..n_h {
        stubs.extend(std::iter::repeat_n(v, spec.sparse_cross));
    }
    if !stubs.is_empty() {
        let groups: BTreeSet<usize> = stubs.iter().map(|&v| group_of(v)).collect();
        if groups.len() < 2 {
            return Err(Error::InfeasibleSpec("external degree requested but only one group exists".into()));
        }
        stubs.shuffle(&mut rng);
        let mut leftover: Vec<usize> = Vec::new();
        for v in stubs {
            let pos = leftover
                .iter()
                .rposition(|&u| group_of(u) != group_of(v) && !h.edges.contains(&(u.min(v), u.max(v))));
            match pos {
                Some(p) => {
                    let u = leftover.swap_remove(p);
                    h.add(u, v);
                }
                None => leftover.push(v),
            }
        }
    }

    // Expansion: each H-node becomes a random tree of `s` machines under shuffled ids.
    let s = spec.expansion;
    let n_machines = n_h * s;
    let mut ids: Vec<u64> = (0..n_machines as u64).collect();
    ids.shuffle(&mut rng);
    let machine = |v: usize, j: usize| MachineId(ids[v * s + j]);
    let mut links = Vec::new();
    for v in 0..n_h {
        for j in 1..s {
            let parent = rng.below(j as u64) as usize;
            links.push((machine(v, parent), machine(v, j)));
        }
    }
    for &(u, v) in &h.edges {
        let (a, b) = (rng.below(s as u64) as usize, rng.below(s as u64) as usize);
        links.push((machine(u, a), machine(v, b)));
        if s > 1 && rng.bernoulli(0.25) {
            let (c, d) = (rng.below(s as u64) as usize, rng.below(s as u64) as usize);
            if (c, d) != (a, b) {
                links.push((machine(u, c), machine(v, d)));
            }
        }
    }
    let groups: Vec<Vec<MachineId>> = (0..n_h).map(|v| (0..s).map(|j| machine(v, j)).collect()).collect();
    let leader = |v: usize| ClusterId(groups[v].iter().min().expect("non-empty").0);

    let mut params = spec.params.clone().unwrap_or_default();
    if let Some(ell) = spec.ell {
        params.ell = ell;
    }
    let comm = CommGraph::new(ids.iter().map(|&i| MachineId(i)).collect(), &links)?;
    let partition = ClusterPartition::from_groups(&groups)?;
    let instance = build_instance(comm, partition, params)?;
    debug_assert_eq!(instance.num_clusters(), h.n);

    let mut truth = GroundTruth {
        preset: spec.preset.clone(),
        seed,
        cliques: spec
            .cliques
            .iter()
            .enumerate()
            .map(|(i, c)| (offsets[i]..offsets[i] + c.size).map(leader).collect())
            .collect(),
        anti_edges: anti.into_iter().map(|(a, b)| (leader(a), leader(b))).collect(),
        sparse: (sparse_start..n_h).map(leader).collect(),
    };
    truth.canonicalize();
    Ok(LoadedInstance { instance, ground_truth: Some(truth) })
}
