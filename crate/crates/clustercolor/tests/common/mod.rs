#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use clustercolor::netmodel::{
    build_instance, generate_planted, ClusterPartition, CommGraph, GeneratorSpec, Instance, MachineId, ParamSet, PlantedClique,
};
use clustercolor::engine::MachineTree;
use clustercolor::rng::CounterRng;

/// Singleton clusters over `n` machines joined by `edges`.
pub fn from_edges(n: usize, edges: &[(usize, usize)], params: ParamSet) -> Instance {
    let links: Vec<(MachineId, MachineId)> = edges.iter().map(|&(a, b)| (MachineId(a as u64), MachineId(b as u64))).collect();
    let comm = CommGraph::new((0..n as u64).map(MachineId).collect(), &links).unwrap();
    let groups: Vec<Vec<MachineId>> = (0..n as u64).map(|m| vec![MachineId(m)]).collect();
    build_instance(comm, ClusterPartition::from_groups(&groups).unwrap(), params).unwrap()
}

/// Disjoint complete cliques of the given sizes plus `cross` random edges between different
/// cliques. Returns the instance and the member lists.
pub fn cliques_with_cross(sizes: &[usize], cross: usize, seed: u64, params: ParamSet) -> (Instance, Vec<Vec<usize>>) {
    let mut edges = BTreeSet::new();
    let mut groups = Vec::new();
    let mut base = 0;
    for &s in sizes {
        for a in 0..s {
            for b in a + 1..s {
                edges.insert((base + a, base + b));
            }
        }
        groups.push((base..base + s).collect::<Vec<_>>());
        base += s;
    }
    let mut rng = CounterRng::for_stage(seed, "cross-edges", 0, 0);
    let mut added = 0;
    while added < cross && groups.len() > 1 {
        let g1 = rng.below(groups.len() as u64) as usize;
        let g2 = rng.below(groups.len() as u64) as usize;
        if g1 == g2 {
            continue;
        }
        let u = groups[g1][rng.below(groups[g1].len() as u64) as usize];
        let v = groups[g2][rng.below(groups[g2].len() as u64) as usize];
        if edges.insert((u.min(v), u.max(v))) {
            added += 1;
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    (from_edges(base, &edges, params), groups)
}

pub fn clique(size: usize, anti_edges: usize, anti_regular: usize, external_degree: usize) -> PlantedClique {
    PlantedClique { size, anti_edges, anti_regular, external_degree }
}

pub fn spec_of(cliques: Vec<PlantedClique>) -> GeneratorSpec {
    GeneratorSpec {
        preset: "custom".into(),
        cliques,
        sparse_nodes: 0,
        sparse_degree: 0.0,
        sparse_cross: 0,
        expansion: 1,
        ell: None,
        params: None,
    }
}

pub fn single_clique(seed: u64, size: usize, anti_edges: usize, anti_regular: usize) -> clustercolor::netmodel::LoadedInstance {
    generate_planted(seed, &spec_of(vec![clique(size, anti_edges, anti_regular, 0)])).unwrap()
}

/// Desk parameters under which a complete cabal has fewer reserved colors than `ℓ_s`, so
/// its put-aside sets are colored through donations.
pub fn donor_params() -> ParamSet {
    let mut p = ParamSet::desk();
    p.reserve_multiplier = 1.0 / 3.0;
    p.block_size = 16;
    p
}

/// Hop distances from `source` inside the subgraph induced by `allowed`.
pub fn bfs_distances(inst: &Instance, allowed: &[usize], source: usize) -> Vec<Option<u32>> {
    let mut inside = vec![false; inst.num_clusters()];
    for &v in allowed {
        inside[v] = true;
    }
    let mut dist = vec![None; inst.num_clusters()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap();
        for &w in inst.neighbors(u) {
            if inside[w] && dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

fn walk(children: &BTreeMap<usize, BTreeSet<usize>>, u: usize, out: &mut Vec<usize>) {
    out.push(u);
    for &c in children.get(&u).into_iter().flatten() {
        walk(children, c, out);
    }
}

/// Exclusive prefix sums of `x` along a recursive pre-order walk, children by ascending id.
pub fn oracle_prefix(tree: &MachineTree, x: &BTreeMap<usize, i64>) -> BTreeMap<usize, i64> {
    let mut children: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (&c, &p) in &tree.parent {
        children.entry(p).or_default().insert(c);
    }
    let mut order = Vec::new();
    walk(&children, tree.root, &mut order);
    let mut out = BTreeMap::new();
    let mut acc = 0;
    for m in order {
        if let Some(&xm) = x.get(&m) {
            out.insert(m, acc);
            acc += xm;
        }
    }
    out
}
