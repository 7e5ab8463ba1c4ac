//! Communication graphs, cluster partitions, support trees and instances.

mod generate;
mod io;
mod params;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate_planted, GeneratorSpec, PlantedClique, Preset};
pub use io::{load_instance, save_instance, GroundTruth, LoadedInstance};
pub use params::{sketch_length_formula, ParamSet, Profile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MachineId(pub u64);

/// Identifier of a cluster: the minimum machine id it contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u64);

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Simple undirected graph over machines. Internally machines are dense indices in id order.
#[derive(Clone, Debug)]
pub struct CommGraph {
    machines: Vec<MachineId>,
    links: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl CommGraph {
    pub fn new(mut machines: Vec<MachineId>, links: &[(MachineId, MachineId)]) -> Result<Self> {
        machines.sort_unstable();
        if let Some(w) = machines.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("machine {} declared twice", w[0])));
        }
        let index = |m: MachineId| machines.binary_search(&m).map_err(|_| Error::UnknownMachine(m));
        let mut dense = Vec::with_capacity(links.len());
        for &(a, b) in links {
            if a == b {
                return Err(Error::Validation(format!("self-loop on {a}")));
            }
            let (x, y) = (index(a)?, index(b)?);
            dense.push((x.min(y), x.max(y)));
        }
        dense.sort_unstable();
        if let Some(w) = dense.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!(
                "duplicate link {}-{}",
                machines[w[0].0], machines[w[0].1]
            )));
        }
        let mut adj = vec![Vec::new(); machines.len()];
        for &(a, b) in &dense {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Self { machines, links: dense, adj })
    }

    pub fn n(&self) -> usize {
        self.machines.len()
    }

    pub fn machine_ids(&self) -> &[MachineId] {
        &self.machines
    }

    pub fn id(&self, machine: usize) -> MachineId {
        self.machines[machine]
    }

    pub fn index_of(&self, id: MachineId) -> Option<usize> {
        self.machines.binary_search(&id).ok()
    }

    /// Links as dense index pairs `(a, b)` with `a < b`, sorted.
    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn neighbors(&self, machine: usize) -> &[usize] {
        &self.adj[machine]
    }
}

/// Total map machine → cluster leader.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClusterPartition {
    map: BTreeMap<MachineId, ClusterId>,
}

impl ClusterPartition {
    /// Build from explicit `(machine, leader)` pairs; a machine listed twice is rejected.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (MachineId, ClusterId)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (m, c) in pairs {
            if let Some(prev) = map.insert(m, c) {
                if prev != c {
                    return Err(Error::Validation(format!(
                        "machine {m} assigned to clusters {prev} and {c}"
                    )));
                }
                return Err(Error::Validation(format!("machine {m} listed twice")));
            }
        }
        Ok(Self { map })
    }

    /// Build from groups of machines; each group's leader is its minimum id.
    pub fn from_groups(groups: &[Vec<MachineId>]) -> Result<Self> {
        let mut pairs = Vec::new();
        for g in groups {
            let leader = g.iter().min().ok_or_else(|| Error::Validation("empty cluster".into()))?;
            pairs.extend(g.iter().map(|&m| (m, ClusterId(leader.0))));
        }
        Self::from_pairs(pairs)
    }

    pub fn cluster_of(&self, m: MachineId) -> Option<ClusterId> {
        self.map.get(&m).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MachineId, ClusterId)> + '_ {
        self.map.iter().map(|(&m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// BFS spanning tree of one cluster, rooted at its leader.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportTree {
    pub root: MachineId,
    /// Parent of each member (`None` for the root), in machine-id order.
    pub parent: BTreeMap<MachineId, Option<MachineId>>,
    pub height: u32,
}

/// A machine-level link between two distinct clusters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InterLink {
    pub a: usize,
    pub b: usize,
    pub cluster_a: usize,
    pub cluster_b: usize,
}

/// Communication graph, partition, support trees and the derived cluster graph H.
///
/// Cluster-graph nodes are addressed by dense index `0..num_clusters()` in ascending
/// [`ClusterId`] order, so comparing indices compares identifiers.
#[derive(Clone, Debug)]
pub struct Instance {
    comm: CommGraph,
    partition: ClusterPartition,
    params: ParamSet,
    cluster_ids: Vec<ClusterId>,
    members: Vec<Vec<usize>>,
    leader: Vec<usize>,
    machine_cluster: Vec<usize>,
    tree_parent: Vec<Option<usize>>,
    tree_depth: Vec<u32>,
    tree_children: Vec<Vec<usize>>,
    height: Vec<u32>,
    diameter: Vec<u32>,
    h_offsets: Vec<usize>,
    h_targets: Vec<usize>,
    inter_links: Vec<InterLink>,
    link_offsets: Vec<usize>,
    link_index: Vec<usize>,
    delta: usize,
    num_edges: usize,
}

/// Validates the partition and derives support trees, H and Δ.
pub fn build_instance(comm: CommGraph, partition: ClusterPartition, params: ParamSet) -> Result<Instance> {
    Instance::build(comm, partition, params)
}

impl Instance {
    fn build(comm: CommGraph, partition: ClusterPartition, params: ParamSet) -> Result<Self> {
        params.validate()?;
        let n = comm.n();
        for (m, c) in partition.iter() {
            if comm.index_of(m).is_none() {
                return Err(Error::UnknownMachine(m));
            }
            if comm.index_of(MachineId(c.0)).is_none() {
                return Err(Error::UnknownMachine(MachineId(c.0)));
            }
        }
        if partition.len() != n {
            let missing = comm
                .machine_ids()
                .iter()
                .find(|m| partition.cluster_of(**m).is_none())
                .copied();
            return Err(Error::Validation(format!(
                "partition is not total: machine {} has no cluster",
                missing.map_or_else(|| "?".to_string(), |m| m.to_string())
            )));
        }

        let mut groups: BTreeMap<ClusterId, Vec<usize>> = BTreeMap::new();
        for (m, c) in partition.iter() {
            groups.entry(c).or_default().push(comm.index_of(m).expect("checked above"));
        }
        let cluster_ids: Vec<ClusterId> = groups.keys().copied().collect();
        let mut members: Vec<Vec<usize>> = groups.into_values().collect();
        let mut machine_cluster = vec![usize::MAX; n];
        for (ci, ms) in members.iter_mut().enumerate() {
            ms.sort_unstable();
            for &m in ms.iter() {
                machine_cluster[m] = ci;
            }
            let leader_id = comm.id(ms[0]);
            if leader_id.0 != cluster_ids[ci].0 {
                return Err(Error::Validation(format!(
                    "cluster labeled {} has minimum machine {}",
                    cluster_ids[ci], leader_id
                )));
            }
        }

        let mut tree_parent = vec![None; n];
        let mut tree_depth = vec![0u32; n];
        let mut tree_children = vec![Vec::new(); n];
        let mut height = vec![0u32; members.len()];
        let mut diameter = vec![0u32; members.len()];
        let mut leader = vec![0usize; members.len()];
        let mut seen = vec![false; n];
        for (ci, ms) in members.iter().enumerate() {
            let root = ms[0];
            leader[ci] = root;
            let mut queue = VecDeque::from([root]);
            seen[root] = true;
            let mut reached = 1usize;
            while let Some(u) = queue.pop_front() {
                for &w in comm.neighbors(u) {
                    if machine_cluster[w] == ci && !seen[w] {
                        seen[w] = true;
                        reached += 1;
                        tree_parent[w] = Some(u);
                        tree_depth[w] = tree_depth[u] + 1;
                        tree_children[u].push(w);
                        height[ci] = height[ci].max(tree_depth[w]);
                        queue.push_back(w);
                    }
                }
            }
            if reached != ms.len() {
                return Err(Error::DisconnectedCluster(cluster_ids[ci]));
            }
            diameter[ci] = tree_diameter(ms, &tree_parent, &tree_children);
        }

        let mut inter_links = Vec::new();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for &(a, b) in comm.links() {
            let (ca, cb) = (machine_cluster[a], machine_cluster[b]);
            if ca != cb {
                inter_links.push(InterLink { a, b, cluster_a: ca, cluster_b: cb });
                pairs.push((ca, cb));
                pairs.push((cb, ca));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let k = members.len();
        let mut h_offsets = vec![0usize; k + 1];
        for &(u, _) in &pairs {
            h_offsets[u + 1] += 1;
        }
        for i in 0..k {
            h_offsets[i + 1] += h_offsets[i];
        }
        let h_targets: Vec<usize> = pairs.iter().map(|&(_, v)| v).collect();
        let delta = (0..k).map(|u| h_offsets[u + 1] - h_offsets[u]).max().unwrap_or(0);

        let mut link_offsets = vec![0usize; k + 1];
        for l in &inter_links {
            link_offsets[l.cluster_a + 1] += 1;
            link_offsets[l.cluster_b + 1] += 1;
        }
        for i in 0..k {
            link_offsets[i + 1] += link_offsets[i];
        }
        let mut fill = link_offsets.clone();
        let mut link_index = vec![0usize; link_offsets[k]];
        for (li, l) in inter_links.iter().enumerate() {
            link_index[fill[l.cluster_a]] = li;
            fill[l.cluster_a] += 1;
            link_index[fill[l.cluster_b]] = li;
            fill[l.cluster_b] += 1;
        }

        Ok(Self {
            num_edges: pairs.len() / 2,
            comm,
            partition,
            params,
            cluster_ids,
            members,
            leader,
            machine_cluster,
            tree_parent,
            tree_depth,
            tree_children,
            height,
            diameter,
            h_offsets,
            h_targets,
            inter_links,
            link_offsets,
            link_index,
            delta,
        })
    }

    pub fn comm(&self) -> &CommGraph {
        &self.comm
    }

    pub fn partition(&self) -> &ClusterPartition {
        &self.partition
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Same graph under a different parameter set.
    pub fn with_params(&self, params: ParamSet) -> Result<Self> {
        params.validate()?;
        let mut next = self.clone();
        next.params = params;
        Ok(next)
    }

    /// Number of machines.
    pub fn n(&self) -> usize {
        self.comm.n()
    }

    /// Number of clusters (nodes of H).
    pub fn num_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    /// Maximum degree of H; 0 for an empty instance.
    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn cluster_id(&self, v: usize) -> ClusterId {
        self.cluster_ids[v]
    }

    pub fn cluster_ids(&self) -> &[ClusterId] {
        &self.cluster_ids
    }

    pub fn cluster_index(&self, id: ClusterId) -> Option<usize> {
        self.cluster_ids.binary_search(&id).ok()
    }

    /// Member machines of cluster `v`, ascending.
    pub fn members(&self, v: usize) -> &[usize] {
        &self.members[v]
    }

    pub fn leader(&self, v: usize) -> usize {
        self.leader[v]
    }

    pub fn cluster_of_machine(&self, m: usize) -> usize {
        self.machine_cluster[m]
    }

    /// Neighbors of `v` in H, ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.h_targets[self.h_offsets[v]..self.h_offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.h_offsets[v + 1] - self.h_offsets[v]
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn tree_parent(&self, m: usize) -> Option<usize> {
        self.tree_parent[m]
    }

    pub fn tree_depth(&self, m: usize) -> u32 {
        self.tree_depth[m]
    }

    /// Children in the support tree, ascending machine id.
    pub fn tree_children(&self, m: usize) -> &[usize] {
        &self.tree_children[m]
    }

    pub fn height(&self, v: usize) -> u32 {
        self.height[v]
    }

    /// Maximum support-tree diameter (the dilation).
    pub fn dilation(&self) -> u32 {
        self.diameter.iter().copied().max().unwrap_or(0)
    }

    pub fn support_tree(&self, v: usize) -> SupportTree {
        let parent = self.members[v]
            .iter()
            .map(|&m| (self.comm.id(m), self.tree_parent[m].map(|p| self.comm.id(p))))
            .collect();
        SupportTree { root: self.comm.id(self.leader[v]), parent, height: self.height[v] }
    }

    pub fn inter_links(&self) -> &[InterLink] {
        &self.inter_links
    }

    /// Indices into [`Self::inter_links`] of links touching cluster `v`.
    pub fn links_of(&self, v: usize) -> &[usize] {
        &self.link_index[self.link_offsets[v]..self.link_offsets[v + 1]]
    }
}

fn tree_diameter(members: &[usize], parent: &[Option<usize>], children: &[Vec<usize>]) -> u32 {
    if members.len() <= 1 {
        return 0;
    }
    let farthest = |start: usize| -> (usize, u32) {
        let mut best = (start, 0u32);
        let mut stack = vec![(start, usize::MAX, 0u32)];
        while let Some((u, from, d)) = stack.pop() {
            if d > best.1 {
                best = (u, d);
            }
            let up = parent[u].into_iter();
            for w in up.chain(children[u].iter().copied()) {
                if w != from {
                    stack.push((w, u, d + 1));
                }
            }
        }
        best
    };
    let (far, _) = farthest(members[0]);
    farthest(far).1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[u64]) -> Vec<MachineId> {
        xs.iter().map(|&x| MachineId(x)).collect()
    }

    fn links(xs: &[(u64, u64)]) -> Vec<(MachineId, MachineId)> {
        xs.iter().map(|&(a, b)| (MachineId(a), MachineId(b))).collect()
    }

    #[test]
    fn singleton_instance() {
        let g = CommGraph::new(ids(&[0]), &[]).unwrap();
        let p = ClusterPartition::from_groups(&[ids(&[0])]).unwrap();
        let inst = build_instance(g, p, ParamSet::desk()).unwrap();
        assert_eq!(inst.delta(), 0);
        assert_eq!(inst.num_clusters(), 1);
        assert_eq!(inst.height(0), 0);
    }

    #[test]
    fn path_with_two_clusters() {
        let g = CommGraph::new(ids(&[0, 1, 2]), &links(&[(0, 1), (1, 2)])).unwrap();
        let p = ClusterPartition::from_groups(&[ids(&[0, 1]), ids(&[2])]).unwrap();
        let inst = build_instance(g, p, ParamSet::desk()).unwrap();
        assert_eq!(inst.num_edges(), 1);
        assert_eq!(inst.delta(), 1);
        assert_eq!(inst.height(0), 1);
        assert_eq!(inst.support_tree(0).root, MachineId(0));
    }

    #[test]
    fn disconnected_cluster_rejected() {
        let g = CommGraph::new(ids(&[0, 1, 2]), &links(&[(0, 1), (0, 2)])).unwrap();
        let p = ClusterPartition::from_groups(&[ids(&[0]), ids(&[1, 2])]).unwrap();
        let err = build_instance(g, p, ParamSet::desk()).unwrap_err();
        assert!(matches!(err, Error::DisconnectedCluster(ClusterId(1))));
    }

    #[test]
    fn unknown_machine_rejected() {
        let g = CommGraph::new(ids(&[0, 1]), &links(&[(0, 1)])).unwrap();
        let p = ClusterPartition::from_groups(&[ids(&[0]), ids(&[1]), ids(&[5])]).unwrap();
        assert!(matches!(build_instance(g, p, ParamSet::desk()), Err(Error::UnknownMachine(MachineId(5)))));
    }

    #[test]
    fn duplicate_membership_rejected() {
        let r = ClusterPartition::from_pairs([(MachineId(1), ClusterId(0)), (MachineId(1), ClusterId(1))]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn empty_instance_reports_zero_delta() {
        let g = CommGraph::new(vec![], &[]).unwrap();
        let inst = build_instance(g, ClusterPartition::default(), ParamSet::desk()).unwrap();
        assert_eq!(inst.n(), 0);
        assert_eq!(inst.delta(), 0);
    }

    #[test]
    fn parallel_links_give_one_h_edge() {
        let g = CommGraph::new(ids(&[0, 1, 2, 3]), &links(&[(0, 1), (0, 2), (1, 3), (2, 3)])).unwrap();
        let p = ClusterPartition::from_groups(&[ids(&[0, 1]), ids(&[2, 3])]).unwrap();
        let inst = build_instance(g, p, ParamSet::desk()).unwrap();
        assert_eq!(inst.num_edges(), 1);
        assert_eq!(inst.inter_links().len(), 2);
        assert_eq!(inst.links_of(0).len(), 2);
        assert_eq!(inst.dilation(), 1);
    }
}
