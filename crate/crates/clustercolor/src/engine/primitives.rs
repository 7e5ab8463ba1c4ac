use std::collections::{BTreeMap, VecDeque};

use super::{Engine, Hop, MessageKind};
use crate::error::{Error, Result};

/// Aggregation operators supported on support trees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combine {
    Sum,
    Min,
    Max,
    Or,
    /// Sum saturating at the given cap.
    CappedSum(u64),
}

impl Combine {
    pub fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            Self::Sum => a.saturating_add(b),
            Self::Min => a.min(b),
            Self::Max => a.max(b),
            Self::Or => a | b,
            Self::CappedSum(cap) => a.saturating_add(b).min(cap),
        }
    }

    fn identity(self) -> u64 {
        match self {
            Self::Min => u64::MAX,
            _ => 0,
        }
    }
}

/// A rooted tree over machines with parent links; children are ordered by machine id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MachineTree {
    pub root: usize,
    /// Every non-root machine of the tree mapped to its parent.
    pub parent: BTreeMap<usize, usize>,
}

impl MachineTree {
    pub fn singleton(root: usize) -> Self {
        Self { root, parent: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.parent.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn children(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&c, &p) in &self.parent {
            out.entry(p).or_default().push(c);
        }
        out
    }

    /// Machines in pre-order, visiting children by ascending id.
    pub fn preorder(&self) -> Vec<usize> {
        let children = self.children();
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            out.push(u);
            if let Some(cs) = children.get(&u) {
                stack.extend(cs.iter().rev());
            }
        }
        out
    }

    /// Depth of every machine below the root.
    pub fn depths(&self) -> BTreeMap<usize, u32> {
        let children = self.children();
        let mut out = BTreeMap::from([(self.root, 0u32)]);
        let mut queue = VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            let d = out[&u];
            for &c in children.get(&u).map_or(&[][..], |v| v.as_slice()) {
                out.insert(c, d + 1);
                queue.push_back(c);
            }
        }
        out
    }

    pub fn height(&self) -> u32 {
        self.depths().values().copied().max().unwrap_or(0)
    }
}

/// BFS tree of one subgraph: a tree over clusters and the induced machine tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BfsTree {
    pub source: usize,
    /// Reached clusters in BFS order.
    pub clusters: Vec<usize>,
    pub cluster_parent: BTreeMap<usize, Option<usize>>,
    pub cluster_depth: BTreeMap<usize, u32>,
    /// Machine through which each cluster was first reached (the leader for the source).
    pub receiver: BTreeMap<usize, usize>,
    pub machines: MachineTree,
    pub machine_depth: BTreeMap<usize, u32>,
    pub height: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BfsForest {
    pub trees: Vec<BfsTree>,
}

/// Group index per cluster of a set, with the reachability certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupAssignment {
    pub groups: usize,
    /// `(cluster, group)` in the order the clusters were given.
    pub group_of: Vec<(usize, usize)>,
    /// Every member is in, or adjacent to a member of, every group.
    pub certificate: bool,
}

impl GroupAssignment {
    pub fn members(&self, group: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_of.iter().filter(move |&&(_, g)| g == group).map(|&(v, _)| v)
    }
}

impl Engine<'_> {
    /// Broadcast `bits` from the leader of `v` to all of `V(v)`.
    pub fn cluster_broadcast(&mut self, tag: &str, v: usize, bits: u64) -> Result<u64> {
        self.broadcast(tag, MessageKind::Bulk, &[(v, bits)])
    }

    /// Aggregates one value per machine up each support tree; returns the leader's value per
    /// listed cluster. Every machine contributes exactly once.
    pub fn cluster_aggregate(
        &mut self,
        tag: &str,
        clusters: &[usize],
        value: impl Fn(usize) -> u64,
        combine: Combine,
        bits: u64,
    ) -> Result<Vec<u64>> {
        let inst = self.instance();
        let out: Vec<u64> = clusters
            .iter()
            .map(|&v| {
                // Fold deepest machines first, then each parent absorbs its children.
                let mut ms: Vec<usize> = inst.members(v).to_vec();
                ms.sort_by_key(|&m| std::cmp::Reverse(inst.tree_depth(m)));
                let mut acc: BTreeMap<usize, u64> = BTreeMap::new();
                for &m in &ms {
                    let own = combine.apply(combine.identity(), value(m));
                    let sub = inst
                        .tree_children(m)
                        .iter()
                        .fold(own, |a, c| combine.apply(a, acc.remove(c).unwrap_or(combine.identity())));
                    acc.insert(m, sub);
                }
                acc[&inst.leader(v)]
            })
            .collect();
        let items: Vec<(usize, u64)> = clusters.iter().map(|&v| (v, bits)).collect();
        self.convergecast(tag, MessageKind::Bulk, &items)?;
        Ok(out)
    }

    /// Charges one message of `bits(tree)` down (or up) every edge of each machine tree.
    pub fn forest_cast(
        &mut self,
        tag: &str,
        kind: MessageKind,
        trees: &[&MachineTree],
        bits: impl Fn(usize) -> u64,
        upward: bool,
    ) -> Result<u64> {
        let depths: Vec<BTreeMap<usize, u32>> = trees.iter().map(|t| t.depths()).collect();
        let top = depths.iter().flat_map(|d| d.values()).copied().max().unwrap_or(0) as u64;
        let mut hops = Vec::new();
        for (i, t) in trees.iter().enumerate() {
            let b = bits(i);
            for (&c, &p) in &t.parent {
                let d = u64::from(depths[i][&c]);
                hops.push(if upward {
                    Hop { from: c, to: p, offset: top - d, bits: b }
                } else {
                    Hop { from: p, to: c, offset: d - 1, bits: b }
                });
            }
        }
        self.charge(tag, kind, hops, false)
    }

    /// Simultaneous `depth`-hop BFS in vertex-disjoint cluster subgraphs.
    ///
    /// Cluster depths are distances in the induced subgraph of H. Each reached cluster has a
    /// unique receiver: among all links from the previous layer, the one minimizing
    /// (arrival time at the emitter, emitter id, receiver id). The machine tree of a cluster is its
    /// support tree re-rooted at the receiver.
    pub fn parallel_bfs(&mut self, subgraphs: &[Vec<usize>], sources: &[usize], depth: u32) -> Result<BfsForest> {
        let inst = self.instance();
        assert_eq!(subgraphs.len(), sources.len(), "one source per subgraph");
        let mut owner = vec![usize::MAX; inst.num_clusters()];
        for (i, g) in subgraphs.iter().enumerate() {
            for &v in g {
                if owner[v] != usize::MAX {
                    return Err(Error::OverlappingSubgraphs(inst.cluster_id(v)));
                }
                owner[v] = i;
            }
        }
        for (i, &s) in sources.iter().enumerate() {
            if owner[s] != i {
                return Err(Error::SourceOutsideSubgraph(inst.cluster_id(s)));
            }
        }

        let mut trees: Vec<BfsTree> = sources
            .iter()
            .map(|&s| BfsTree {
                source: s,
                clusters: vec![s],
                cluster_parent: BTreeMap::from([(s, None)]),
                cluster_depth: BTreeMap::from([(s, 0)]),
                receiver: BTreeMap::from([(s, inst.leader(s))]),
                machines: MachineTree::singleton(inst.leader(s)),
                machine_depth: BTreeMap::from([(inst.leader(s), 0)]),
                height: 0,
            })
            .collect();
        let mut visited = vec![false; inst.num_clusters()];
        let mut frontier: Vec<(usize, usize)> = Vec::new();
        for (i, &s) in sources.iter().enumerate() {
            visited[s] = true;
            frontier.push((i, s));
        }
        // Arrival time of the wave at each machine, relative to the start of its phase.
        let mut arrival = vec![u32::MAX; inst.n()];
        let token = 2 * self.word();

        for layer in 0..=depth {
            // Flood each frontier cluster from its receiver along the support tree.
            let mut flood = Vec::new();
            for &(i, v) in &frontier {
                let tree = &mut trees[i];
                let r = tree.receiver[&v];
                let base = tree.machine_depth[&r];
                arrival[r] = 0;
                let mut queue = VecDeque::from([r]);
                while let Some(u) = queue.pop_front() {
                    let nbrs = inst.tree_children(u).iter().copied().chain(inst.tree_parent(u));
                    for w in nbrs.collect::<Vec<_>>() {
                        if arrival[w] == u32::MAX {
                            arrival[w] = arrival[u] + 1;
                            tree.machines.parent.insert(w, u);
                            tree.machine_depth.insert(w, base + arrival[w]);
                            tree.height = tree.height.max(base + arrival[w]);
                            flood.push(Hop { from: u, to: w, offset: u64::from(arrival[u]), bits: token });
                            queue.push_back(w);
                        }
                    }
                }
            }
            self.charge("bfs", MessageKind::Unit, flood, false)?;
            if layer == depth {
                break;
            }

            // Cross to unvisited clusters of the same subgraph.
            let mut best: BTreeMap<usize, (u32, usize, usize, usize)> = BTreeMap::new();
            let mut hops = Vec::new();
            for &(i, v) in &frontier {
                for &li in inst.links_of(v) {
                    let l = inst.inter_links()[li];
                    let (a, b, w) = if l.cluster_a == v { (l.a, l.b, l.cluster_b) } else { (l.b, l.a, l.cluster_a) };
                    if owner[w] != i || visited[w] {
                        continue;
                    }
                    hops.push(Hop { from: a, to: b, offset: 0, bits: token });
                    let cand = (arrival[a], a, b, v);
                    best.entry(w).and_modify(|c| *c = (*c).min(cand)).or_insert(cand);
                }
            }
            self.charge("bfs", MessageKind::Unit, hops, true)?;
            let mut next = Vec::new();
            for (w, (_, a, b, v)) in best {
                let i = owner[w];
                let tree = &mut trees[i];
                visited[w] = true;
                tree.clusters.push(w);
                tree.cluster_parent.insert(w, Some(v));
                tree.cluster_depth.insert(w, layer + 1);
                tree.receiver.insert(w, b);
                tree.machines.parent.insert(b, a);
                let d = tree.machine_depth[&a] + 1;
                tree.machine_depth.insert(b, d);
                tree.height = tree.height.max(d);
                next.push((i, w));
            }
            next.sort_unstable();
            frontier = next;
        }
        Ok(BfsForest { trees })
    }

    /// Prefix sums over edge-disjoint ordered trees: each marked machine learns the sum of `x`
    /// over marked machines strictly preceding it in pre-order (children by ascending id).
    pub fn prefix_sums(&mut self, trees: &[&MachineTree], x: &BTreeMap<usize, i64>) -> Result<BTreeMap<usize, i64>> {
        let mut out = BTreeMap::new();
        for t in trees {
            let mut acc = 0i64;
            for m in t.preorder() {
                if let Some(&xm) = x.get(&m) {
                    out.insert(m, acc);
                    acc += xm;
                }
            }
        }
        // Subtree sums go up, offsets come back down.
        let bits = 2 * self.word() + 1;
        self.forest_cast("prefix-sum", MessageKind::Unit, trees, |_| bits, true)?;
        self.forest_cast("prefix-sum", MessageKind::Unit, trees, |_| bits, false)?;
        Ok(out)
    }

    /// Assigns each cluster of `set` a uniform group in `[groups]` and certifies that every
    /// member is in, or adjacent to, each group.
    pub fn random_groups(&mut self, tag: &str, set: &[usize], groups: usize, iteration: u64) -> Result<GroupAssignment> {
        let inst = self.instance();
        let groups = groups.max(1);
        let group_of: Vec<(usize, usize)> = set
            .iter()
            .map(|&v| {
                let mut rng = self.rng(tag, inst.cluster_id(v).0, iteration);
                (v, rng.below(groups as u64) as usize)
            })
            .collect();
        let mut g = vec![usize::MAX; inst.num_clusters()];
        for &(v, x) in &group_of {
            g[v] = x;
        }
        let certificate = group_of.iter().all(|&(v, own)| {
            let mut seen = vec![false; groups];
            seen[own] = true;
            for &u in inst.neighbors(v) {
                if g[u] != usize::MAX {
                    seen[g[u]] = true;
                }
            }
            seen.iter().all(|&s| s)
        });
        let gbits = u64::from(crate::netmodel::ParamSet::log_n(groups + 1));
        self.exchange(tag, MessageKind::Unit, set.iter().copied(), |_, dst| (g[dst] != usize::MAX).then_some(gbits))?;
        let items: Vec<(usize, u64)> = set.iter().map(|&v| (v, groups as u64)).collect();
        self.convergecast(tag, MessageKind::Bulk, &items)?;
        Ok(GroupAssignment { groups, group_of, certificate })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::tests::instance;
    use crate::engine::BandwidthPolicy;

    #[test]
    fn aggregates_on_path() {
        let inst = instance(3, &[(0, 1), (1, 2)], &[&[0, 1, 2]]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, true);
        let vals = [1u64, 2, 3];
        assert_eq!(eng.cluster_aggregate("s", &[0], |m| vals[m], Combine::Sum, 8).unwrap(), vec![6]);
        let maps = [0b0011u64, 0b0101, 0];
        assert_eq!(eng.cluster_aggregate("o", &[0], |m| maps[m], Combine::Or, 4).unwrap(), vec![0b0111]);
        assert_eq!(eng.cluster_aggregate("c", &[0], |_| 1, Combine::CappedSum(2), 2).unwrap(), vec![2]);
        assert_eq!(eng.cluster_aggregate("m", &[0], |m| vals[m], Combine::Min, 8).unwrap(), vec![1]);
        assert_eq!(eng.ledger().rounds(), 8);
    }

    #[test]
    fn bfs_single_cluster() {
        let inst = instance(1, &[], &[&[0]]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, true);
        let f = eng.parallel_bfs(&[vec![0]], &[0], 1).unwrap();
        assert_eq!(f.trees[0].clusters, vec![0]);
        assert_eq!(f.trees[0].machines.len(), 1);
    }

    #[test]
    fn bfs_on_path_of_clusters() {
        let inst = instance(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)], &[&[0, 1], &[2, 3], &[4, 5]]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, true);
        let f = eng.parallel_bfs(&[vec![0, 1, 2]], &[0], 2).unwrap();
        let t = &f.trees[0];
        assert_eq!(t.cluster_depth.values().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(t.cluster_parent[&2], Some(1));
        assert_eq!(t.receiver[&1], 2);
        assert_eq!(t.machines.len(), 6);
        assert_eq!(t.height, 5);
    }

    #[test]
    fn bfs_errors() {
        let inst = instance(2, &[(0, 1)], &[&[0], &[1]]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        assert!(matches!(eng.parallel_bfs(&[vec![0]], &[1], 1), Err(Error::SourceOutsideSubgraph(_))));
        assert!(matches!(
            eng.parallel_bfs(&[vec![0, 1], vec![1]], &[0, 1], 1),
            Err(Error::OverlappingSubgraphs(_))
        ));
    }

    #[test]
    fn prefix_sums_on_path() {
        let inst = instance(3, &[(0, 1), (1, 2)], &[&[0, 1, 2]]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let tree = MachineTree { root: 0, parent: BTreeMap::from([(1, 0), (2, 1)]) };
        let x = BTreeMap::from([(0, 1), (1, 1), (2, 1)]);
        let p = eng.prefix_sums(&[&tree], &x).unwrap();
        assert_eq!(p.values().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
        let single = BTreeMap::from([(2, 5)]);
        assert_eq!(eng.prefix_sums(&[&tree], &single).unwrap()[&2], 0);
    }

    #[test]
    fn one_group_always_certifies() {
        let inst = instance(3, &[(0, 1), (1, 2)], &[&[0], &[1], &[2]]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let g = eng.random_groups("g", &[0, 1, 2], 1, 0).unwrap();
        assert!(g.certificate);
        assert!(g.group_of.iter().all(|&(_, x)| x == 0));
    }
}
