mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use clustercolor::coloring::{Color, PartialColoring};
use clustercolor::engine::{BandwidthPolicy, Engine, MachineTree};
use clustercolor::netmodel::{generate_planted, Instance, Preset};
use clustercolor::palette::{build_palette_view, collision_free_hash, ColorSet};
use clustercolor::rng::CounterRng;

use common::{bfs_distances, oracle_prefix, single_clique};

fn sparse_instance(seed: u64, size: usize, expansion: usize) -> Instance {
    generate_planted(seed, &Preset::SparseEr.spec(1, size, expansion)).unwrap().instance
}

/// Random split of all clusters into `parts` subgraphs; each source is the smallest member.
fn random_split(n: usize, parts: usize, seed: u64) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut rng = CounterRng::for_stage(seed, "split", 0, 0);
    let mut groups = vec![Vec::new(); parts];
    for v in 0..n {
        groups[rng.below(parts as u64) as usize].push(v);
    }
    groups.retain(|g| !g.is_empty());
    let sources = groups.iter().map(|g| g[0]).collect();
    (groups, sources)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bfs_layers_match_induced_distances(seed in 0u64..1000, size in 6usize..40, expansion in 1usize..4, parts in 1usize..4, depth in 0u32..5) {
        let inst = sparse_instance(seed, size, expansion);
        let (groups, sources) = random_split(inst.num_clusters(), parts, seed);
        let mut eng = Engine::new(&inst, seed, BandwidthPolicy::Audit, false);
        let forest = eng.parallel_bfs(&groups, &sources, depth).unwrap();
        prop_assert_eq!(forest.trees.len(), groups.len());
        for (tree, (group, &s)) in forest.trees.iter().zip(groups.iter().zip(&sources)) {
            let dist = bfs_distances(&inst, group, s);
            let want: BTreeSet<usize> = group.iter().copied().filter(|&v| dist[v].is_some_and(|d| d <= depth)).collect();
            let got: BTreeSet<usize> = tree.clusters.iter().copied().collect();
            prop_assert_eq!(&got, &want);
            for &v in &tree.clusters {
                prop_assert_eq!(Some(tree.cluster_depth[&v]), dist[v]);
                if let Some(p) = tree.cluster_parent[&v] {
                    prop_assert!(inst.adjacent(p, v));
                    prop_assert_eq!(tree.cluster_depth[&p] + 1, tree.cluster_depth[&v]);
                }
            }
            // The machine tree spans exactly the machines of the reached clusters over real links.
            let machines: BTreeSet<usize> = want.iter().flat_map(|&v| inst.members(v).iter().copied()).collect();
            let depths = tree.machines.depths();
            prop_assert_eq!(depths.keys().copied().collect::<BTreeSet<_>>(), machines);
            for (&c, &p) in &tree.machines.parent {
                prop_assert!(inst.comm().neighbors(c).contains(&p));
                prop_assert_eq!(tree.machine_depth[&c], depths[&c]);
            }
            prop_assert_eq!(tree.height, depths.values().copied().max().unwrap_or(0));
        }
    }

    #[test]
    fn prefix_sums_match_preorder_oracle(seed in 0u64..1000, size in 6usize..40, expansion in 1usize..4, density in 0.1f64..1.0) {
        let inst = sparse_instance(seed, size, expansion);
        let (groups, sources) = random_split(inst.num_clusters(), 3, seed ^ 7);
        let mut eng = Engine::new(&inst, seed, BandwidthPolicy::Audit, false);
        let forest = eng.parallel_bfs(&groups, &sources, 64).unwrap();
        let trees: Vec<&MachineTree> = forest.trees.iter().map(|t| &t.machines).collect();
        let mut rng = CounterRng::for_stage(seed, "marks", 0, 0);
        let mut x = BTreeMap::new();
        for m in 0..inst.n() {
            if rng.bernoulli(density) {
                x.insert(m, rng.below(2001) as i64 - 1000);
            }
        }
        let got = eng.prefix_sums(&trees, &x).unwrap();
        let mut want = BTreeMap::new();
        for t in &trees {
            let local: BTreeMap<usize, i64> = x.iter().filter(|(m, _)| t.root == **m || t.parent.contains_key(m)).map(|(&m, &v)| (m, v)).collect();
            want.extend(oracle_prefix(t, &local));
        }
        prop_assert_eq!(got, want);
    }

    #[test]
    fn palette_queries_match_brute_force(seed in 0u64..1000, filled in 0usize..64, queries in prop::collection::vec((any::<u32>(), any::<u32>(), any::<u32>()), 50)) {
        let loaded = single_clique(seed, 64, 4, 0);
        let inst = &loaded.instance;
        let q = inst.delta() as Color + 1;
        let mut rng = CounterRng::for_stage(seed, "fill", 0, 0);
        let mut phi = PartialColoring::new(inst.num_clusters());
        let mut pool: Vec<Color> = (1..=q).collect();
        for v in 0..filled.min(inst.num_clusters()) {
            let i = rng.below(pool.len() as u64) as usize;
            phi.set(v, pool.swap_remove(i), "input");
        }
        let members: Vec<usize> = (0..inst.num_clusters()).collect();
        let mut eng = Engine::new(inst, seed, BandwidthPolicy::Audit, false);
        let view = build_palette_view(&mut eng, "view", &members, None, &phi, 0).unwrap();
        let used: BTreeSet<Color> = members.iter().filter_map(|&v| phi.get(v)).collect();
        for (ra, rb, ri) in queries {
            let (a, b) = { let a = ra % q + 1; let b = rb % q + 1; (a.min(b), a.max(b)) };
            for set in [ColorSet::Used, ColorSet::Free] {
                let inside: Vec<Color> = (a..=b).filter(|c| used.contains(c) == (set == ColorSet::Used)).collect();
                prop_assert_eq!(view.query_count(set, a, b).unwrap() as usize, inside.len());
                let i = ri % (inside.len() as u32 + 1) + 1;
                match inside.get(i as usize - 1) {
                    Some(&c) => prop_assert_eq!(view.query_ith(set, i, a, b).unwrap(), c),
                    None => prop_assert!(view.query_ith(set, i, a, b).is_err()),
                }
            }
        }
        prop_assert!(view.query_count(ColorSet::Free, 0, 1).is_err());
        prop_assert!(view.query_count(ColorSet::Free, 1, q + 1).is_err());
    }

    #[test]
    fn collision_free_hash_is_injective_on_smallest_free(seed in 0u64..1000, filled in 0usize..40, k in 1usize..24) {
        let loaded = single_clique(seed, 64, 4, 0);
        let inst = &loaded.instance;
        let mut phi = PartialColoring::new(inst.num_clusters());
        let mut rng = CounterRng::for_stage(seed, "fill", 1, 0);
        let q = inst.delta() as Color + 1;
        for v in 0..filled {
            phi.set(v, 1 + rng.below(u64::from(q)) as Color, "input");
        }
        let members: Vec<usize> = (0..inst.num_clusters()).collect();
        let mut eng = Engine::new(inst, seed, BandwidthPolicy::Audit, false);
        let view = build_palette_view(&mut eng, "view", &members, None, &phi, 0).unwrap();
        let (hash, domain) = collision_free_hash(&mut eng, "hash", &view, k, 0).unwrap();
        let used: BTreeSet<Color> = members.iter().filter_map(|&v| phi.get(v)).collect();
        let want: Vec<Color> = (1..=q).filter(|c| !used.contains(c)).take(k).collect();
        prop_assert_eq!(&domain, &want);
        let images: BTreeSet<u64> = domain.iter().map(|&c| hash.evaluate(u64::from(c))).collect();
        prop_assert_eq!(images.len(), domain.len());
        let range = 4 * (k as u64).pow(2);
        prop_assert!(images.iter().all(|&h| h < range));
    }
}

#[test]
fn bfs_rejects_overlapping_subgraphs() {
    let inst = sparse_instance(1, 10, 1);
    let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
    assert!(eng.parallel_bfs(&[vec![0, 1], vec![1, 2]], &[0, 2], 2).is_err());
    assert!(eng.parallel_bfs(&[vec![0, 1]], &[3], 2).is_err());
}

#[test]
fn random_groups_cover_a_clique() {
    let loaded = single_clique(4, 64, 0, 0);
    let inst = &loaded.instance;
    let members: Vec<usize> = (0..inst.num_clusters()).collect();
    let mut eng = Engine::new(inst, 4, BandwidthPolicy::Audit, false);
    let g = eng.random_groups("groups", &members, 4, 0).unwrap();
    assert!(g.certificate);
    assert_eq!(g.group_of.len(), members.len());
    assert!((0..4).all(|i| g.members(i).count() > 0));
}
