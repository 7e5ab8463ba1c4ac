use crate::coloring::{Color, PartialColoring};
use crate::engine::{Engine, MachineTree, MessageKind};
use crate::error::Result;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FinishReport {
    pub components: usize,
    pub largest: usize,
    pub colored: usize,
}

/// Connected components of `H` induced by `nodes` (ascending within each, ordered by their
/// smallest member).
pub(crate) fn components(eng: &Engine<'_>, nodes: &[usize]) -> Vec<Vec<usize>> {
    let inst = eng.instance();
    let mut inside = vec![false; inst.num_clusters()];
    for &v in nodes {
        inside[v] = true;
    }
    let mut seen = vec![false; inst.num_clusters()];
    let mut out = Vec::new();
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    for &s in &sorted {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            for &u in inst.neighbors(comp[i]) {
                if inside[u] && !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Fallback: every uncolored target is colored greedily after its component of uncolored
/// targets is gathered at the component's smallest cluster.
///
/// Each component builds a BFS tree, ships every member's neighbor colors to the root as bulk
/// messages, colors greedily in BFS order and ships the colors back. Its round cost grows with
/// the component size.
pub fn gather_finish(eng: &mut Engine<'_>, coloring: &mut PartialColoring, targets: &[usize]) -> Result<FinishReport> {
    let inst = eng.instance();
    let q = inst.delta() as Color + 1;
    let nodes: Vec<usize> = targets.iter().copied().filter(|&v| !coloring.is_colored(v)).collect();
    let comps = components(eng, &nodes);
    let mut report = FinishReport { components: comps.len(), largest: comps.iter().map(Vec::len).max().unwrap_or(0), colored: 0 };
    if comps.is_empty() {
        return Ok(report);
    }
    let sources: Vec<usize> = comps.iter().map(|c| c[0]).collect();
    let depth = report.largest as u32;
    let forest = eng.parallel_bfs(&comps, &sources, depth)?;
    let cbits = eng.color_bits();
    let word = eng.word();
    let trees: Vec<&MachineTree> = forest.trees.iter().map(|t| &t.machines).collect();
    let up: Vec<u64> =
        forest.trees.iter().map(|t| t.clusters.iter().map(|&v| (inst.degree(v) as u64 + 1) * (cbits + word)).sum()).collect();
    let down: Vec<u64> = forest.trees.iter().map(|t| t.clusters.len() as u64 * (cbits + word)).collect();
    eng.exchange("gather-finish", MessageKind::Unit, nodes.iter().copied(), |_, _| Some(cbits))?;
    eng.forest_cast("gather-finish", MessageKind::Bulk, &trees, |i| up[i], true)?;
    for tree in &forest.trees {
        for &v in &tree.clusters {
            let palette = coloring.palette(inst, v);
            let c = (1..=q).find(|&c| palette[c as usize]).expect("degree at most Δ leaves a free color");
            coloring.set(v, c, "gather-finish");
            report.colored += 1;
        }
    }
    eng.forest_cast("gather-finish", MessageKind::Bulk, &trees, |i| down[i], false)?;
    eng.exchange("gather-finish", MessageKind::Unit, nodes.iter().copied(), |_, _| Some(cbits))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BandwidthPolicy;
    use crate::netmodel::{generate_planted, Preset};
    use crate::verify;

    #[test]
    fn finishes_everything_properly() {
        let inst = generate_planted(3, &Preset::SparseEr.spec(2, 30, 2)).unwrap().instance;
        let mut phi = PartialColoring::new(inst.num_clusters());
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let all: Vec<usize> = (0..inst.num_clusters()).collect();
        let r = gather_finish(&mut eng, &mut phi, &all).unwrap();
        assert_eq!(r.colored, inst.num_clusters());
        assert!(verify::check_proper(&inst, &phi).pass);
        assert!(verify::check_total(&inst, &phi, all).pass);
    }

    #[test]
    fn components_split_on_colored_nodes() {
        let inst = generate_planted(3, &Preset::SparseEr.spec(1, 20, 1)).unwrap().instance;
        let eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let comps = components(&eng, &[0]);
        assert_eq!(comps, vec![vec![0]]);
    }
}
