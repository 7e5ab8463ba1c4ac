use crate::acd::AcdLabeling;
use crate::coloring::{Color, PartialColoring};
use crate::engine::{Engine, MessageKind};
use crate::error::{Error, Result};

/// Activation probability of slack generation.
pub const SLACK_ACTIVATION: f64 = 1.0 / 200.0;

/// Slack generation on the uncolored clusters outside cabals.
///
/// Active clusters try a uniform color above the excluded prefix and keep it when no neighbor
/// sampled the same color. The attempt is rejected, and rerun with fresh randomness, when some
/// almost-clique gets more than `|K|/100` of its members colored. Returns the number of
/// retries; after the retry limit the coloring is left unchanged and the stage fails.
pub fn slack_generation(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &mut PartialColoring,
    activation: f64,
) -> Result<u32> {
    let inst = eng.instance();
    let q = inst.delta() as Color + 1;
    let excluded = inst.params().excluded_prefix(inst.delta());
    let retries = inst.params().retries;
    let participants: Vec<usize> =
        (0..inst.num_clusters()).filter(|&v| !labeling.is_cabal_member(v) && !coloring.is_colored(v)).collect();
    if excluded >= q {
        return Ok(0);
    }
    let cbits = eng.color_bits();
    for attempt in 0..=retries {
        let mut sampled: Vec<Option<Color>> = vec![None; inst.num_clusters()];
        let mut active = Vec::new();
        for &v in &participants {
            let mut rng = eng.rng("slack-generation", inst.cluster_id(v).0, u64::from(attempt));
            if rng.bernoulli(activation) {
                sampled[v] = Some(excluded + 1 + rng.below(u64::from(q - excluded)) as Color);
                active.push(v);
            }
        }
        eng.h_round("slack-generation", MessageKind::Unit, &active, cbits, 1)?;
        let keep: Vec<(usize, Color)> = active
            .iter()
            .filter_map(|&v| {
                let c = sampled[v]?;
                let clash = inst.neighbors(v).iter().any(|&u| sampled[u] == Some(c) || coloring.get(u) == Some(c));
                (!clash).then_some((v, c))
            })
            .collect();

        let mut per_clique = vec![0usize; labeling.cliques.len()];
        for &(v, _) in &keep {
            if let Some(k) = labeling.clique_of(v) {
                per_clique[k] += 1;
            }
        }
        let ok = labeling
            .cliques
            .iter()
            .zip(&per_clique)
            .all(|(c, &colored)| colored as f64 <= c.members.len() as f64 / 100.0);
        // Each clique checks its count on its tree.
        let trees: Vec<_> = labeling.cliques.iter().map(|c| &c.tree).collect();
        let word = eng.word();
        eng.forest_cast("slack-generation", MessageKind::Unit, &trees, |_| word, true)?;
        eng.forest_cast("slack-generation", MessageKind::Unit, &trees, |_| 1, false)?;
        if ok {
            for &(v, c) in &keep {
                coloring.set(v, c, "slack-generation");
            }
            let adopters: Vec<usize> = keep.iter().map(|k| k.0).collect();
            eng.exchange("slack-generation", MessageKind::Unit, adopters, |_, _| Some(cbits))?;
            return Ok(attempt);
        }
    }
    Err(Error::StageFailed { stage: "slack-generation".into(), retries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BandwidthPolicy;
    use crate::netmodel::{generate_planted, Preset};

    #[test]
    fn inactive_run_changes_nothing() {
        let inst = generate_planted(1, &Preset::SparseEr.spec(2, 30, 1)).unwrap().instance;
        let labeling = AcdLabeling::all_sparse(inst.num_clusters());
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(inst.num_clusters());
        assert_eq!(slack_generation(&mut eng, &labeling, &mut phi, 0.0).unwrap(), 0);
        assert_eq!(phi.colored_count(), 0);
    }

    #[test]
    fn adjacent_same_color_both_drop() {
        let inst = generate_planted(1, &Preset::SparseEr.spec(2, 30, 1)).unwrap().instance;
        let labeling = AcdLabeling::all_sparse(inst.num_clusters());
        let mut eng = Engine::new(&inst, 3, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(inst.num_clusters());
        slack_generation(&mut eng, &labeling, &mut phi, 1.0).unwrap();
        for v in 0..inst.num_clusters() {
            if let Some(c) = phi.get(v) {
                assert!(inst.neighbors(v).iter().all(|&u| phi.get(u) != Some(c)));
                assert!(c > inst.params().excluded_prefix(inst.delta()));
            }
        }
    }
}
