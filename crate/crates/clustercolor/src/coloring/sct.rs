use crate::coloring::{Color, PartialColoring};
use crate::engine::{Engine, MachineTree, MessageKind};
use crate::error::Result;
use crate::palette::{sct_permutation, CliquePaletteView, ColorSet};

/// One clique's part of a synchronized color trial.
#[derive(Clone, Debug)]
pub struct SctJob<'a> {
    pub members: &'a [usize],
    pub tree: &'a MachineTree,
    /// Participants, ascending.
    pub set: Vec<usize>,
    pub reserved: u32,
    pub view: &'a CliquePaletteView,
    /// Average external degree used in the residual bound.
    pub e_k: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SctReport {
    pub residual: Vec<usize>,
    /// `α = |S|/|K|`.
    pub alpha: f64,
    /// `(24/α)·max{e_K, ℓ}`.
    pub bound: f64,
    pub attempts: u32,
    /// The residual met the bound.
    pub success: bool,
    /// Participants beyond the number of non-reserved free colors, which did not try.
    pub trimmed: usize,
}

/// Synchronized color trial run in parallel in every job's clique.
///
/// The participants are ranked by a prefix sum on the clique tree, the leader broadcasts a
/// permutation seed, and the participant of rank `i` tries the `π(i)`-th color of
/// `L_φ(K) \ [r_K]`. Members of one clique try distinct colors, so a participant only loses
/// to an external neighbor holding or trying the same color (then both drop). A clique whose
/// residual exceeds its bound undoes its attempt and reruns with a fresh seed, up to the retry
/// limit; the last attempt is kept.
pub fn synchronized_color_trial(
    eng: &mut Engine<'_>,
    coloring: &mut PartialColoring,
    jobs: &[SctJob<'_>],
    iteration: u64,
) -> Result<Vec<SctReport>> {
    let inst = eng.instance();
    let q = inst.delta() as Color + 1;
    let ell = inst.params().ell;
    let retries = inst.params().retries;
    let cbits = eng.color_bits();
    let word = eng.word();
    let mut reports: Vec<SctReport> = jobs
        .iter()
        .map(|j| {
            let alpha = j.set.len() as f64 / j.members.len().max(1) as f64;
            let bound = if alpha > 0.0 { 24.0 / alpha * j.e_k.max(ell) } else { f64::INFINITY };
            SctReport { alpha, bound, ..SctReport::default() }
        })
        .collect();
    let mut pending: Vec<usize> = (0..jobs.len()).filter(|&i| !jobs[i].set.is_empty()).collect();
    for attempt in 0..=retries {
        if pending.is_empty() {
            break;
        }
        let trees: Vec<&MachineTree> = pending.iter().map(|&i| jobs[i].tree).collect();
        let ranks = pending
            .iter()
            .flat_map(|&i| jobs[i].set.iter().map(|&v| (inst.leader(v), 1i64)))
            .collect();
        eng.prefix_sums(&trees, &ranks)?;
        eng.forest_cast("sct", MessageKind::Unit, &trees, |_| word, false)?;

        let mut tried: Vec<Option<Color>> = vec![None; inst.num_clusters()];
        let mut senders = Vec::new();
        for &i in &pending {
            let job = &jobs[i];
            let lo = job.reserved + 1;
            let available = if lo <= q { job.view.query_count(ColorSet::Free, lo, q)? } else { 0 };
            let subseed = eng.rng("sct", inst.cluster_id(job.members[0]).0, iteration * 100 + u64::from(attempt)).below(u64::MAX);
            let perm = sct_permutation(job.set.len(), subseed);
            let mut askers = Vec::new();
            reports[i].trimmed = 0;
            for (rank, &v) in job.set.iter().enumerate() {
                let idx = perm[rank] as u32 + 1;
                if idx > available {
                    reports[i].trimmed += 1;
                    continue;
                }
                tried[v] = Some(job.view.query_ith(ColorSet::Free, idx, lo, q)?);
                askers.push(v);
                senders.push(v);
            }
            job.view.charge_queries(eng, "sct", &askers, cbits)?;
        }
        senders.sort_unstable();
        eng.h_round("sct", MessageKind::Unit, &senders, cbits, 1)?;
        let keep: Vec<usize> = senders
            .iter()
            .copied()
            .filter(|&v| {
                let c = tried[v].expect("sender tried");
                inst.neighbors(v).iter().all(|&u| coloring.get(u) != Some(c) && tried[u] != Some(c))
            })
            .collect();
        for &v in &keep {
            coloring.set(v, tried[v].expect("sender tried"), "sct");
        }
        eng.exchange("sct", MessageKind::Unit, keep, |_, _| Some(cbits))?;

        let mut again = Vec::new();
        for &i in &pending {
            let job = &jobs[i];
            let residual: Vec<usize> = job.set.iter().copied().filter(|&v| !coloring.is_colored(v)).collect();
            let r = &mut reports[i];
            r.attempts = attempt + 1;
            r.success = residual.len() as f64 <= r.bound;
            r.residual = residual;
            if !r.success && attempt < retries {
                for &v in &job.set {
                    coloring.clear(v);
                }
                again.push(i);
            }
        }
        // Cliques that undo their attempt tell their neighbors.
        let undone: Vec<usize> = again.iter().flat_map(|&i| jobs[i].set.iter().copied()).collect();
        eng.exchange("sct", MessageKind::Unit, undone, |_, _| Some(1))?;
        pending = again;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acd::AcdLabeling;
    use crate::engine::BandwidthPolicy;
    use crate::netmodel::{generate_planted, Preset};
    use crate::palette::build_palette_view;

    #[test]
    fn lone_participant_is_colored() {
        let mut spec = Preset::PlantedCabals.spec(1, 8, 1);
        spec.cliques[0].anti_regular = 0;
        spec.cliques[0].external_degree = 0;
        let inst = generate_planted(1, &spec).unwrap().instance;
        let members: Vec<usize> = (0..8).collect();
        let lab = AcdLabeling::from_cliques(&inst, std::slice::from_ref(&members));
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(8);
        let view = build_palette_view(&mut eng, "pv", &members, None, &phi, 0).unwrap();
        let job = SctJob { members: &members, tree: &lab.cliques[0].tree, set: vec![3], reserved: 0, view: &view, e_k: 0.0 };
        let r = synchronized_color_trial(&mut eng, &mut phi, &[job], 0).unwrap();
        assert!(phi.is_colored(3));
        assert!(r[0].residual.is_empty());
    }

    #[test]
    fn clique_members_never_collide() {
        let mut spec = Preset::PlantedCabals.spec(1, 30, 1);
        spec.cliques[0].external_degree = 0;
        let inst = generate_planted(2, &spec).unwrap().instance;
        let members: Vec<usize> = (0..30).collect();
        let lab = AcdLabeling::from_cliques(&inst, std::slice::from_ref(&members));
        let mut eng = Engine::new(&inst, 4, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(30);
        let view = build_palette_view(&mut eng, "pv", &members, None, &phi, 0).unwrap();
        let set: Vec<usize> = (0..25).collect();
        let job = SctJob { members: &members, tree: &lab.cliques[0].tree, set, reserved: 2, view: &view, e_k: 0.0 };
        let r = synchronized_color_trial(&mut eng, &mut phi, &[job], 0).unwrap();
        assert!(r[0].residual.is_empty());
        let mut colors: Vec<Color> = (0..25).map(|v| phi.get(v).unwrap()).collect();
        assert!(colors.iter().all(|&c| c > 2));
        colors.sort_unstable();
        colors.dedup();
        assert_eq!(colors.len(), 25);
    }
}
