use crate::acd::AcdLabeling;
use crate::coloring::trial::{multicolor_trial, try_color, ColorSpace, Trial};
use crate::coloring::{Color, PartialColoring};
use crate::engine::{Engine, MachineTree, MessageKind};
use crate::error::Result;
use crate::fingerprint::approx_count;
use crate::netmodel::ParamSet;
use crate::palette::{build_palette_view, CliquePaletteView};

/// Reuse-slack constant, `γ_sg/16`.
pub fn reuse_gamma(params: &ParamSet) -> f64 {
    params.gamma_sg / 16.0
}

/// Phase I trial rounds of the completion stage.
pub const COMPLETE_ROUNDS: u32 = 4;
/// Slack fraction assumed by the trials of the completion stage.
pub const COMPLETE_GAMMA: f64 = 1.0;
/// Slack fraction used for the multi-color trials on reserved colors.
pub const RESERVED_MCT_GAMMA: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZEstimate {
    pub v: usize,
    pub z: f64,
    /// Exact in-clique count of members colored above `r_v`.
    pub mu_clique: f64,
    /// Fingerprint estimate of external neighbors colored above `r_v`.
    pub mu_external: f64,
}

/// Estimates `z̃_v` for dense non-cabal targets.
///
/// The in-clique count is exact by aggregation on the clique tree; the external count comes
/// from fingerprints at precision δ. The anti-degree term uses `max(0, mean x_v)` over the
/// clique, which nodes can aggregate, in place of the unknown `a_K`.
pub fn compute_z(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &PartialColoring,
    targets: &[usize],
    gamma: f64,
    iteration: u64,
) -> Result<Vec<ZEstimate>> {
    let inst = eng.instance();
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let q = inst.delta() as f64 + 1.0;
    let mut ks: Vec<usize> = targets.iter().filter_map(|&v| labeling.clique_of(v)).collect();
    ks.sort_unstable();
    ks.dedup();
    let trees: Vec<&MachineTree> = ks.iter().map(|&k| &labeling.cliques[k].tree).collect();
    let word = eng.word();
    eng.forest_cast("z-count", MessageKind::Unit, &trees, |_| 2 * word, true)?;
    eng.forest_cast("z-count", MessageKind::Unit, &trees, |_| 2 * word, false)?;

    let mut mu_k = vec![0f64; labeling.cliques.len()];
    let mut a_hat = vec![0f64; labeling.cliques.len()];
    for &k in &ks {
        let c = &labeling.cliques[k];
        mu_k[k] = c.members.iter().filter(|&&u| coloring.get(u).is_some_and(|col| col > c.reserved)).count() as f64;
        let mean_x = c.members.iter().map(|&u| labeling.x[u]).sum::<f64>() / c.members.len() as f64;
        a_hat[k] = mean_x.max(0.0);
    }
    let samplers: Vec<bool> = (0..inst.num_clusters()).map(|u| coloring.is_colored(u)).collect();
    let roles = &labeling.roles;
    let reserved_of = |v: usize| labeling.clique_of(v).map_or(0, |k| labeling.cliques[k].reserved);
    let mu_e = approx_count(
        eng,
        "z-external",
        inst.params().delta,
        &samplers,
        targets,
        |v, u| roles[u] != roles[v] && coloring.get(u).is_some_and(|c| c > reserved_of(v)),
        iteration,
    )?;
    Ok(targets
        .iter()
        .zip(mu_e)
        .map(|(&v, me)| {
            let k = labeling.clique_of(v).expect("dense target");
            let c = &labeling.cliques[k];
            let z = (q - f64::from(c.reserved)) - mu_k[k] - me + gamma * c.e_tilde + 40.0 * a_hat[k] + labeling.x[v];
            ZEstimate { v, z, mu_clique: mu_k[k], mu_external: me }
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompleteReport {
    /// Phase I participants per iteration.
    pub phase_one: Vec<usize>,
    /// Nodes sent to the reserved-color trial at the end of Phase I.
    pub reserved_stage: usize,
    /// Nodes handled by Phase II.
    pub phase_two: usize,
    pub residual: Vec<usize>,
}

fn uncolored_members(labeling: &AcdLabeling, coloring: &PartialColoring, cliques: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = cliques
        .iter()
        .flat_map(|&k| labeling.cliques[k].members.iter().copied())
        .filter(|&v| !coloring.is_colored(v))
        .collect();
    out.sort_unstable();
    out
}

fn reserved_trials(labeling: &AcdLabeling, nodes: &[usize]) -> Vec<Trial> {
    nodes
        .iter()
        .map(|&v| {
            let r = labeling.clique_of(v).map_or(0, |k| labeling.cliques[k].reserved);
            Trial::single(v, ColorSpace::Interval(1, r))
        })
        .collect()
}

/// Extends the coloring to the listed non-cabal cliques.
///
/// Phase I: nodes whose `z̃` clears `0.25·γ·ẽ_K` try colors of `L_φ(K) \ [r_K]`; at the end
/// the survivors that still clear it run multi-color trials on `[r_K]`. Phase II: everyone left
/// tries `[r_K]`, first by random trials, then by multi-color trials. Returns the residual.
pub fn complete_non_cabals(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &mut PartialColoring,
    cliques: &[usize],
    iteration: u64,
) -> Result<CompleteReport> {
    let inst = eng.instance();
    let q = inst.delta() as Color + 1;
    let gamma = reuse_gamma(inst.params());
    let mut report = CompleteReport::default();
    let threshold = |v: usize| 0.25 * gamma * labeling.cliques[labeling.clique_of(v).expect("dense")].e_tilde;

    let mut members_in = uncolored_members(labeling, coloring, cliques);
    for i in 0..COMPLETE_ROUNDS {
        if members_in.is_empty() {
            break;
        }
        let z = compute_z(eng, labeling, coloring, &members_in, gamma, iteration * 100 + u64::from(i))?;
        let s: Vec<usize> = z.iter().filter(|e| e.z >= threshold(e.v)).map(|e| e.v).collect();
        report.phase_one.push(s.len());
        if s.is_empty() {
            members_in = s;
            break;
        }
        let mut ks: Vec<usize> = s.iter().filter_map(|&v| labeling.clique_of(v)).collect();
        ks.sort_unstable();
        ks.dedup();
        let mut views: Vec<CliquePaletteView> = Vec::with_capacity(ks.len());
        for &k in &ks {
            let c = &labeling.cliques[k];
            views.push(build_palette_view(eng, "complete-palette", &c.members, Some(&c.tree), coloring, iteration * 100 + u64::from(i))?);
        }
        let trials: Vec<Trial> = s
            .iter()
            .map(|&v| {
                let k = labeling.clique_of(v).expect("dense");
                let view = ks.binary_search(&k).expect("listed");
                Trial::single(v, ColorSpace::CliqueFree { view, lo: labeling.cliques[k].reserved + 1, hi: q })
            })
            .collect();
        try_color(eng, "complete", coloring, &trials, &views, COMPLETE_GAMMA / 4.0, iteration * 100 + u64::from(i), "complete")?;
        members_in = s.into_iter().filter(|&v| !coloring.is_colored(v)).collect();
    }
    if !members_in.is_empty() {
        let z = compute_z(eng, labeling, coloring, &members_in, gamma, iteration * 100 + 99)?;
        let s: Vec<usize> = z.iter().filter(|e| e.z > threshold(e.v)).map(|e| e.v).collect();
        report.reserved_stage = s.len();
        let trials = reserved_trials(labeling, &s);
        multicolor_trial(eng, "complete-reserved", coloring, &trials, &[], RESERVED_MCT_GAMMA, iteration, "complete")?;
    }

    let rest = uncolored_members(labeling, coloring, cliques);
    report.phase_two = rest.len();
    let trials = reserved_trials(labeling, &rest);
    for i in 0..COMPLETE_ROUNDS {
        try_color(eng, "complete-reserved", coloring, &trials, &[], COMPLETE_GAMMA / 4.0, iteration * 100 + 50 + u64::from(i), "complete")?;
    }
    multicolor_trial(eng, "complete-reserved", coloring, &trials, &[], RESERVED_MCT_GAMMA, iteration * 100 + 51, "complete")?;
    report.residual = uncolored_members(labeling, coloring, cliques);
    Ok(report)
}
