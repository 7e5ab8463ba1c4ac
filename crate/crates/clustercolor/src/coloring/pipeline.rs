use crate::acd::{classify, compute_acd, degree_estimates, AcdLabeling};
use crate::coloring::finish::gather_finish;
use crate::coloring::trial::{multicolor_trial, sparse_rounds, try_color, ColorSpace, Trial};
use crate::coloring::{
    color_cabals, color_non_cabals, ids, slack_generation, staged, staged_soft, CabalRun, Color, PartialColoring,
    StageOutcome, SLACK_ACTIVATION,
};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::putaside::DonationRecord;
use crate::verify;

/// Stage name of the fallback, which headline round counts leave out.
pub const FALLBACK_STAGE: &str = "gather-finish";

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub coloring: PartialColoring,
    pub labeling: AcdLabeling,
    pub outcomes: Vec<StageOutcome>,
    pub cabals: CabalRun,
    /// Some cluster was colored by the fallback.
    pub fallback_used: bool,
    /// Δ was below the low-degree threshold, so only the sparse stage and the fallback ran.
    pub low_degree: bool,
}

impl PipelineRun {
    pub fn donations(&self) -> &[DonationRecord] {
        self.cabals.report.as_ref().map_or(&[], |r| r.donations.as_slice())
    }

    /// `(G-rounds, H-rounds)` over every stage except the fallback.
    pub fn headline_rounds(&self) -> (u64, u64) {
        self.outcomes
            .iter()
            .filter(|o| o.stage != FALLBACK_STAGE)
            .fold((0, 0), |(g, h), o| (g + o.rounds, h + o.h_rounds))
    }
}

fn max_uncolored_degree(eng: &Engine<'_>, coloring: &PartialColoring, nodes: &[usize]) -> usize {
    let inst = eng.instance();
    nodes
        .iter()
        .filter(|&&v| !coloring.is_colored(v))
        .map(|&v| inst.neighbors(v).iter().filter(|&&u| !coloring.is_colored(u)).count())
        .max()
        .unwrap_or(0)
}

/// Random trials from `[Δ+1]` until the uncolored degree of every participant is at most
/// `(γ/4)Δ` (or the round cap), then multi-color trials.
fn color_sparse(
    eng: &mut Engine<'_>,
    coloring: &mut PartialColoring,
    nodes: &[usize],
    out: &mut StageOutcome,
) -> Result<()> {
    let inst = eng.instance();
    let gamma = inst.params().gamma_sg;
    let q = inst.delta() as Color + 1;
    let trials: Vec<Trial> = nodes.iter().map(|&v| Trial::single(v, ColorSpace::Interval(1, q))).collect();
    let target = (gamma / 4.0 * inst.delta() as f64).floor() as usize;
    let cap = sparse_rounds(gamma);
    let mut rounds = 0u64;
    while rounds < cap && max_uncolored_degree(eng, coloring, nodes) > target {
        try_color(eng, "sparse", coloring, &trials, &[], gamma / 4.0, rounds, "sparse")?;
        rounds += 1;
    }
    out.gamma = Some(gamma);
    out.metric("try_color_rounds", rounds as f64);
    out.metric("round_cap", cap as f64);
    let r = multicolor_trial(eng, "sparse", coloring, &trials, &[], gamma, cap, "sparse")?;
    out.metric("mct_calls", f64::from(r.calls));
    Ok(())
}

/// The whole coloring pipeline: decomposition, slack generation, sparse nodes, non-cabals,
/// cabals, and the fallback on whatever is left. The result is always total and proper.
pub fn run_pipeline(eng: &mut Engine<'_>) -> Result<PipelineRun> {
    let inst = eng.instance();
    let params = inst.params().clone();
    let n = inst.num_clusters();
    let mut coloring = PartialColoring::new(n);
    let mut outcomes = Vec::new();
    let low_degree = (inst.delta() as f64) < params.delta_low;

    let mut labeling = if low_degree {
        AcdLabeling::all_sparse(n)
    } else {
        let (labeling, mut out) = staged(eng, "acd", &mut coloring, |e, _, out| {
            let mut labeling = compute_acd(e)?;
            degree_estimates(e, &mut labeling, params.delta, 0)?;
            classify(&mut labeling, &params);
            out.success = !labeling.repaired;
            out.retries = labeling.attempts.saturating_sub(1);
            Ok(labeling)
        })?;
        out.metric("cliques", labeling.cliques.len() as f64);
        out.metric("cabals", labeling.cliques.iter().filter(|c| c.cabal).count() as f64);
        out.metric("repaired", f64::from(u8::from(labeling.repaired)));
        outcomes.push(out);

        let (_, out) = staged_soft(eng, "slack-generation", &mut coloring, |e, phi, out| {
            out.gamma = Some(params.gamma_sg);
            let retries = slack_generation(e, &labeling, phi, SLACK_ACTIVATION)?;
            out.retries = retries;
            Ok(())
        })?;
        outcomes.push(out);
        labeling
    };

    let sparse = labeling.sparse();
    let (_, mut out) = staged_soft(eng, "sparse", &mut coloring, |e, phi, out| color_sparse(e, phi, &sparse, out))?;
    out.residual = ids(eng, sparse.iter().copied().filter(|&v| !coloring.is_colored(v)));
    outcomes.push(out);

    let mut cabals = CabalRun::default();
    if !low_degree {
        outcomes.extend(color_non_cabals(eng, &mut labeling, &mut coloring, 1)?);
        cabals = color_cabals(eng, &mut labeling, &mut coloring, 2)?;
        outcomes.extend(cabals.outcomes.iter().cloned());
    }

    let residual: Vec<usize> = coloring.uncolored().collect();
    let (finish, mut out) = staged(eng, FALLBACK_STAGE, &mut coloring, |e, phi, _| gather_finish(e, phi, &residual))?;
    out.metric("components", finish.components as f64);
    out.metric("largest_component", finish.largest as f64);
    outcomes.push(out);
    let fallback_used = finish.colored > 0;

    let proper = verify::check_proper(inst, &coloring);
    let total = verify::check_total(inst, &coloring, 0..n);
    if !proper.pass || !total.pass {
        let witness = proper.witnesses.iter().chain(&total.witnesses).next().cloned().unwrap_or_default();
        return Err(Error::Domain(format!("final coloring rejected by the verifier: {witness}")));
    }
    Ok(PipelineRun { coloring, labeling, outcomes, cabals, fallback_used, low_degree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BandwidthPolicy;
    use crate::netmodel::{generate_planted, Preset};

    #[test]
    fn empty_graph_gives_empty_coloring() {
        let inst = generate_planted(1, &Preset::SparseEr.spec(0, 0, 1));
        if let Ok(loaded) = inst {
            let mut eng = Engine::new(&loaded.instance, 1, BandwidthPolicy::Audit, false);
            let run = run_pipeline(&mut eng).unwrap();
            assert_eq!(run.coloring.len(), loaded.instance.num_clusters());
        }
    }

    #[test]
    fn same_seed_same_coloring() {
        let inst = generate_planted(5, &Preset::SparseEr.spec(2, 30, 1)).unwrap().instance;
        let a = run_pipeline(&mut Engine::new(&inst, 9, BandwidthPolicy::Audit, false)).unwrap();
        let b = run_pipeline(&mut Engine::new(&inst, 9, BandwidthPolicy::Audit, false)).unwrap();
        assert_eq!(a.coloring.colors(), b.coloring.colors());
        assert_eq!(a.outcomes, b.outcomes);
    }
}
