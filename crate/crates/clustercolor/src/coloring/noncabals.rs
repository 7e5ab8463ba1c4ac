use crate::acd::{finalize_inliers, AcdLabeling};
use crate::coloring::complete::complete_non_cabals;
use crate::coloring::matching::colorful_matching_high;
use crate::coloring::sct::{synchronized_color_trial, SctJob};
use crate::coloring::trial::{multicolor_trial, try_color, ColorSpace, MctReport, Trial};
use crate::coloring::{ids, staged_soft, Color, PartialColoring, StageOutcome};
use crate::engine::Engine;
use crate::error::Result;
use crate::palette::{build_palette_view, CliquePaletteView};
use crate::verify;

/// Slack fraction assumed when coloring outliers and matching-rich cliques.
pub const OUTLIER_GAMMA: f64 = 0.25;
/// Random-trial rounds before the multi-color trials on outliers.
pub const OUTLIER_ROUNDS: u32 = 4;

/// A few rounds of random trials followed by multi-color trials.
#[allow(clippy::too_many_arguments)]
pub(crate) fn trials_then_mct(
    eng: &mut Engine<'_>,
    tag: &str,
    coloring: &mut PartialColoring,
    trials: &[Trial],
    gamma: f64,
    iteration: u64,
    provenance: &'static str,
) -> Result<MctReport> {
    for i in 0..OUTLIER_ROUNDS {
        try_color(eng, tag, coloring, trials, &[], gamma / 4.0, iteration * 100 + u64::from(i), provenance)?;
    }
    multicolor_trial(eng, tag, coloring, trials, &[], gamma, iteration * 100 + 99, provenance)
}

/// Colors the given dense outliers from `[Δ+1] \ [r_K]`.
pub fn color_outliers(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &mut PartialColoring,
    nodes: &[usize],
    iteration: u64,
) -> Result<MctReport> {
    let q = eng.instance().delta() as Color + 1;
    let trials: Vec<Trial> = nodes
        .iter()
        .filter(|&&v| !coloring.is_colored(v))
        .map(|&v| {
            let r = labeling.clique_of(v).map_or(0, |k| labeling.cliques[k].reserved);
            Trial::single(v, ColorSpace::Interval(r + 1, q))
        })
        .collect();
    trials_then_mct(eng, "outliers", coloring, &trials, OUTLIER_GAMMA, iteration, "outliers")
}

pub(crate) fn uncolored_of(labeling: &AcdLabeling, coloring: &PartialColoring, ks: &[usize], keep: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut out: Vec<usize> = ks
        .iter()
        .flat_map(|&k| labeling.cliques[k].members.iter().copied())
        .filter(|&v| !coloring.is_colored(v) && keep(v))
        .collect();
    out.sort_unstable();
    out
}

/// Colors whole matching-rich cliques from `[Δ+1]`.
pub(crate) fn color_rich(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &mut PartialColoring,
    rich: &[usize],
    iteration: u64,
) -> Result<MctReport> {
    let q = eng.instance().delta() as Color + 1;
    let nodes = uncolored_of(labeling, coloring, rich, |_| true);
    let trials: Vec<Trial> = nodes.iter().map(|&v| Trial::single(v, ColorSpace::Interval(1, q))).collect();
    trials_then_mct(eng, "matching-rich", coloring, &trials, OUTLIER_GAMMA, iteration, "matching-rich")
}

/// Builds palette views and runs the synchronized color trial on every listed clique with
/// `S = ` the given per-clique participant sets.
pub(crate) fn run_sct(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &mut PartialColoring,
    sets: &[(usize, Vec<usize>)],
    iteration: u64,
    out: &mut StageOutcome,
) -> Result<()> {
    let mut views: Vec<CliquePaletteView> = Vec::with_capacity(sets.len());
    for &(k, _) in sets {
        let c = &labeling.cliques[k];
        views.push(build_palette_view(eng, "sct-palette", &c.members, Some(&c.tree), coloring, iteration)?);
    }
    let jobs: Vec<SctJob<'_>> = sets
        .iter()
        .zip(&views)
        .map(|((k, set), view)| {
            let c = &labeling.cliques[*k];
            SctJob { members: &c.members, tree: &c.tree, set: set.clone(), reserved: c.reserved, view, e_k: c.e_tilde }
        })
        .collect();
    let reports = synchronized_color_trial(eng, coloring, &jobs, iteration)?;
    let mut worst = 0f64;
    let mut failures = 0;
    for r in &reports {
        out.retries = out.retries.max(r.attempts.saturating_sub(1));
        if r.bound.is_finite() && r.bound > 0.0 {
            worst = worst.max(r.residual.len() as f64 / r.bound);
        }
        if !r.success {
            failures += 1;
        }
    }
    out.metric("cliques", reports.len() as f64);
    out.metric("max_residual_over_bound", worst);
    out.metric("bound_failures", f64::from(failures));
    out.metric("trimmed", reports.iter().map(|r| r.trimmed).sum::<usize>() as f64);
    if failures > 0 {
        out.success = false;
    }
    Ok(())
}

/// Non-cabal driver: colorful matching, matching-rich cliques, outliers, the synchronized
/// color trial on inliers minus `r_K` of them, then the completion stage.
pub fn color_non_cabals(
    eng: &mut Engine<'_>,
    labeling: &mut AcdLabeling,
    coloring: &mut PartialColoring,
    iteration: u64,
) -> Result<Vec<StageOutcome>> {
    let inst = eng.instance();
    let params = inst.params().clone();
    let ks: Vec<usize> = (0..labeling.cliques.len()).filter(|&k| !labeling.cliques[k].cabal).collect();
    if ks.is_empty() {
        return Ok(Vec::new());
    }
    let excluded = params.excluded_prefix(inst.delta());
    let mut outcomes = Vec::new();

    let lab: &AcdLabeling = labeling;
    let (_, out) = staged_soft(eng, "colorful-matching", coloring, |e, phi, out| {
        let m = colorful_matching_high(e, lab, phi, &ks, params.epsilon, excluded, iteration)?;
        let mut failures = 0;
        let mut smallest = f64::INFINITY;
        for &k in &ks {
            let members = &lab.cliques[k].members;
            let colors = m.colors.get(&k).cloned().unwrap_or_default();
            if !verify::check_matching(inst, members, phi, &colors, excluded).pass {
                failures += 1;
            }
            smallest = smallest.min(m.sizes.get(&k).copied().unwrap_or(0) as f64);
        }
        out.metric("iterations", f64::from(m.iterations));
        out.metric("min_matching", smallest);
        out.metric("audit_failures", f64::from(failures));
        out.success = failures == 0;
        Ok(m)
    })?;
    outcomes.push(out);
    let threshold = 2.0 * params.epsilon * inst.delta() as f64;
    let mut rich = Vec::new();
    let mut rest = Vec::new();
    for &k in &ks {
        let m = verify::matching_size(&labeling.cliques[k].members, coloring);
        finalize_inliers(labeling, k, m, &params);
        if m as f64 >= threshold {
            rich.push(k);
        } else {
            rest.push(k);
        }
    }
    let lab: &AcdLabeling = labeling;

    if !rich.is_empty() {
        let (_, mut out) = staged_soft(eng, "matching-rich", coloring, |e, phi, _| color_rich(e, lab, phi, &rich, iteration))?;
        out.residual = ids(eng, uncolored_of(lab, coloring, &rich, |_| true));
        outcomes.push(out);
    }

    let outliers = uncolored_of(lab, coloring, &rest, |v| !lab.is_inlier(v));
    let (_, mut out) = staged_soft(eng, "outliers", coloring, |e, phi, out| {
        out.gamma = Some(OUTLIER_GAMMA);
        out.metric("outliers", outliers.len() as f64);
        color_outliers(e, lab, phi, &outliers, iteration)
    })?;
    out.residual = ids(eng, outliers.iter().copied().filter(|&v| !coloring.is_colored(v)));
    outcomes.push(out);

    let sets: Vec<(usize, Vec<usize>)> = rest
        .iter()
        .map(|&k| {
            let c = &lab.cliques[k];
            let inliers = uncolored_of(lab, coloring, &[k], |v| lab.is_inlier(v));
            let keep = inliers.len().saturating_sub(c.reserved as usize);
            (k, inliers[..keep].to_vec())
        })
        .collect();
    let (_, out) = staged_soft(eng, "sct", coloring, |e, phi, out| run_sct(e, lab, phi, &sets, iteration, out))?;
    outcomes.push(out);

    let (_, mut out) = staged_soft(eng, "complete", coloring, |e, phi, out| {
        out.gamma = Some(crate::coloring::reuse_gamma(&params));
        let r = complete_non_cabals(e, lab, phi, &rest, iteration)?;
        out.metric("phase_one_first", r.phase_one.first().copied().unwrap_or(0) as f64);
        out.metric("reserved_stage", r.reserved_stage as f64);
        out.metric("phase_two", r.phase_two as f64);
        Ok(r)
    })?;
    let residual = uncolored_of(lab, coloring, &ks, |_| true);
    out.fallback |= !residual.is_empty();
    out.residual = ids(eng, residual);
    outcomes.push(out);
    Ok(outcomes)
}
