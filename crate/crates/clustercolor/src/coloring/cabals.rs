use crate::acd::{finalize_inliers, AcdLabeling};
use crate::coloring::complete::RESERVED_MCT_GAMMA;
use crate::coloring::matching::{colorful_matching_high, fingerprint_matching};
use crate::coloring::noncabals::{color_outliers, color_rich, run_sct, uncolored_of, OUTLIER_GAMMA};
use crate::coloring::trial::{multicolor_trial, ColorSpace, MctReport, Trial};
use crate::coloring::{ids, staged_soft, Color, PartialColoring, StageOutcome};
use crate::engine::Engine;
use crate::error::Result;
use crate::netmodel::ParamSet;
use crate::putaside::{color_put_aside_sets, compute_put_aside, PutAsideReport, PutAsideSets};
use crate::verify;

/// Slack fraction assumed by the anti-edge multi-color trials.
pub const CABAL_PAIR_GAMMA: f64 = 0.1;

/// Colors the anti-edges of a fingerprint matching: both endpoints of a pair try the same
/// colors of `[Δ+1] \ [excluded]` by multi-color trials.
pub fn colorful_matching_cabal(
    eng: &mut Engine<'_>,
    coloring: &mut PartialColoring,
    pairs: &[(usize, usize)],
    iteration: u64,
) -> Result<MctReport> {
    let inst = eng.instance();
    let q = inst.delta() as Color + 1;
    let excluded = inst.params().excluded_prefix(inst.delta());
    let trials: Vec<Trial> = pairs
        .iter()
        .filter(|&&(u, v)| !coloring.is_colored(u) && !coloring.is_colored(v))
        .map(|&(u, v)| Trial { nodes: vec![u.min(v), u.max(v)], space: ColorSpace::Interval(excluded + 1, q) })
        .collect();
    multicolor_trial(eng, "colorful-matching-cabal", coloring, &trials, &[], CABAL_PAIR_GAMMA, iteration, "colorful-matching-cabal")
}

/// Matching size below which a cabal cancels its matching and switches to fingerprints,
/// `C·log n / ε`.
pub fn low_matching_threshold(params: &ParamSet, n: usize) -> f64 {
    params.matching_c * f64::from(ParamSet::log_n(n)) / params.epsilon
}

#[derive(Clone, Debug, Default)]
pub struct CabalRun {
    pub outcomes: Vec<StageOutcome>,
    pub put_aside: Option<PutAsideSets>,
    pub report: Option<PutAsideReport>,
}

/// Cabal driver: colorful matching (with the fingerprint fallback), matching-rich cabals,
/// outliers, put-aside sets, the synchronized color trial on the other inliers, multi-color
/// trials on `[r]`, and finally the put-aside sets.
pub fn color_cabals(
    eng: &mut Engine<'_>,
    labeling: &mut AcdLabeling,
    coloring: &mut PartialColoring,
    iteration: u64,
) -> Result<CabalRun> {
    let inst = eng.instance();
    let params = inst.params().clone();
    let ks: Vec<usize> = (0..labeling.cliques.len()).filter(|&k| labeling.cliques[k].cabal).collect();
    if ks.is_empty() {
        return Ok(CabalRun::default());
    }
    let excluded = params.excluded_prefix(inst.delta());
    let mut outcomes = Vec::new();

    let lab: &AcdLabeling = labeling;
    let (_, out) = staged_soft(eng, "cabal-matching", coloring, |e, phi, out| {
        let m = colorful_matching_high(e, lab, phi, &ks, params.epsilon, excluded, iteration)?;
        let mut failures = 0;
        for &k in &ks {
            let colors = m.colors.get(&k).cloned().unwrap_or_default();
            if !verify::check_matching(inst, &lab.cliques[k].members, phi, &colors, excluded).pass {
                failures += 1;
            }
        }
        out.metric("audit_failures", f64::from(failures));
        out.success = failures == 0;
        Ok(m)
    })?;
    outcomes.push(out);

    let threshold = low_matching_threshold(&params, inst.n());
    let low: Vec<usize> =
        ks.iter().copied().filter(|&k| (verify::matching_size(&lab.cliques[k].members, coloring) as f64) < threshold).collect();
    if !low.is_empty() {
        for &k in &low {
            for &v in &lab.cliques[k].members {
                if coloring.provenance(v) == Some("colorful-matching") {
                    coloring.clear(v);
                }
            }
        }
        let (_, out) = staged_soft(eng, "fingerprint-matching", coloring, |e, phi, out| {
            let mut pairs = Vec::new();
            let mut trials = 0;
            for &k in &low {
                let c = &lab.cliques[k];
                let f = fingerprint_matching(e, &c.members, &c.tree, params.epsilon, iteration)?;
                trials = f.trials;
                pairs.extend(f.pairs);
            }
            out.gamma = Some(CABAL_PAIR_GAMMA);
            out.metric("cabals", low.len() as f64);
            out.metric("trials", trials as f64);
            out.metric("pairs", pairs.len() as f64);
            colorful_matching_cabal(e, phi, &pairs, iteration)
        })?;
        outcomes.push(out);
    }

    let exact = verify::exact_quantities(inst, labeling, coloring);
    let rich_threshold = 2.0 * params.epsilon * inst.delta() as f64;
    let (mut rich, mut rest) = (Vec::new(), Vec::new());
    let (mut held_09, mut held_eps) = (0usize, 0usize);
    for &k in &ks {
        let m = verify::matching_size(&labeling.cliques[k].members, coloring);
        finalize_inliers(labeling, k, m, &params);
        let satisfied = labeling.cliques[k].members.iter().filter(|&&v| exact.anti[v] as u64 <= m).count() as f64;
        let delta = inst.delta() as f64;
        held_09 += usize::from(satisfied >= 0.9 * delta);
        held_eps += usize::from(satisfied >= (1.0 - 10.0 * params.epsilon) * delta);
        if m as f64 >= rich_threshold {
            rich.push(k);
        } else {
            rest.push(k);
        }
    }
    if let Some(last) = outcomes.last_mut() {
        last.metric("hypothesis_09_held", held_09 as f64);
        last.metric("hypothesis_1_minus_10eps_held", held_eps as f64);
        last.metric("cabals", ks.len() as f64);
    }
    let lab: &AcdLabeling = labeling;

    if !rich.is_empty() {
        let (_, mut out) = staged_soft(eng, "cabal-matching-rich", coloring, |e, phi, _| color_rich(e, lab, phi, &rich, iteration))?;
        out.residual = ids(eng, uncolored_of(lab, coloring, &rich, |_| true));
        outcomes.push(out);
    }

    let outliers = uncolored_of(lab, coloring, &rest, |v| !lab.is_inlier(v));
    let (_, mut out) = staged_soft(eng, "cabal-outliers", coloring, |e, phi, out| {
        out.gamma = Some(OUTLIER_GAMMA);
        out.metric("outliers", outliers.len() as f64);
        color_outliers(e, lab, phi, &outliers, iteration)
    })?;
    out.residual = ids(eng, outliers.iter().copied().filter(|&v| !coloring.is_colored(v)));
    outcomes.push(out);

    let (put_aside, mut out) = staged_soft(eng, "put-aside", coloring, |e, phi, out| {
        let p = compute_put_aside(e, lab, phi, &rest, iteration)?;
        out.success = p.accepted;
        out.retries = p.attempts.saturating_sub(1);
        out.metric("accepted", f64::from(u8::from(p.accepted)));
        for (key, value) in &p.verdict.measured {
            out.metric(key, *value);
        }
        Ok(p)
    })?;
    let put_aside: PutAsideSets = match put_aside {
        Some(p) => p,
        None => {
            out.fallback = true;
            PutAsideSets {
                sets: rest.iter().map(|&k| (k, Vec::new())).collect(),
                verdict: verify::Verdict::new("put-aside"),
                attempts: 0,
                accepted: false,
            }
        }
    };
    outcomes.push(out);
    let in_p = |v: usize| lab.clique_of(v).is_some_and(|k| put_aside.sets.get(&k).is_some_and(|p| p.binary_search(&v).is_ok()));

    let sets: Vec<(usize, Vec<usize>)> =
        rest.iter().map(|&k| (k, uncolored_of(lab, coloring, &[k], |v| lab.is_inlier(v) && !in_p(v)))).collect();
    let (_, out) = staged_soft(eng, "cabal-sct", coloring, |e, phi, out| run_sct(e, lab, phi, &sets, iteration, out))?;
    outcomes.push(out);

    let (_, mut out) = staged_soft(eng, "cabal-mct", coloring, |e, phi, out| {
        let nodes = uncolored_of(lab, phi, &rest, |v| !in_p(v));
        let trials: Vec<Trial> = nodes
            .iter()
            .map(|&v| Trial::single(v, ColorSpace::Interval(1, lab.cliques[lab.clique_of(v).expect("dense")].reserved)))
            .collect();
        out.gamma = Some(RESERVED_MCT_GAMMA);
        out.metric("participants", nodes.len() as f64);
        let r = multicolor_trial(e, "cabal-mct", phi, &trials, &[], RESERVED_MCT_GAMMA, iteration, "cabal-mct")?;
        out.metric("calls", f64::from(r.calls));
        Ok(r)
    })?;
    out.residual = ids(eng, uncolored_of(lab, coloring, &rest, |v| !in_p(v)));
    outcomes.push(out);

    let (report, mut out) = staged_soft(eng, "put-aside-coloring", coloring, |e, phi, out| {
        let r = color_put_aside_sets(e, lab, phi, &put_aside, iteration)?;
        out.metric("ell_s", params.ell_s as f64);
        out.metric("block_size", params.block_size as f64);
        out.metric("free_branch", r.free_branch.len() as f64);
        out.metric("donor_branch", r.donor_branch.len() as f64);
        out.metric("donations", r.donations.iter().filter(|d| d.donor.is_some()).count() as f64);
        out.metric("audit_failures", r.audits.iter().filter(|a| !a.pass).count() as f64);
        out.metric("max_free_or_repeated", r.max_free_or_repeated as f64);
        out.metric("free_or_repeated_bound", 3.0 * params.ell_s as f64);
        out.success = r.residual.is_empty() && r.audits.iter().all(|a| a.pass);
        Ok(r)
    })?;
    let residual = uncolored_of(lab, coloring, &ks, |_| true);
    out.fallback |= !residual.is_empty();
    out.residual = ids(eng, residual);
    outcomes.push(out);
    Ok(CabalRun { outcomes, put_aside: Some(put_aside), report })
}
