use crate::coloring::{Color, PartialColoring};
use crate::engine::{Engine, MessageKind};
use crate::error::Result;
use crate::palette::{representative_sample, CliquePaletteView, ColorSet};

/// Colors a trial may draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    /// `[lo, hi]`, empty when `lo > hi`.
    Interval(Color, Color),
    /// Free colors of a clique palette view restricted to `[lo, hi]`.
    CliqueFree { view: usize, lo: Color, hi: Color },
}

impl ColorSpace {
    pub fn size(&self, views: &[CliquePaletteView]) -> u32 {
        match *self {
            Self::Interval(lo, hi) => (hi + 1).saturating_sub(lo),
            Self::CliqueFree { view, lo, hi } => {
                if lo > hi || lo < 1 {
                    0
                } else {
                    views[view].query_count(ColorSet::Free, lo, hi).unwrap_or(0)
                }
            }
        }
    }

    /// The `i`-th color (1-based).
    pub fn nth(&self, views: &[CliquePaletteView], i: u32) -> Result<Color> {
        match *self {
            Self::Interval(lo, _) => Ok(lo + i - 1),
            Self::CliqueFree { view, lo, hi } => views[view].query_ith(ColorSet::Free, i, lo, hi),
        }
    }

    pub fn colors(&self, views: &[CliquePaletteView]) -> Vec<Color> {
        match *self {
            Self::Interval(lo, hi) => (lo..=hi).collect(),
            Self::CliqueFree { view, lo, hi } => {
                views[view].free_colors().filter(|c| (lo..=hi).contains(c)).collect()
            }
        }
    }

    fn view(&self) -> Option<usize> {
        match *self {
            Self::Interval(..) => None,
            Self::CliqueFree { view, .. } => Some(view),
        }
    }
}

/// Clusters that must share one color: a single node, or both endpoints of an anti-edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub nodes: Vec<usize>,
    pub space: ColorSpace,
}

impl Trial {
    pub fn single(v: usize, space: ColorSpace) -> Self {
        Self { nodes: vec![v], space }
    }

    /// Smallest cluster index, which orders trials like their smallest ClusterId.
    pub fn key(&self) -> usize {
        self.nodes.iter().copied().min().unwrap_or(usize::MAX)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrialStats {
    pub active: usize,
    pub adopted: usize,
}

pub(crate) fn is_done(coloring: &PartialColoring, t: &Trial) -> bool {
    t.nodes.iter().all(|&v| coloring.is_colored(v))
}

fn free_for(eng: &Engine<'_>, coloring: &PartialColoring, t: &Trial, c: Color) -> bool {
    let inst = eng.instance();
    t.nodes.iter().all(|&v| inst.neighbors(v).iter().all(|&u| coloring.get(u) != Some(c)))
}

/// Trials adjacent to each trial, through any pair of their nodes.
fn trial_adjacency(eng: &Engine<'_>, trials: &[Trial], live: &[usize]) -> Vec<Vec<usize>> {
    let inst = eng.instance();
    let mut owner = vec![usize::MAX; inst.num_clusters()];
    for &t in live {
        for &v in &trials[t].nodes {
            owner[v] = t;
        }
    }
    let mut adj = vec![Vec::new(); trials.len()];
    for &t in live {
        let mut out: Vec<usize> = trials[t]
            .nodes
            .iter()
            .flat_map(|&v| inst.neighbors(v).iter().map(|&u| owner[u]))
            .filter(|&o| o != usize::MAX && o != t)
            .collect();
        out.sort_unstable();
        out.dedup();
        adj[t] = out;
    }
    adj
}

fn nodes_of(trials: &[Trial], which: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = which.iter().flat_map(|&t| trials[t].nodes.iter().copied()).collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn charge_view_queries(
    eng: &mut Engine<'_>,
    tag: &str,
    trials: &[Trial],
    which: &[usize],
    views: &[CliquePaletteView],
    answer_bits: impl Fn(usize) -> u64,
) -> Result<()> {
    let mut per_view: Vec<Vec<(usize, u64)>> = vec![Vec::new(); views.len()];
    for &t in which {
        if let Some(i) = trials[t].space.view() {
            for &v in &trials[t].nodes {
                per_view[i].push((v, answer_bits(t)));
            }
        }
    }
    for (i, askers) in per_view.iter_mut().enumerate() {
        if askers.is_empty() {
            continue;
        }
        askers.sort_unstable();
        let bits = askers.iter().map(|a| a.1).max().unwrap_or(0);
        let ids: Vec<usize> = askers.iter().map(|a| a.0).collect();
        views[i].charge_queries(eng, tag, &ids, bits)?;
    }
    Ok(())
}

/// One round of random color trials: each live trial activates with probability `activation`,
/// draws a uniform color of its space, and keeps it when it is free and no adjacent trial with
/// a smaller identifier drew the same color.
#[allow(clippy::too_many_arguments)]
pub fn try_color(
    eng: &mut Engine<'_>,
    tag: &str,
    coloring: &mut PartialColoring,
    trials: &[Trial],
    views: &[CliquePaletteView],
    activation: f64,
    iteration: u64,
    provenance: &'static str,
) -> Result<TrialStats> {
    let inst = eng.instance();
    let live: Vec<usize> = (0..trials.len()).filter(|&t| !is_done(coloring, &trials[t])).collect();
    let mut pick: Vec<Option<Color>> = vec![None; trials.len()];
    let mut active = Vec::new();
    for &t in &live {
        let mut rng = eng.rng(tag, inst.cluster_id(trials[t].key()).0, iteration);
        if !rng.bernoulli(activation) {
            continue;
        }
        let size = trials[t].space.size(views);
        if size == 0 {
            continue;
        }
        let i = 1 + rng.below(u64::from(size)) as u32;
        pick[t] = Some(trials[t].space.nth(views, i)?);
        active.push(t);
    }
    let cbits = eng.color_bits();
    charge_view_queries(eng, tag, trials, &active, views, |_| cbits)?;
    let senders = nodes_of(trials, &active);
    eng.h_round(tag, MessageKind::Unit, &senders, cbits, 1)?;

    let adj = trial_adjacency(eng, trials, &active);
    let mut adopters = Vec::new();
    for &t in &active {
        let c = pick[t].expect("active trials picked");
        let beaten = adj[t].iter().any(|&o| pick[o] == Some(c) && trials[o].key() < trials[t].key());
        if !beaten && free_for(eng, coloring, &trials[t], c) {
            adopters.push(t);
        }
    }
    for &t in &adopters {
        let c = pick[t].expect("adopters picked");
        for &v in &trials[t].nodes {
            coloring.set(v, c, provenance);
        }
    }
    let announce = nodes_of(trials, &adopters);
    eng.exchange(tag, MessageKind::Unit, announce, |_, _| Some(cbits))?;
    Ok(TrialStats { active: active.len(), adopted: adopters.len() })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MctReport {
    pub calls: u32,
    pub max_calls: u32,
    pub adopted: usize,
    /// Indices of trials still uncolored.
    pub residual: Vec<usize>,
    /// Fraction of trials meeting the slack condition when the stage started.
    pub slack_condition: f64,
    pub largest_x: u64,
}

/// `|L(t) ∩ C(t)|` over the current coloring.
fn available(eng: &Engine<'_>, coloring: &PartialColoring, t: &Trial, space: &[Color]) -> Vec<Color> {
    let inst = eng.instance();
    let mut free = vec![true; inst.delta() + 2];
    for &v in &t.nodes {
        for &u in inst.neighbors(v) {
            if let Some(c) = coloring.get(u) {
                free[c as usize] = false;
            }
        }
    }
    space.iter().copied().filter(|&c| free[c as usize]).collect()
}

/// Multi-color trials with pseudorandom color sets.
///
/// Trial sizes double from 1 up to what one message carries, each size repeated ⌈2γ⁻¹ln 2⌉
/// times, followed by 4 more such batches at the largest size. Each live trial's sizes are also
/// capped by its own slack, `|L ∩ C| / (2(d + 1))` with `d` its number of live neighbors.
#[allow(clippy::too_many_arguments)]
pub fn multicolor_trial(
    eng: &mut Engine<'_>,
    tag: &str,
    coloring: &mut PartialColoring,
    trials: &[Trial],
    views: &[CliquePaletteView],
    gamma: f64,
    iteration: u64,
    provenance: &'static str,
) -> Result<MctReport> {
    let inst = eng.instance();
    let cbits = eng.color_bits().max(1);
    let x_cap = (eng.budget() / cbits).max(1);
    let per_size = (2.0 * std::f64::consts::LN_2 / gamma).ceil().max(1.0) as u32;
    let levels = 64 - (x_cap - 1).leading_zeros().min(64) + 1;
    let max_calls = per_size * (levels + 4);
    let nu = (inst.n().max(2) as f64).powf(-inst.params().c_prob);
    let ell = inst.params().ell;
    let spaces: Vec<Vec<Color>> = trials.iter().map(|t| t.space.colors(views)).collect();

    let mut report = MctReport { max_calls, ..MctReport::default() };
    let mut live: Vec<usize> = (0..trials.len()).filter(|&t| !is_done(coloring, &trials[t])).collect();
    if live.is_empty() {
        return Ok(report);
    }
    {
        let adj = trial_adjacency(eng, trials, &live);
        let ok = live
            .iter()
            .filter(|&&t| {
                let avail = available(eng, coloring, &trials[t], &spaces[t]).len() as f64;
                let d = adj[t].len() as f64;
                avail - d >= (2.0 * d).max(ell) + gamma * spaces[t].len() as f64
            })
            .count();
        report.slack_condition = ok as f64 / live.len() as f64;
    }

    for call in 0..max_calls {
        if live.is_empty() {
            break;
        }
        report.calls = call + 1;
        let x_sched = (1u64 << (call / per_size).min(62)).min(x_cap);
        let adj = trial_adjacency(eng, trials, &live);
        let mut tried: Vec<Vec<Color>> = vec![Vec::new(); trials.len()];
        let mut avail_of: Vec<Vec<Color>> = vec![Vec::new(); trials.len()];
        let round = (iteration << 16) | u64::from(call);
        for &t in &live {
            let avail = available(eng, coloring, &trials[t], &spaces[t]);
            let m = spaces[t].len();
            if avail.is_empty() || m == 0 {
                continue;
            }
            let slack_cap = (avail.len() / (2 * (adj[t].len() + 1))).max(1) as u64;
            let x = x_sched.min(slack_cap);
            report.largest_x = report.largest_x.max(x);
            let mut rng = eng.rng(tag, inst.cluster_id(trials[t].key()).0, round);
            let sample = representative_sample(m as u64, 0.5, gamma / 2.0, nu, rng.below(u64::MAX));
            let mut xs = Vec::with_capacity(x as usize);
            for _ in 0..x {
                let pos = rng.below(sample.size as u64) as usize;
                let c = spaces[t][sample.member(pos) as usize - 1];
                if !xs.contains(&c) {
                    xs.push(c);
                }
            }
            tried[t] = xs;
            avail_of[t] = avail;
        }
        let senders: Vec<usize> = live.iter().copied().filter(|&t| !tried[t].is_empty()).collect();
        charge_view_queries(eng, tag, trials, &senders, views, |t| tried[t].len() as u64 * cbits)?;
        let mut bits_of = vec![0u64; inst.num_clusters()];
        for &t in &senders {
            for &v in &trials[t].nodes {
                bits_of[v] = tried[t].len() as u64 * cbits;
            }
        }
        let nodes = nodes_of(trials, &senders);
        let items: Vec<(usize, u64)> = nodes.iter().map(|&v| (v, bits_of[v])).collect();
        eng.broadcast(tag, MessageKind::Unit, &items)?;
        eng.exchange(tag, MessageKind::Unit, nodes.iter().copied(), |src, _| Some(bits_of[src]))?;
        let replies: Vec<(usize, u64)> = nodes.iter().map(|&v| (v, (bits_of[v] / cbits).max(1))).collect();
        eng.convergecast(tag, MessageKind::Unit, &replies)?;

        let mut adopters = Vec::new();
        for &t in &senders {
            let choice = tried[t].iter().copied().find(|c| {
                avail_of[t].binary_search(c).is_ok() && adj[t].iter().all(|&o| !tried[o].contains(c))
            });
            if let Some(c) = choice {
                adopters.push((t, c));
            }
        }
        for &(t, c) in &adopters {
            for &v in &trials[t].nodes {
                coloring.set(v, c, provenance);
            }
        }
        report.adopted += adopters.len();
        let done: Vec<usize> = adopters.iter().map(|a| a.0).collect();
        let announce = nodes_of(trials, &done);
        eng.exchange(tag, MessageKind::Unit, announce, |_, _| Some(cbits))?;
        live.retain(|&t| !is_done(coloring, &trials[t]));
    }
    report.residual = live;
    Ok(report)
}

/// Number of try_color rounds of the sparse stage: ⌈(64/γ⁴)·ln(4/γ)⌉.
pub fn sparse_rounds(gamma: f64) -> u64 {
    (64.0 / gamma.powi(4) * (4.0 / gamma).ln()).ceil() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BandwidthPolicy;
    use crate::netmodel::{build_instance, ClusterPartition, CommGraph, Instance, MachineId, ParamSet};

    fn graph(n: u64, edges: &[(u64, u64)]) -> Instance {
        let comm = CommGraph::new(
            (0..n).map(MachineId).collect(),
            &edges.iter().map(|&(a, b)| (MachineId(a), MachineId(b))).collect::<Vec<_>>(),
        )
        .unwrap();
        let groups: Vec<Vec<MachineId>> = (0..n).map(|m| vec![MachineId(m)]).collect();
        build_instance(comm, ClusterPartition::from_groups(&groups).unwrap(), ParamSet::desk()).unwrap()
    }

    #[test]
    fn lone_node_takes_only_color() {
        let inst = graph(1, &[]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(1);
        let trials = [Trial::single(0, ColorSpace::Interval(1, 1))];
        let s = try_color(&mut eng, "tc", &mut phi, &trials, &[], 1.0, 0, "t").unwrap();
        assert_eq!(s, TrialStats { active: 1, adopted: 1 });
        assert_eq!(phi.get(0), Some(1));
    }

    #[test]
    fn smaller_id_wins_ties() {
        let inst = graph(2, &[(0, 1)]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(2);
        let trials = [Trial::single(0, ColorSpace::Interval(3, 3)), Trial::single(1, ColorSpace::Interval(3, 3))];
        try_color(&mut eng, "tc", &mut phi, &trials, &[], 1.0, 0, "t").unwrap();
        assert_eq!(phi.get(0), Some(3));
        assert_eq!(phi.get(1), None);
    }

    #[test]
    fn taken_color_is_refused() {
        let inst = graph(2, &[(0, 1)]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(2);
        phi.set(0, 2, "x");
        let trials = [Trial::single(1, ColorSpace::Interval(2, 2))];
        let s = try_color(&mut eng, "tc", &mut phi, &trials, &[], 1.0, 0, "t").unwrap();
        assert_eq!(s.adopted, 0);
    }

    #[test]
    fn mct_on_empty_set_is_free() {
        let inst = graph(2, &[(0, 1)]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(2);
        let r = multicolor_trial(&mut eng, "mct", &mut phi, &[], &[], 0.2, 0, "t").unwrap();
        assert_eq!(r.calls, 0);
        assert_eq!(eng.ledger().rounds(), 0);
    }

    #[test]
    fn mct_single_node_first_call() {
        let inst = graph(1, &[]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(1);
        let trials = [Trial::single(0, ColorSpace::Interval(1, 1))];
        let r = multicolor_trial(&mut eng, "mct", &mut phi, &trials, &[], 0.2, 0, "t").unwrap();
        assert_eq!(r.calls, 1);
        assert_eq!(phi.get(0), Some(1));
    }

    #[test]
    fn pair_shares_one_color() {
        // 0 and 2 are non-adjacent; 1 sits between them.
        let inst = graph(3, &[(0, 1), (1, 2)]);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(3);
        phi.set(1, 1, "x");
        let trials = [Trial { nodes: vec![0, 2], space: ColorSpace::Interval(1, 3) }];
        multicolor_trial(&mut eng, "mct", &mut phi, &trials, &[], 0.2, 0, "t").unwrap();
        assert!(phi.get(0).is_some());
        assert_eq!(phi.get(0), phi.get(2));
        assert_ne!(phi.get(0), Some(1));
    }

    #[test]
    fn sparse_round_count() {
        assert_eq!(sparse_rounds(1.0), (64.0f64 * 4f64.ln()).ceil() as u64);
    }
}
