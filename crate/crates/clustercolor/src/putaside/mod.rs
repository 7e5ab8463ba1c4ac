//! Put-aside sets in cabals and the donation step that colors them last.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::acd::AcdLabeling;
use crate::coloring::{Color, PartialColoring};
use crate::engine::{Engine, MachineTree, MessageKind};
use crate::error::{Error, Result};
use crate::fingerprint::{encoded_len, estimate_from_maxima, FingerprintVector, SketchTable};
use crate::netmodel::{ClusterId, Instance, ParamSet};
use crate::palette::{build_palette_view, collision_free_hash, CliquePaletteView, ColorSet};
use crate::verify::{self, Verdict};

/// `⌈log₂ x⌉`, at least 1.
fn bit_len(x: u64) -> u64 {
    u64::from(64 - x.saturating_sub(1).leading_zeros()).max(1)
}

/// Samples per put-aside node, `⌈log n / log log n⌉`.
pub fn donation_samples(n: usize) -> usize {
    let lg = f64::from(ParamSet::log_n(n));
    (lg / lg.log2().max(1.0)).ceil().max(1.0) as usize
}

/// Number of `b`-color blocks covering `[Δ+1]`.
pub fn num_blocks(q: Color, block_size: u64) -> u32 {
    u64::from(q).div_ceil(block_size.max(1)) as u32
}

/// 1-based block of color `c`.
pub fn block_of(c: Color, block_size: u64) -> u32 {
    ((u64::from(c) - 1) / block_size.max(1)) as u32 + 1
}

/// Bits of one donation message: block index plus one offset per sampled color.
pub fn donation_message_bits(q: Color, block_size: u64, samples: usize) -> u64 {
    bit_len(u64::from(num_blocks(q, block_size))) + samples as u64 * bit_len(block_size)
}

/// Largest logical donation message allowed by the ledger.
pub fn donation_budget(delta: usize, block_size: u64, samples: usize) -> u64 {
    bit_len(delta as u64) + samples as u64 * bit_len(block_size) + 8
}

fn owners(labeling: &AcdLabeling, cabals: impl IntoIterator<Item = usize>, n: usize) -> Vec<usize> {
    let mut owner = vec![usize::MAX; n];
    for k in cabals {
        for &v in &labeling.cliques[k].members {
            owner[v] = k;
        }
    }
    owner
}

#[derive(Clone, Debug, PartialEq)]
pub struct PutAsideSets {
    /// `P_K` per cabal index, ascending.
    pub sets: BTreeMap<usize, Vec<usize>>,
    pub verdict: Verdict,
    pub attempts: u32,
    /// Some attempt passed the exact check.
    pub accepted: bool,
}

/// Put-aside sets in the listed cabals.
///
/// Uncolored inliers become candidates with probability `p = c·ℓ²/Δ`, candidates adjacent to
/// a candidate of another cabal drop out, survivors are kept with probability `c'/ℓ`, and the
/// set is trimmed to `r_K` preferring members with fewer neighbors in other cabals. Every
/// attempt is checked exactly; after the retry limit the last attempt is returned unaccepted.
/// The prune makes `P_K`–`P_K'` edges impossible, so even an unaccepted result is safe to
/// color last.
pub fn compute_put_aside(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &PartialColoring,
    cabals: &[usize],
    iteration: u64,
) -> Result<PutAsideSets> {
    let inst = eng.instance();
    let params = inst.params().clone();
    let n = inst.num_clusters();
    let p = (params.put_aside_candidate * params.ell * params.ell / inst.delta().max(1) as f64).min(1.0);
    let keep = (params.put_aside_subsample / params.ell).min(1.0);
    let owner = owners(labeling, cabals.iter().copied(), n);
    let foreign = |v: usize, u: usize| owner[u] != usize::MAX && owner[u] != owner[v];
    let tag = "put-aside";

    // Everyone learns which neighbors sit in which cabal.
    let word = eng.word();
    let listed: Vec<usize> = cabals.iter().flat_map(|&k| labeling.cliques[k].members.iter().copied()).collect();
    eng.exchange(tag, MessageKind::Unit, listed.iter().copied(), |_, _| Some(word))?;
    let trees: Vec<&MachineTree> = cabals.iter().map(|&k| &labeling.cliques[k].tree).collect();

    let mut last = None;
    for attempt in 0..=params.retries {
        let it = iteration * 100 + u64::from(attempt);
        let mut candidate = vec![false; n];
        for &v in &listed {
            if !coloring.is_colored(v) && labeling.is_inlier(v) {
                candidate[v] = eng.rng(tag, inst.cluster_id(v).0, it).bernoulli(p);
            }
        }
        let announcing: Vec<usize> = listed.iter().copied().filter(|&v| candidate[v]).collect();
        eng.h_round(tag, MessageKind::Unit, &announcing, 1, 1)?;

        let mut sets = BTreeMap::new();
        let mut ranks = BTreeMap::new();
        for &k in cabals {
            let members = &labeling.cliques[k].members;
            let mut chosen: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&v| candidate[v] && !inst.neighbors(v).iter().any(|&u| foreign(v, u) && candidate[u]))
                .filter(|&v| eng.rng("put-aside-subsample", inst.cluster_id(v).0, it).bernoulli(keep))
                .collect();
            chosen.sort_by_key(|&v| (inst.neighbors(v).iter().filter(|&&u| foreign(v, u)).count(), inst.cluster_id(v)));
            chosen.truncate(labeling.cliques[k].reserved as usize);
            chosen.sort_unstable();
            for &v in &chosen {
                ranks.insert(inst.leader(v), 1i64);
            }
            sets.insert(k, chosen);
        }
        eng.prefix_sums(&trees, &ranks)?;
        eng.forest_cast(tag, MessageKind::Unit, &trees, |_| 1, true)?;

        let triples: Vec<(&[usize], &[usize], u32)> = cabals
            .iter()
            .map(|&k| (labeling.cliques[k].members.as_slice(), sets[&k].as_slice(), labeling.cliques[k].reserved))
            .collect();
        let verdict = verify::check_put_aside(inst, &triples);
        let accepted = verdict.pass;
        let out = PutAsideSets { sets, verdict, attempts: attempt + 1, accepted };
        if accepted {
            return Ok(out);
        }
        last = Some(out);
    }
    Ok(last.expect("at least one attempt"))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FreeColorOutcome {
    pub assigned: Vec<(usize, Color)>,
    /// Put-aside nodes none of whose picks was safe.
    pub failed: Vec<usize>,
}

/// Colors put-aside nodes from the `ℓ_s` smallest free colors of their clique.
///
/// A hash collision-free on those colors is broadcast; each node samples `k` indices, learns
/// the hashes, and keeps the first one not blocked by an external neighbor's hash nor picked
/// by a put-aside node of smaller index. Applicable iff `|L_φ(K)| ≥ ℓ_s`.
#[allow(clippy::too_many_arguments)]
pub fn try_free_colors(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &mut PartialColoring,
    k: usize,
    uncolored: &[usize],
    view: &CliquePaletteView,
    iteration: u64,
) -> Result<FreeColorOutcome> {
    let inst = eng.instance();
    let ell_s = inst.params().ell_s as usize;
    let tag = "try-free-colors";
    let clique = &labeling.cliques[k];
    if (view.free_count() as usize) < ell_s {
        return Err(Error::Domain(format!("clique has {} free colors, fewer than {ell_s}", view.free_count())));
    }
    let mut out = FreeColorOutcome::default();
    if uncolored.is_empty() {
        return Ok(out);
    }
    let (hash, domain) = collision_free_hash(eng, tag, view, ell_s, iteration)?;
    let desc = hash.description_bits();
    let hbits = bit_len(4 * (ell_s as u64).pow(2));
    let cbits = eng.color_bits();
    let samples = donation_samples(inst.n());
    eng.forest_cast(tag, MessageKind::Unit, &[&clique.tree], |_| desc, false)?;

    let outside = |u: usize| labeling.clique_of(u) != Some(k);
    view.charge_queries(eng, tag, uncolored, samples as u64 * hbits)?;
    let in_set: BTreeSet<usize> = uncolored.iter().copied().collect();
    eng.exchange(tag, MessageKind::Unit, uncolored.iter().copied(), |_, dst| outside(dst).then_some(desc))?;
    let mut repliers: Vec<usize> = uncolored.iter().flat_map(|&u| inst.neighbors(u).iter().copied()).filter(|&w| outside(w)).collect();
    repliers.sort_unstable();
    repliers.dedup();
    eng.exchange(tag, MessageKind::Unit, repliers, |_, dst| in_set.contains(&dst).then_some(hbits))?;
    let picks_bits = (uncolored.len() * samples) as u64 * hbits;
    eng.forest_cast(tag, MessageKind::Bulk, &[&clique.tree], |_| picks_bits, true)?;
    eng.forest_cast(tag, MessageKind::Bulk, &[&clique.tree], |_| picks_bits, false)?;

    let mut taken: BTreeSet<u64> = BTreeSet::new();
    for &u in uncolored {
        let blocked: BTreeSet<u64> = inst
            .neighbors(u)
            .iter()
            .filter(|&&w| outside(w))
            .filter_map(|&w| coloring.get(w))
            .map(|c| hash.evaluate(u64::from(c)))
            .collect();
        let mut rng = eng.rng(tag, inst.cluster_id(u).0, iteration);
        let picks: Vec<usize> = (0..samples).map(|_| rng.below(domain.len() as u64) as usize).collect();
        let choice = picks.into_iter().find(|&i| {
            let h = hash.evaluate(u64::from(domain[i]));
            !blocked.contains(&h) && !taken.contains(&h)
        });
        match choice {
            Some(i) => {
                taken.insert(hash.evaluate(u64::from(domain[i])));
                out.assigned.push((u, domain[i]));
            }
            None => out.failed.push(u),
        }
    }
    let askers: Vec<usize> = out.assigned.iter().map(|a| a.0).collect();
    view.charge_queries(eng, tag, &askers, cbits)?;
    for &(u, c) in &out.assigned {
        coloring.set(u, c, "put-aside-free");
    }
    eng.exchange(tag, MessageKind::Unit, askers, |_, _| Some(cbits))?;
    Ok(out)
}

/// Candidate donors `Q_K` for the listed cabals (those with fewer than `ℓ_s` free colors).
///
/// Colored inliers outside `P_K` with no neighbor in another cabal's put-aside set activate
/// with probability `c·ℓ_s³/b`; active nodes with a unique color in `K` and no active
/// neighbor in another listed cabal are kept.
pub fn find_candidate_donors(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &PartialColoring,
    cabals: &[usize],
    put_aside: &BTreeMap<usize, Vec<usize>>,
    iteration: u64,
) -> Result<BTreeMap<usize, Vec<usize>>> {
    let inst = eng.instance();
    let params = inst.params();
    let n = inst.num_clusters();
    let tag = "find-candidate-donors";
    let q = inst.delta() as Color + 1;
    let mut in_p = vec![usize::MAX; n];
    for (&k, p) in put_aside {
        for &v in p {
            in_p[v] = k;
        }
    }
    let owner = owners(labeling, cabals.iter().copied(), n);
    let p_active = (params.donor_activation * (params.ell_s as f64).powi(3) / params.block_size as f64).min(1.0);
    let all_p: Vec<usize> = put_aside.values().flatten().copied().collect();
    eng.exchange(tag, MessageKind::Unit, all_p, |_, _| Some(1))?;

    let mut active = vec![false; n];
    let mut pre = Vec::new();
    for &k in cabals {
        for &v in &labeling.cliques[k].members {
            let exposed = inst.neighbors(v).iter().any(|&u| in_p[u] != usize::MAX && in_p[u] != k);
            if coloring.is_colored(v) && labeling.is_inlier(v) && in_p[v] == usize::MAX && !exposed {
                pre.push(v);
                active[v] = eng.rng(tag, inst.cluster_id(v).0, iteration).bernoulli(p_active);
            }
        }
    }
    let actives: Vec<usize> = pre.iter().copied().filter(|&v| active[v]).collect();
    eng.h_round(tag, MessageKind::Unit, &actives, 1, 1)?;
    // Uniqueness: per-color multiplicity (0, 1, 2+) aggregated on each clique tree.
    let trees: Vec<&MachineTree> = cabals.iter().map(|&k| &labeling.cliques[k].tree).collect();
    eng.forest_cast(tag, MessageKind::Bulk, &trees, |_| 2 * u64::from(q), true)?;
    eng.forest_cast(tag, MessageKind::Bulk, &trees, |_| 2 * u64::from(q), false)?;

    let mut out = BTreeMap::new();
    for &k in cabals {
        let members = &labeling.cliques[k].members;
        let mut count: BTreeMap<Color, usize> = BTreeMap::new();
        for c in members.iter().filter_map(|&v| coloring.get(v)) {
            *count.entry(c).or_default() += 1;
        }
        let q_k: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&v| active[v])
            .filter(|&v| coloring.get(v).is_some_and(|c| count[&c] == 1))
            .filter(|&v| !inst.neighbors(v).iter().any(|&u| active[u] && owner[u] != usize::MAX && owner[u] != k))
            .collect();
        out.insert(k, q_k);
    }
    Ok(out)
}

/// Replacement color, block and safe donors for one put-aside node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeDonors {
    pub recolor: Color,
    /// 1-based block holding every donor's color.
    pub block: u32,
    /// Donors, ascending by identifier, exactly `ℓ_s` of them.
    pub donors: Vec<usize>,
}

/// Safe donors for the `needed` put-aside nodes of clique `k`.
///
/// Each candidate samples a uniform color of `L_φ(K)` and keeps it only if it is in its own
/// palette. For every (color, block) pair the number of keepers is estimated by fingerprints
/// at precision 1/2; the first block with an estimate above `2ℓ_s` is selected per color, and
/// the first `needed` colors with a selected block become replacement colors.
#[allow(clippy::too_many_arguments)]
pub fn find_safe_donors(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &PartialColoring,
    k: usize,
    candidates: &[usize],
    view: &CliquePaletteView,
    needed: usize,
    iteration: u64,
) -> Result<Vec<SafeDonors>> {
    let inst = eng.instance();
    let params = inst.params().clone();
    let tag = "find-safe-donors";
    let q = inst.delta() as Color + 1;
    let ell_s = params.ell_s as usize;
    let b = params.block_size;
    let blocks = num_blocks(q, b);
    let free: Vec<Color> = view.free_colors().collect();
    let tree = &labeling.cliques[k].tree;
    if needed == 0 {
        return Ok(Vec::new());
    }
    if free.is_empty() {
        return Err(Error::StageFailed { stage: tag.into(), retries: 0 });
    }
    let cbits = eng.color_bits();
    let t = params.sketch_length(0.5, inst.n());
    for attempt in 0..=params.retries {
        let it = iteration * 100 + u64::from(attempt);
        let mut sampled: BTreeMap<usize, Color> = BTreeMap::new();
        for &v in candidates {
            let idx = eng.rng(tag, inst.cluster_id(v).0, it).below(free.len() as u64) as u32 + 1;
            let c = view.query_ith(ColorSet::Free, idx, 1, q)?;
            if inst.neighbors(v).iter().all(|&u| coloring.get(u) != Some(c)) {
                sampled.insert(v, c);
            }
        }
        view.charge_queries(eng, tag, candidates, cbits)?;
        eng.h_round(tag, MessageKind::Unit, candidates, cbits, 1)?;

        let mut samplers = vec![false; inst.num_clusters()];
        for &v in sampled.keys() {
            samplers[v] = true;
        }
        let table = SketchTable::sample(eng, tag, t, &samplers, it);
        let mut groups: BTreeMap<(Color, u32), (FingerprintVector, Vec<usize>)> = BTreeMap::new();
        for (&v, &c) in &sampled {
            let j = block_of(coloring.get(v).expect("donors are colored"), b);
            let entry = groups.entry((c, j)).or_insert_with(|| (FingerprintVector::empty(t), Vec::new()));
            entry.0 = entry.0.merged(&table.vector(v));
            entry.1.push(v);
        }
        let group_count = free.len() as u64 * u64::from(blocks);
        let fp_bits = groups.values().map(|g| encoded_len(&g.0) as u64).max().unwrap_or(1);
        eng.forest_cast(tag, MessageKind::Bulk, &[tree], |_| group_count * fp_bits, true)?;
        eng.forest_cast(tag, MessageKind::Bulk, &[tree], |_| group_count, false)?;
        let ranks: BTreeMap<usize, i64> = sampled.keys().map(|&v| (inst.leader(v), 1)).collect();
        eng.prefix_sums(&[tree], &ranks)?;

        let mut chosen = Vec::new();
        for &c in &free {
            let block = (1..=blocks).find(|&j| groups.get(&(c, j)).is_some_and(|g| estimate_from_maxima(&g.0) > 2.0 * ell_s as f64));
            let Some(j) = block else { continue };
            let mut donors = groups[&(c, j)].1.clone();
            donors.sort_by_key(|&v| inst.cluster_id(v));
            if donors.len() < ell_s {
                continue;
            }
            donors.truncate(ell_s);
            chosen.push(SafeDonors { recolor: c, block: j, donors });
            if chosen.len() == needed {
                return Ok(chosen);
            }
        }
    }
    Err(Error::StageFailed { stage: tag.into(), retries: params.retries })
}

/// Trace entry for one put-aside node's donation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonationRecord {
    pub clique: ClusterId,
    pub node: ClusterId,
    pub block: u32,
    pub recolor: Color,
    pub attempt: u32,
    pub sampled: Vec<ClusterId>,
    /// One entry per sampled donor: its color is held by an external neighbor.
    pub conflicts: Vec<bool>,
    pub donor: Option<ClusterId>,
    pub donated: Option<Color>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DonationOutcome {
    pub records: Vec<DonationRecord>,
    /// Swap audit of the commit.
    pub audit: Verdict,
    pub committed: bool,
    pub residual: Vec<usize>,
}

/// Donations for the uncolored put-aside nodes of clique `k`, `uncolored[i]` served by
/// `triples[i]`.
///
/// Each node samples `k` donors of its set with replacement, sends their offsets in its block
/// to its external neighbors, and takes the first donated color none of them holds. The donor
/// switches to the replacement color. The swap is committed only if the exact audit passes.
#[allow(clippy::too_many_arguments)]
pub fn donate_colors(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &mut PartialColoring,
    k: usize,
    uncolored: &[usize],
    triples: &[SafeDonors],
    iteration: u64,
) -> Result<DonationOutcome> {
    let inst = eng.instance();
    let params = inst.params().clone();
    let tag = "donation";
    let q = inst.delta() as Color + 1;
    let samples = donation_samples(inst.n());
    let msg = donation_message_bits(q, params.block_size, samples);
    eng.declare_budget(tag, donation_budget(inst.delta(), params.block_size, samples));
    let clique = &labeling.cliques[k];
    let outside = |u: usize| labeling.clique_of(u) != Some(k);
    let word = eng.word();
    eng.forest_cast("donation-setup", MessageKind::Unit, &[&clique.tree], |_| word, true)?;
    eng.forest_cast("donation-setup", MessageKind::Unit, &[&clique.tree], |_| word, false)?;

    let mut records = Vec::new();
    let mut swaps: Vec<(usize, usize, Color, Color)> = Vec::new();
    let mut pending: Vec<usize> = (0..uncolored.len().min(triples.len())).collect();
    for attempt in 0..=params.retries {
        if pending.is_empty() {
            break;
        }
        let senders: Vec<usize> = pending.iter().map(|&i| uncolored[i]).collect();
        let receivers: BTreeSet<usize> = senders.iter().copied().collect();
        eng.exchange(tag, MessageKind::Unit, senders.iter().copied(), |_, dst| outside(dst).then_some(msg))?;
        let mut repliers: Vec<usize> = senders.iter().flat_map(|&u| inst.neighbors(u).iter().copied()).filter(|&w| outside(w)).collect();
        repliers.sort_unstable();
        repliers.dedup();
        eng.exchange("donation-reply", MessageKind::Unit, repliers, |_, dst| receivers.contains(&dst).then_some(samples as u64))?;

        let mut still = Vec::new();
        for &i in &pending {
            let u = uncolored[i];
            let t = &triples[i];
            let mut rng = eng.rng(tag, inst.cluster_id(u).0, iteration * 100 + u64::from(attempt));
            let picks: Vec<usize> = (0..samples).map(|_| t.donors[rng.below(t.donors.len() as u64) as usize]).collect();
            let external: BTreeSet<Color> = inst.neighbors(u).iter().filter(|&&w| outside(w)).filter_map(|&w| coloring.get(w)).collect();
            let conflicts: Vec<bool> = picks.iter().map(|&w| external.contains(&coloring.get(w).expect("donor colored"))).collect();
            let choice = picks.iter().zip(&conflicts).find(|(_, &bad)| !bad).map(|(&w, _)| w);
            records.push(DonationRecord {
                clique: inst.cluster_id(clique.leader),
                node: inst.cluster_id(u),
                block: t.block,
                recolor: t.recolor,
                attempt,
                sampled: picks.iter().map(|&w| inst.cluster_id(w)).collect(),
                conflicts,
                donor: choice.map(|w| inst.cluster_id(w)),
                donated: choice.and_then(|w| coloring.get(w)),
            });
            match choice {
                Some(w) => swaps.push((u, w, coloring.get(w).expect("donor colored"), t.recolor)),
                None => still.push(i),
            }
        }
        pending = still;
    }
    // Donors learn their replacement color.
    let cbits = eng.color_bits();
    eng.forest_cast(tag, MessageKind::Unit, &[&clique.tree], |_| cbits, false)?;

    let mut after = coloring.clone();
    let mut allowed = BTreeSet::new();
    for &(u, w, donated, recolor) in &swaps {
        after.set(u, donated, "donation");
        after.set(w, recolor, "donation-recolor");
        allowed.insert(u);
        allowed.insert(w);
    }
    let audit = verify::check_swap(inst, coloring, &after, &allowed);
    let committed = audit.pass && !swaps.is_empty();
    if committed {
        *coloring = after;
        let changed: Vec<usize> = allowed.iter().copied().collect();
        eng.exchange(tag, MessageKind::Unit, changed, |_, _| Some(cbits))?;
    }
    let residual = uncolored.iter().copied().filter(|&u| !coloring.is_colored(u)).collect();
    Ok(DonationOutcome { records, audit, committed, residual })
}

/// Exact check of the safe-donor conditions: distinct replacement colors, disjoint donor
/// sets, replacement color in each donor's palette, donor colors inside the block, and
/// `|S_i| = ℓ_s`.
pub fn check_safe_donors(inst: &Instance, coloring: &PartialColoring, triples: &[SafeDonors], block_size: u64, ell_s: usize) -> Verdict {
    let mut out = Verdict::new("safe-donors");
    let mut recolors = BTreeSet::new();
    let mut seen = BTreeSet::new();
    for (i, t) in triples.iter().enumerate() {
        if !recolors.insert(t.recolor) {
            out.fail(format!("replacement color {} used twice", t.recolor));
        }
        if t.donors.len() != ell_s {
            out.fail(format!("donor set {i} has {} members, expected {ell_s}", t.donors.len()));
        }
        for &v in &t.donors {
            if !seen.insert(v) {
                out.fail(format!("donor {} appears in two sets", inst.cluster_id(v)));
            }
            if inst.neighbors(v).iter().any(|&u| coloring.get(u) == Some(t.recolor)) {
                out.fail(format!("replacement color {} is not free for donor {}", t.recolor, inst.cluster_id(v)));
            }
            match coloring.get(v) {
                Some(c) if block_of(c, block_size) == t.block => {}
                other => out.fail(format!("donor {} holds {other:?}, outside block {}", inst.cluster_id(v), t.block)),
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PutAsideReport {
    /// Cliques colored through free colors.
    pub free_branch: BTreeSet<usize>,
    /// Cliques that went through donations.
    pub donor_branch: BTreeSet<usize>,
    /// `|Q_K|` per donor-branch clique (last round).
    pub candidates: BTreeMap<usize, usize>,
    pub donations: Vec<DonationRecord>,
    /// Safe-donor and swap audits, in order.
    pub audits: Vec<Verdict>,
    /// Largest count of free or repeated colors in a clique before coloring.
    pub max_free_or_repeated: usize,
    pub residual: Vec<usize>,
}

/// Colors that are free or held twice or more in the clique.
pub fn free_or_repeated(inst: &Instance, members: &[usize], coloring: &PartialColoring) -> usize {
    let q = inst.delta() + 1;
    let mut count = vec![0usize; q + 1];
    for c in members.iter().filter_map(|&v| coloring.get(v)) {
        count[c as usize] += 1;
    }
    count[1..].iter().filter(|&&m| m != 1).count()
}

/// Colors every put-aside set: free colors when the clique palette has at least `ℓ_s` of
/// them, donations otherwise. Rounds repeat up to the retry limit on what is left.
pub fn color_put_aside_sets(
    eng: &mut Engine<'_>,
    labeling: &AcdLabeling,
    coloring: &mut PartialColoring,
    put_aside: &PutAsideSets,
    iteration: u64,
) -> Result<PutAsideReport> {
    let inst = eng.instance();
    let params = inst.params().clone();
    let ell_s = params.ell_s as usize;
    let mut report = PutAsideReport::default();
    for &k in put_aside.sets.keys() {
        let members = &labeling.cliques[k].members;
        report.max_free_or_repeated = report.max_free_or_repeated.max(free_or_repeated(inst, members, coloring));
    }
    let uncolored_of = |coloring: &PartialColoring, k: usize| -> Vec<usize> {
        put_aside.sets[&k].iter().copied().filter(|&v| !coloring.is_colored(v)).collect()
    };
    for round in 0..=params.retries {
        let it = iteration * 100 + u64::from(round);
        let pending: Vec<usize> = put_aside.sets.keys().copied().filter(|&k| !uncolored_of(coloring, k).is_empty()).collect();
        if pending.is_empty() {
            break;
        }
        let mut views = BTreeMap::new();
        for &k in &pending {
            let c = &labeling.cliques[k];
            views.insert(k, build_palette_view(eng, "put-aside-palette", &c.members, Some(&c.tree), coloring, it)?);
        }
        let (free_ks, donor_ks): (Vec<usize>, Vec<usize>) = pending.iter().partition(|&&k| views[&k].free_count() as usize >= ell_s);
        for &k in &free_ks {
            report.free_branch.insert(k);
            let u = uncolored_of(coloring, k);
            try_free_colors(eng, labeling, coloring, k, &u, &views[&k], it)?;
        }
        if donor_ks.is_empty() {
            continue;
        }
        let candidates = find_candidate_donors(eng, labeling, coloring, &donor_ks, &put_aside.sets, it)?;
        for &k in &donor_ks {
            report.donor_branch.insert(k);
            let q_k = &candidates[&k];
            report.candidates.insert(k, q_k.len());
            let u = uncolored_of(coloring, k);
            let triples = match find_safe_donors(eng, labeling, coloring, k, q_k, &views[&k], u.len(), it) {
                Ok(t) => t,
                Err(Error::StageFailed { .. }) => continue,
                Err(e) => return Err(e),
            };
            let audit = check_safe_donors(inst, coloring, &triples, params.block_size, ell_s);
            let ok = audit.pass;
            report.audits.push(audit);
            if !ok {
                continue;
            }
            let outcome = donate_colors(eng, labeling, coloring, k, &u, &triples, it)?;
            report.donations.extend(outcome.records);
            report.audits.push(outcome.audit);
        }
    }
    report.residual = put_aside.sets.keys().flat_map(|&k| uncolored_of(coloring, k)).collect();
    report.residual.sort_unstable();
    Ok(report)
}

/// Donation trace as JSON.
pub fn donation_trace_json(records: &[DonationRecord]) -> String {
    serde_json::to_string_pretty(records).expect("trace serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_arithmetic() {
        assert_eq!(num_blocks(60, 16), 4);
        assert_eq!(block_of(1, 16), 1);
        assert_eq!(block_of(16, 16), 1);
        assert_eq!(block_of(17, 16), 2);
        assert_eq!(bit_len(1), 1);
        assert_eq!(bit_len(64), 6);
        assert_eq!(bit_len(65), 7);
    }

    #[test]
    fn donation_message_fits_budget() {
        for n in [16usize, 1000, 5000] {
            let s = donation_samples(n);
            assert!(donation_message_bits(300, 64, s) <= donation_budget(299, 64, s));
        }
    }
}
