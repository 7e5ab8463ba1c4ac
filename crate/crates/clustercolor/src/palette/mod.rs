//! Clique palettes with range queries, plus the hash and sampling families built on seeds.

mod hash;
mod sample;

pub use hash::{almost_pairwise_hash, is_prime, minwise_hash, next_prime, HashKind, HashSpec};
pub use sample::{representative_sample, representative_size, sct_permutation, RepresentativeSample};

use crate::coloring::{Color, PartialColoring};
use crate::engine::{Engine, MachineTree, MessageKind};
use crate::error::{Error, Result};
use crate::netmodel::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSet {
    /// φ(K): colors held inside the clique.
    Used,
    /// L_φ(K): colors of `[Δ+1]` not held inside the clique.
    Free,
}

/// Snapshot of `φ(K)` over `[Δ+1]`, split into contiguous ranges each owned by one random group.
#[derive(Clone, Debug)]
pub struct CliquePaletteView {
    members: Vec<usize>,
    tree: Option<MachineTree>,
    colors: u32,
    range_len: u32,
    used: Vec<bool>,
    free_prefix: Vec<u32>,
    range_free_before: Vec<u32>,
}

impl CliquePaletteView {
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn tree(&self) -> Option<&MachineTree> {
        self.tree.as_ref()
    }

    /// Size of the color space, Δ+1.
    pub fn num_colors(&self) -> u32 {
        self.colors
    }

    pub fn range_len(&self) -> u32 {
        self.range_len
    }

    pub fn num_ranges(&self) -> usize {
        self.colors.div_ceil(self.range_len) as usize
    }

    /// Colors of range `i` (0-based) as an inclusive interval.
    pub fn range(&self, i: usize) -> (Color, Color) {
        let a = i as u32 * self.range_len + 1;
        (a, (a + self.range_len - 1).min(self.colors))
    }

    /// Number of free colors in ranges before `i`.
    pub fn free_before_range(&self, i: usize) -> u32 {
        self.range_free_before[i]
    }

    /// Used-color bitmap of range `i`.
    pub fn range_bitmap(&self, i: usize) -> Vec<bool> {
        let (a, b) = self.range(i);
        (a..=b).map(|c| self.used[c as usize]).collect()
    }

    pub fn is_used(&self, c: Color) -> bool {
        self.used[c as usize]
    }

    pub fn free_count(&self) -> u32 {
        self.free_prefix[self.colors as usize]
    }

    pub fn free_colors(&self) -> impl Iterator<Item = Color> + '_ {
        (1..=self.colors).filter(|&c| !self.used[c as usize])
    }

    fn check_range(&self, a: Color, b: Color) -> Result<()> {
        if a < 1 || a > b || b > self.colors {
            return Err(Error::Domain(format!("range [{a}, {b}] outside [1, {}]", self.colors)));
        }
        Ok(())
    }

    fn count_upto(&self, set: ColorSet, c: Color) -> u32 {
        let free = self.free_prefix[c as usize];
        match set {
            ColorSet::Free => free,
            ColorSet::Used => c - free,
        }
    }

    /// |C ∩ [a, b]|.
    pub fn query_count(&self, set: ColorSet, a: Color, b: Color) -> Result<u32> {
        self.check_range(a, b)?;
        Ok(self.count_upto(set, b) - self.count_upto(set, a - 1))
    }

    /// The `i`-th (1-based) color of C ∩ [a, b].
    pub fn query_ith(&self, set: ColorSet, i: u32, a: Color, b: Color) -> Result<Color> {
        let available = self.query_count(set, a, b)?;
        if i < 1 || i > available {
            return Err(Error::IndexOutOfRange { index: i as usize, available: available as usize });
        }
        let target = self.count_upto(set, a - 1) + i;
        // Smallest c with count_upto(c) ≥ target.
        let (mut lo, mut hi) = (a, b);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.count_upto(set, mid) >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    }

    /// The view still reflects `coloring` on its clique.
    pub fn matches(&self, coloring: &PartialColoring) -> bool {
        let mut used = vec![false; self.colors as usize + 1];
        for &v in &self.members {
            if let Some(c) = coloring.get(v) {
                used[c as usize] = true;
            }
        }
        used == self.used
    }

    /// Charges one batched query round: each asker sends a request to its group and gets one
    /// answer of `answer_bits` back.
    pub fn charge_queries(&self, eng: &mut Engine<'_>, tag: &str, askers: &[usize], answer_bits: u64) -> Result<()> {
        if askers.is_empty() {
            return Ok(());
        }
        let request = 2 * eng.color_bits() + eng.word();
        let mut in_k = vec![false; eng.instance().num_clusters()];
        for &v in &self.members {
            in_k[v] = true;
        }
        eng.exchange(tag, MessageKind::Unit, askers.iter().copied(), |_, dst| in_k[dst].then_some(request))?;
        eng.exchange(tag, MessageKind::Unit, self.members.iter().copied(), |_, dst| {
            askers.binary_search(&dst).is_ok().then_some(answer_bits)
        })?;
        Ok(())
    }
}

/// Builds the palette view of clique `members`. Group `i` learns `R_i ∩ φ(K)` from the colors of
/// its members and their clique neighbors; the prefix counts `S_i` are then broadcast.
pub fn build_palette_view(
    eng: &mut Engine<'_>,
    tag: &str,
    members: &[usize],
    tree: Option<&MachineTree>,
    coloring: &PartialColoring,
    iteration: u64,
) -> Result<CliquePaletteView> {
    let inst = eng.instance();
    let colors = inst.delta() as u32 + 1;
    let range_len = (inst.params().c_range * ParamSet::log_n(inst.n())).max(1);
    let k = colors.div_ceil(range_len) as usize;
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let groups = eng.random_groups(tag, &sorted, k, iteration)?;
    if !groups.certificate {
        return Err(Error::GroupCertificateFailed);
    }
    let mut in_k = vec![false; inst.num_clusters()];
    for &v in &sorted {
        in_k[v] = true;
    }
    let cbits = eng.color_bits();
    eng.exchange(tag, MessageKind::Unit, sorted.iter().copied(), |src, dst| {
        (in_k[dst] && coloring.is_colored(src)).then_some(cbits)
    })?;

    let mut used = vec![false; colors as usize + 1];
    for &(v, g) in &groups.group_of {
        let lo = g as u32 * range_len + 1;
        let hi = (lo + range_len - 1).min(colors);
        let mut see = |c: Option<Color>| {
            if let Some(c) = c.filter(|c| (lo..=hi).contains(c)) {
                used[c as usize] = true;
            }
        };
        see(coloring.get(v));
        for &u in inst.neighbors(v) {
            if in_k[u] {
                see(coloring.get(u));
            }
        }
    }
    let mut free_prefix = vec![0u32; colors as usize + 1];
    for c in 1..=colors as usize {
        free_prefix[c] = free_prefix[c - 1] + u32::from(!used[c]);
    }
    let range_free_before = (0..k).map(|i| free_prefix[(i as u32 * range_len) as usize]).collect();
    if let Some(t) = tree {
        eng.forest_cast(tag, MessageKind::Bulk, &[t], |_| u64::from(range_len), true)?;
        let word = eng.word();
        eng.forest_cast(tag, MessageKind::Bulk, &[t], |_| k as u64 * word, false)?;
    }
    Ok(CliquePaletteView {
        members: sorted,
        tree: tree.cloned(),
        colors,
        range_len,
        used,
        free_prefix,
        range_free_before,
    })
}

/// A hash `[Δ+1] → [4k²]` injective on the `k` smallest free colors of the view, found by
/// testing ⌈log₂ n⌉ candidates per attempt.
pub fn collision_free_hash(
    eng: &mut Engine<'_>,
    tag: &str,
    view: &CliquePaletteView,
    k: usize,
    iteration: u64,
) -> Result<(HashSpec, Vec<Color>)> {
    let candidates = eng.word() as usize;
    collision_free_hash_with(eng, tag, view, k, candidates, iteration)
}

pub fn collision_free_hash_with(
    eng: &mut Engine<'_>,
    tag: &str,
    view: &CliquePaletteView,
    k: usize,
    candidates: usize,
    iteration: u64,
) -> Result<(HashSpec, Vec<Color>)> {
    let domain: Vec<Color> = view.free_colors().take(k).collect();
    let range = (4 * (k as u64) * (k as u64)).max(1);
    let retries = eng.instance().params().retries;
    let leader = view.members.first().map_or(0, |&v| eng.instance().cluster_id(v).0);
    for attempt in 0..=retries {
        let mut rng = eng.rng(tag, leader, iteration * 1000 + u64::from(attempt));
        let mut found = None;
        let mut desc = 0;
        for _ in 0..candidates {
            let mut h = almost_pairwise_hash(u64::from(view.colors), range, &mut rng);
            desc = h.description_bits();
            let HashKind::AlmostPairwise { range } = h.kind else { unreachable!() };
            h.kind = HashKind::CollisionFree { range };
            let mut images: Vec<u64> = domain.iter().map(|&c| h.evaluate(u64::from(c))).collect();
            images.sort_unstable();
            images.dedup();
            if found.is_none() && images.len() == domain.len() {
                found = Some(h);
            }
        }
        if let Some(t) = view.tree() {
            let total = desc * candidates as u64;
            eng.forest_cast(tag, MessageKind::Bulk, &[t], |_| total, false)?;
            eng.forest_cast(tag, MessageKind::Bulk, &[t], |_| candidates as u64, true)?;
        }
        if let Some(h) = found {
            return Ok((h, domain));
        }
    }
    Err(Error::StageFailed { stage: "collision-free-hash".into(), retries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BandwidthPolicy;
    use crate::netmodel::{generate_planted, Preset};

    fn clique(size: usize) -> crate::netmodel::Instance {
        let mut spec = Preset::PlantedCabals.spec(1, size, 1);
        spec.cliques[0].anti_edges = 0;
        spec.cliques[0].anti_regular = 0;
        spec.cliques[0].external_degree = 0;
        generate_planted(3, &spec).unwrap().instance
    }

    #[test]
    fn uncolored_clique_is_all_free() {
        let inst = clique(6);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let phi = PartialColoring::new(6);
        let members: Vec<usize> = (0..6).collect();
        let view = build_palette_view(&mut eng, "pv", &members, None, &phi, 0).unwrap();
        assert_eq!(view.free_count(), 6);
        assert!(view.range_bitmap(0).iter().all(|&b| !b));
    }

    #[test]
    fn free_complement_and_ith() {
        let inst = clique(6);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let mut phi = PartialColoring::new(6);
        phi.set(0, 2, "t");
        phi.set(1, 5, "t");
        let members: Vec<usize> = (0..6).collect();
        let view = build_palette_view(&mut eng, "pv", &members, None, &phi, 0).unwrap();
        assert_eq!(view.free_colors().collect::<Vec<_>>(), vec![1, 3, 4, 6]);
        assert_eq!(view.query_ith(ColorSet::Free, 3, 1, 6).unwrap(), 4);
        assert_eq!(view.query_count(ColorSet::Used, 1, 6).unwrap(), 2);
        assert!(matches!(view.query_count(ColorSet::Free, 4, 3), Err(Error::Domain(_))));
        assert!(matches!(view.query_ith(ColorSet::Free, 5, 1, 6), Err(Error::IndexOutOfRange { .. })));
        assert!(view.matches(&phi));
        phi.set(2, 1, "t");
        assert!(!view.matches(&phi));
    }

    #[test]
    fn collision_free_on_small_domains() {
        let inst = clique(6);
        let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
        let phi = PartialColoring::new(6);
        let members: Vec<usize> = (0..6).collect();
        let view = build_palette_view(&mut eng, "pv", &members, None, &phi, 0).unwrap();
        let (h, d) = collision_free_hash(&mut eng, "cf", &view, 1, 0).unwrap();
        assert_eq!(d, vec![1]);
        assert!(h.evaluate(1) < 4);
        let (h, d) = collision_free_hash(&mut eng, "cf", &view, 3, 0).unwrap();
        let mut img: Vec<u64> = d.iter().map(|&c| h.evaluate(u64::from(c))).collect();
        img.sort_unstable();
        img.dedup();
        assert_eq!(img.len(), 3);
        assert!(matches!(
            collision_free_hash_with(&mut eng, "cf", &view, 3, 0, 0),
            Err(Error::StageFailed { .. })
        ));
    }
}
