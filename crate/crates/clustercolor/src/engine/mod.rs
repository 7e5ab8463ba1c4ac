//! Round scheduler with per-link bandwidth accounting.
//!
//! Stages compute their results over the cluster graph and describe the messages that the
//! machine-level protocol sends; the engine turns those descriptions into rounds and ledger
//! entries. Every operation occupies its own block of rounds, so round indices are strictly
//! increasing across operations and stages.

mod ledger;
mod primitives;

pub use ledger::{CategoryStat, LedgerEntry, RoundLedger, RoundRecord, StageSummary, Violation};
pub use primitives::{BfsForest, BfsTree, Combine, GroupAssignment, MachineTree};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{Instance, ParamSet};
use crate::rng::CounterRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthPolicy {
    /// Record violations and continue.
    #[default]
    Audit,
    /// Fail on the first violation.
    Enforce,
}

impl std::str::FromStr for BandwidthPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audit" => Ok(Self::Audit),
            "enforce" => Ok(Self::Enforce),
            other => Err(Error::InvalidParams(format!("unknown bandwidth policy `{other}`"))),
        }
    }
}

/// How a logical message maps onto rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    /// Sent in a single round; anything over the budget is a violation.
    Unit,
    /// Split into budget-sized chunks sent in consecutive rounds.
    Bulk,
}

/// One logical message on one directed link, starting `offset` rounds into an operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hop {
    pub from: usize,
    pub to: usize,
    pub offset: u64,
    pub bits: u64,
}

pub struct Engine<'a> {
    inst: &'a Instance,
    seed: u64,
    policy: BandwidthPolicy,
    budget: u64,
    word: u64,
    ledger: RoundLedger,
    open: Option<StageSummary>,
}

impl<'a> Engine<'a> {
    pub fn new(inst: &'a Instance, seed: u64, policy: BandwidthPolicy, record_entries: bool) -> Self {
        let n = inst.n();
        Self {
            inst,
            seed,
            policy,
            budget: inst.params().bandwidth(n),
            word: u64::from(ParamSet::log_n(n)),
            ledger: RoundLedger::new(record_entries),
            open: None,
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn policy(&self) -> BandwidthPolicy {
        self.policy
    }

    /// Per-link per-round budget in bits.
    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// ⌈log₂ n⌉: the size of an identifier or a count.
    pub fn word(&self) -> u64 {
        self.word
    }

    /// Bits needed to name one color of `[Δ+1]`.
    pub fn color_bits(&self) -> u64 {
        u64::from(ParamSet::log_n(self.inst.delta() + 1))
    }

    pub fn ledger(&self) -> &RoundLedger {
        &self.ledger
    }

    pub fn into_ledger(mut self) -> RoundLedger {
        self.close_stage();
        self.ledger
    }

    /// Randomness keyed on the run seed, a tag, an entity and an iteration counter.
    pub fn rng(&self, tag: &str, id: u64, iteration: u64) -> CounterRng {
        CounterRng::for_stage(self.seed, tag, id, iteration)
    }

    /// Runs `body` as a named stage and returns the traffic it produced.
    pub fn run_stage<T>(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Self) -> Result<T>,
    ) -> Result<(T, StageSummary)> {
        // A nested stage splits its parent: the parent's traffic so far is closed off and
        // the remainder is summarized under the parent's name again.
        let outer = self.open.take();
        if let Some(o) = outer.as_ref().filter(|o| o.rounds > 0 || o.total_bits > 0) {
            self.ledger.stages.push(o.clone());
        }
        self.open = Some(StageSummary { stage: name.to_string(), ..StageSummary::default() });
        let out = body(self);
        let summary = self.close_stage().expect("opened above");
        if let Some(o) = outer {
            self.open = Some(StageSummary { stage: o.stage, ..StageSummary::default() });
        }
        out.map(|t| (t, summary))
    }

    fn close_stage(&mut self) -> Option<StageSummary> {
        let s = self.open.take()?;
        self.ledger.stages.push(s.clone());
        Some(s)
    }

    fn stage_name(&self) -> String {
        self.open.as_ref().map_or_else(|| "unstaged".to_string(), |s| s.stage.clone())
    }

    /// Declares the largest logical message a category may carry.
    pub fn declare_budget(&mut self, tag: &str, bits: u64) {
        self.ledger.categories.entry(tag.to_string()).or_default().budget = Some(bits);
    }

    /// Core accounting: expands hops into per-round entries and advances the clock.
    /// Returns the number of rounds the operation took.
    pub fn charge(
        &mut self,
        tag: &str,
        kind: MessageKind,
        hops: impl IntoIterator<Item = Hop>,
        inter_cluster: bool,
    ) -> Result<u64> {
        let base = self.ledger.rounds;
        let budget = self.budget;
        let stage = self.stage_name();
        let mut span = 0u64;
        let mut total = 0u64;
        let mut max_link = 0u64;
        let mut max_msg = 0u64;
        let mut messages = 0u64;
        let mut new_violations = Vec::new();
        // (messages, bits, largest message) per round offset, plus a difference map of the
        // full-budget chunks of bulk messages.
        let mut per_round: BTreeMap<u64, (u64, u64, u64)> = BTreeMap::new();
        let mut full_chunks: BTreeMap<u64, i64> = BTreeMap::new();
        for hop in hops {
            if hop.bits == 0 {
                continue;
            }
            messages += 1;
            total += hop.bits;
            let full = match kind {
                MessageKind::Unit => 0,
                MessageKind::Bulk => (hop.bits - 1) / budget.max(1),
            };
            let last = hop.bits - full * budget;
            // A pipelined message is measured by its largest per-round piece.
            max_msg = max_msg.max(hop.bits.div_ceil(full + 1));
            span = span.max(hop.offset + full + 1);
            if full > 0 {
                *full_chunks.entry(hop.offset).or_default() += 1;
                *full_chunks.entry(hop.offset + full).or_default() -= 1;
                max_link = max_link.max(budget);
            }
            let r = per_round.entry(hop.offset + full).or_default();
            r.0 += 1;
            r.1 += last;
            r.2 = r.2.max(last);
            max_link = max_link.max(last);
            if last > budget {
                new_violations.push(Violation {
                    stage: stage.clone(),
                    round: base + hop.offset + full,
                    from: self.inst.comm().id(hop.from),
                    to: self.inst.comm().id(hop.to),
                    bits: last,
                });
            }
            if self.ledger.record_entries {
                let (from, to) = (hop.from as u32, hop.to as u32);
                let pieces = (0..full).map(|_| budget).chain(std::iter::once(last));
                for (c, bits) in pieces.enumerate() {
                    self.ledger.entries.push(LedgerEntry { round: base + hop.offset + c as u64, from, to, bits });
                }
            }
        }
        let mut active = 0i64;
        let mut offsets = full_chunks.into_iter().peekable();
        while let Some((start, delta)) = offsets.next() {
            active += delta;
            let end = offsets.peek().map_or(start, |&(next, _)| next);
            for offset in start..end {
                if active > 0 {
                    let r = per_round.entry(offset).or_default();
                    r.0 += active as u64;
                    r.1 += active as u64 * budget;
                    r.2 = r.2.max(budget);
                }
            }
        }
        for (offset, (messages, bits, largest)) in per_round {
            self.ledger.round_records.push(RoundRecord {
                round: base + offset,
                stage: stage.clone(),
                messages,
                bits,
                largest_message: largest,
            });
        }
        if messages > 0 {
            let cat = self.ledger.categories.entry(tag.to_string()).or_default();
            if cat.budget.is_none() && kind == MessageKind::Unit {
                cat.budget = Some(budget);
            }
            cat.max_bits = cat.max_bits.max(max_msg);
            cat.messages += messages;
        }
        self.ledger.rounds += span;
        self.ledger.total_bits += total;
        self.ledger.max_link_bits = self.ledger.max_link_bits.max(max_link);
        if inter_cluster {
            self.ledger.h_rounds += span;
        }
        if let Some(s) = self.open.as_mut() {
            s.rounds += span;
            s.total_bits += total;
            s.max_link_bits = s.max_link_bits.max(max_link);
            s.violations += new_violations.len();
            if inter_cluster {
                s.h_rounds += span;
            }
        }
        let first = new_violations.first().cloned();
        self.ledger.violations.extend(new_violations);
        if let (BandwidthPolicy::Enforce, Some(v)) = (self.policy, first) {
            return Err(Error::BandwidthViolation {
                stage: v.stage,
                round: v.round,
                from: v.from,
                to: v.to,
                bits: v.bits,
                budget,
            });
        }
        Ok(span)
    }

    /// Leader-to-members broadcast in each listed cluster, `bits` per cluster.
    pub fn broadcast(&mut self, tag: &str, kind: MessageKind, items: &[(usize, u64)]) -> Result<u64> {
        let inst = self.inst;
        let hops = items.iter().flat_map(|&(v, bits)| {
            inst.members(v).iter().filter_map(move |&m| {
                let p = inst.tree_parent(m)?;
                Some(Hop { from: p, to: m, offset: u64::from(inst.tree_depth(m)) - 1, bits })
            })
        });
        let hops: Vec<Hop> = hops.collect();
        self.charge(tag, kind, hops, false)
    }

    /// Members-to-leader convergecast in each listed cluster; every non-leader machine forwards
    /// one aggregate of `bits`.
    pub fn convergecast(&mut self, tag: &str, kind: MessageKind, items: &[(usize, u64)]) -> Result<u64> {
        let mut size = vec![0u64; self.inst.num_clusters()];
        for &(v, b) in items {
            size[v] = b;
        }
        self.convergecast_with(tag, kind, items.iter().map(|&(v, _)| v), |v, _| size[v])
    }

    /// Convergecast where the forwarded aggregate size depends on the sending machine.
    pub fn convergecast_with(
        &mut self,
        tag: &str,
        kind: MessageKind,
        clusters: impl IntoIterator<Item = usize>,
        bits: impl Fn(usize, usize) -> u64,
    ) -> Result<u64> {
        let inst = self.inst;
        let clusters: Vec<usize> = clusters.into_iter().collect();
        let top = clusters.iter().map(|&v| u64::from(inst.height(v))).max().unwrap_or(0);
        let mut hops = Vec::new();
        for &v in &clusters {
            for &m in inst.members(v) {
                if let Some(p) = inst.tree_parent(m) {
                    let b = bits(v, m);
                    hops.push(Hop { from: m, to: p, offset: top - u64::from(inst.tree_depth(m)), bits: b });
                }
            }
        }
        self.charge(tag, kind, hops, false)
    }

    /// One H-round: every machine of each source cluster sends on its inter-cluster links.
    /// `bits(src, dst)` gives the payload toward cluster `dst`, or `None` to stay silent.
    pub fn exchange(
        &mut self,
        tag: &str,
        kind: MessageKind,
        sources: impl IntoIterator<Item = usize>,
        bits: impl Fn(usize, usize) -> Option<u64>,
    ) -> Result<u64> {
        let inst = self.inst;
        let mut hops = Vec::new();
        for src in sources {
            for &li in inst.links_of(src) {
                let l = inst.inter_links()[li];
                let (from, to, dst) = if l.cluster_a == src { (l.a, l.b, l.cluster_b) } else { (l.b, l.a, l.cluster_a) };
                if let Some(b) = bits(src, dst) {
                    hops.push(Hop { from, to, offset: 0, bits: b });
                }
            }
        }
        self.charge(tag, kind, hops, true)
    }

    /// Broadcast inside the sources, one exchange, and a convergecast at the receivers: the
    /// three steps of one round on H.
    pub fn h_round(
        &mut self,
        tag: &str,
        kind: MessageKind,
        sources: &[usize],
        bits: u64,
        reply_bits: u64,
    ) -> Result<()> {
        let inst = self.inst;
        let items: Vec<(usize, u64)> = sources.iter().map(|&v| (v, bits)).collect();
        self.broadcast(tag, kind, &items)?;
        self.exchange(tag, kind, sources.iter().copied(), |_, _| Some(bits))?;
        if reply_bits > 0 {
            let mut receivers: Vec<usize> =
                sources.iter().flat_map(|&v| inst.neighbors(v).iter().copied()).collect();
            receivers.sort_unstable();
            receivers.dedup();
            self.convergecast_with(tag, kind, receivers, |_, _| reply_bits)?;
        }
        Ok(())
    }
}
