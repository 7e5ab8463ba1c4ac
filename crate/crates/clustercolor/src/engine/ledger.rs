use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::netmodel::{Instance, MachineId};

/// Bits carried by one directed link in one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LedgerEntry {
    pub round: u64,
    pub from: u32,
    pub to: u32,
    pub bits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub stage: String,
    pub round: u64,
    pub from: MachineId,
    pub to: MachineId,
    pub bits: u64,
}

/// Traffic of one round: messages sent, their total bits and the largest one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub stage: String,
    pub messages: u64,
    pub bits: u64,
    pub largest_message: u64,
}

/// Per-stage totals exported as `stages` summaries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub rounds: u64,
    pub h_rounds: u64,
    pub max_link_bits: u64,
    pub violations: usize,
    pub total_bits: u64,
}

/// Largest logical message seen per message category, against its declared budget.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub budget: Option<u64>,
    pub max_bits: u64,
    pub messages: u64,
}

/// Append-only traffic record of a run.
#[derive(Clone, Debug, Default)]
pub struct RoundLedger {
    pub(crate) record_entries: bool,
    pub(crate) entries: Vec<LedgerEntry>,
    pub(crate) round_records: Vec<RoundRecord>,
    pub(crate) rounds: u64,
    pub(crate) h_rounds: u64,
    pub(crate) total_bits: u64,
    pub(crate) max_link_bits: u64,
    pub(crate) stages: Vec<StageSummary>,
    pub(crate) violations: Vec<Violation>,
    pub(crate) categories: BTreeMap<String, CategoryStat>,
}

impl RoundLedger {
    pub fn new(record_entries: bool) -> Self {
        Self { record_entries, ..Self::default() }
    }

    /// Total G-rounds elapsed.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Total H-rounds (inter-cluster exchange rounds) elapsed.
    pub fn h_rounds(&self) -> u64 {
        self.h_rounds
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    pub fn max_link_bits(&self) -> u64 {
        self.max_link_bits
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// One record per round that carried traffic, in round order.
    pub fn round_records(&self) -> &[RoundRecord] {
        &self.round_records
    }

    pub fn stages(&self) -> &[StageSummary] {
        &self.stages
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn categories(&self) -> &BTreeMap<String, CategoryStat> {
        &self.categories
    }

    pub fn is_recording(&self) -> bool {
        self.record_entries
    }

    /// One CSV row per round that carried traffic.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,stage,messages,bits,largest_message\n");
        for r in &self.round_records {
            let _ = writeln!(out, "{},{},{},{},{}", r.round, r.stage, r.messages, r.bits, r.largest_message);
        }
        out
    }

    /// One CSV row per recorded `(round, link, bits)` entry; links are `from->to` machine ids.
    pub fn entries_csv(&self, inst: &Instance) -> String {
        let mut out = String::from("round,link,bits\n");
        let comm = inst.comm();
        for e in &self.entries {
            let _ = writeln!(out, "{},{}->{},{}", e.round, comm.id(e.from as usize).0, comm.id(e.to as usize).0, e.bits);
        }
        out
    }

    /// Stage summaries as a JSON array.
    pub fn stage_summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.stages).expect("plain data serializes")
    }
}
