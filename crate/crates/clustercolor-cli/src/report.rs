use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use clustercolor::coloring::{PipelineRun, StageOutcome, FALLBACK_STAGE};
use clustercolor::engine::{CategoryStat, RoundLedger};
use clustercolor::netmodel::{Instance, Profile};
use clustercolor::verify::Verdict;

/// Hex SHA-256 of an instance file.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct Headline {
    pub h_rounds: u64,
    pub g_rounds: u64,
    /// Rounds spent in the fallback, not counted above.
    pub fallback_rounds: u64,
    pub max_link_bits: u64,
    pub budget: u64,
    /// Fraction of all clusters colored by each stage.
    pub fraction_colored: BTreeMap<String, f64>,
    pub fallback_used: bool,
    pub low_degree: bool,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub instance_digest: String,
    pub seed: u64,
    pub profile: Profile,
    pub headline: Headline,
    pub stages: Vec<StageOutcome>,
    pub categories: BTreeMap<String, CategoryStat>,
    pub verdicts: Vec<Verdict>,
}

impl RunReport {
    pub fn new(digest: String, seed: u64, inst: &Instance, run: &PipelineRun, ledger: &RoundLedger, verdicts: Vec<Verdict>) -> Self {
        let (g_rounds, h_rounds) = run.headline_rounds();
        let n = inst.num_clusters().max(1) as f64;
        let mut fraction_colored = BTreeMap::new();
        for o in &run.outcomes {
            *fraction_colored.entry(o.stage.clone()).or_insert(0.0) += o.colored as f64 / n;
        }
        let headline = Headline {
            h_rounds,
            g_rounds,
            fallback_rounds: run.outcomes.iter().filter(|o| o.stage == FALLBACK_STAGE).map(|o| o.rounds).sum(),
            max_link_bits: ledger.max_link_bits(),
            budget: inst.params().bandwidth(inst.n()),
            fraction_colored,
            fallback_used: run.fallback_used,
            low_degree: run.low_degree,
        };
        Self {
            instance_digest: digest,
            seed,
            profile: inst.params().profile,
            headline,
            stages: run.outcomes.clone(),
            categories: ledger.categories().clone(),
            verdicts,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}
