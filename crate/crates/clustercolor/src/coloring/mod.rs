//! Color-trial stages and the pipeline drivers.

mod cabals;
mod complete;
mod finish;
mod matching;
mod noncabals;
mod partial;
mod pipeline;
mod sct;
mod slack;
mod trial;

pub use cabals::{color_cabals, colorful_matching_cabal, low_matching_threshold, CabalRun, CABAL_PAIR_GAMMA};
pub use complete::{complete_non_cabals, compute_z, reuse_gamma, CompleteReport, ZEstimate, RESERVED_MCT_GAMMA};
pub use finish::{gather_finish, FinishReport};
pub use matching::{colorful_matching_high, fingerprint_matching, matching_trials, FingerprintMatching, MatchingOutcome};
pub use noncabals::{color_non_cabals, color_outliers, OUTLIER_GAMMA};
pub use partial::{Color, ColoringExport, PartialColoring};
pub use pipeline::{run_pipeline, PipelineRun, FALLBACK_STAGE};
pub use sct::{synchronized_color_trial, SctJob, SctReport};
pub use slack::{slack_generation, SLACK_ACTIVATION};
pub use trial::{multicolor_trial, sparse_rounds, try_color, ColorSpace, MctReport, Trial, TrialStats};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::netmodel::ClusterId;

/// What one stage did, as logged in `stages.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: String,
    pub rounds: u64,
    pub h_rounds: u64,
    /// The stage's postcondition check passed.
    pub success: bool,
    pub retries: u32,
    /// Clusters of the stage's target set left uncolored.
    pub residual: Vec<ClusterId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Newly colored clusters.
    pub colored: usize,
    /// The stage's residual was handed to the fallback.
    pub fallback: bool,
    pub metrics: BTreeMap<String, f64>,
}

impl StageOutcome {
    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }
}

/// Runs `body` as a ledger stage and fills in the round counts and the number of newly
/// colored clusters.
pub(crate) fn staged<T>(
    eng: &mut Engine<'_>,
    name: &str,
    coloring: &mut PartialColoring,
    body: impl FnOnce(&mut Engine<'_>, &mut PartialColoring, &mut StageOutcome) -> Result<T>,
) -> Result<(T, StageOutcome)> {
    let mut out = StageOutcome { stage: name.to_string(), success: true, ..StageOutcome::default() };
    let before = coloring.colored_count();
    let (value, summary) = eng.run_stage(name, |e| body(e, coloring, &mut out))?;
    out.rounds = summary.rounds;
    out.h_rounds = summary.h_rounds;
    out.colored = coloring.colored_count().saturating_sub(before);
    Ok((value, out))
}

/// Like [`staged`], but a recoverable failure ends the stage with `success = false` and
/// `fallback = true` instead of aborting the run.
pub(crate) fn staged_soft<T>(
    eng: &mut Engine<'_>,
    name: &str,
    coloring: &mut PartialColoring,
    body: impl FnOnce(&mut Engine<'_>, &mut PartialColoring, &mut StageOutcome) -> Result<T>,
) -> Result<(Option<T>, StageOutcome)> {
    staged(eng, name, coloring, |e, phi, out| match body(e, phi, out) {
        Ok(t) => Ok(Some(t)),
        Err(err) if is_recoverable(&err) => {
            out.success = false;
            out.fallback = true;
            out.metrics.insert("failed".into(), 1.0);
            if let Error::StageFailed { retries, .. } = err {
                out.retries = retries;
            }
            Ok(None)
        }
        Err(err) => Err(err),
    })
}

/// Failures a driver absorbs by routing the affected clusters to the fallback. Bandwidth
/// violations under the enforce policy and malformed inputs still abort the run.
pub(crate) fn is_recoverable(e: &Error) -> bool {
    matches!(e, Error::StageFailed { .. } | Error::GroupCertificateFailed | Error::IndexOutOfRange { .. })
}

pub(crate) fn ids(eng: &Engine<'_>, vs: impl IntoIterator<Item = usize>) -> Vec<ClusterId> {
    let inst = eng.instance();
    vs.into_iter().map(|v| inst.cluster_id(v)).collect()
}
