use thiserror::Error;

use crate::netmodel::{ClusterId, MachineId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("cluster {0} is not connected in the communication graph")]
    DisconnectedCluster(ClusterId),

    #[error("machine {0} is referenced but not declared")]
    UnknownMachine(MachineId),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid instance: {0}")]
    Validation(String),

    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(
        "bandwidth violation in stage `{stage}`: {bits} bits on link {from}->{to} in round {round} (budget {budget})"
    )]
    BandwidthViolation {
        stage: String,
        round: u64,
        from: MachineId,
        to: MachineId,
        bits: u64,
        budget: u64,
    },

    #[error("source cluster {0} is outside its subgraph")]
    SourceOutsideSubgraph(ClusterId),

    #[error("subgraphs are not vertex-disjoint (cluster {0} appears twice)")]
    OverlappingSubgraphs(ClusterId),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed fingerprint stream: {0}")]
    Decode(String),

    #[error("index {index} out of range (only {available} colors in range)")]
    IndexOutOfRange { index: usize, available: usize },

    #[error("random-group certificate failed")]
    GroupCertificateFailed,

    #[error("stage `{stage}` failed after {retries} retries")]
    StageFailed { stage: String, retries: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
