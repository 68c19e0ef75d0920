//! Pool-based active learning around the forest: entropy-ranked querying,
//! near-duplicate label propagation, retraining cycles and rater agreement.

mod agreement;
mod entropy;
mod session;
mod similarity;

pub use agreement::{cohen_kappa, resolve_uncertain, AgreementReport};
pub use entropy::{binary_entropy, select_uncertain, uncertainty_order};
pub use session::{
    run_active_cycle, ActiveConfig, ActiveSession, AuditRecord, BatchItem, CycleOutcome,
    LabelOracle, OracleError, OracleRequest, OracleResponse, PoolItem, QueryStrategy, Rejection,
    SessionSeed, SessionStatus, TestSet,
};
pub use similarity::{length_compatible, levenshtein, propagate_labels, string_similarity};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::ForestError;
use crate::label::Label;

#[derive(Debug, Error)]
pub enum ActiveError {
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("pool has {pool} items, cannot select {k}")]
    PoolTooSmall { pool: usize, k: usize },
    #[error("labelings have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("agreement needs at least one item")]
    EmptyAgreement,
    #[error("kappa is undefined: expected agreement is 1 but the labelings differ")]
    KappaUndefined,
    #[error("session already completed all {0} cycles")]
    Complete(usize),
    #[error("no label in the submission was accepted")]
    NothingAccepted(Vec<Rejection>),
    #[error("duplicate tweet id {0} in session")]
    DuplicateId(String),
    #[error("tweet id {0} is not part of the session")]
    UnknownId(String),
    #[error("audit log disagrees with replay at revision {0}")]
    ReplayMismatch(u64),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("oracle aborted: {0}")]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelSource {
    Human { annotator_id: String },
    Propagated { from_id: String, similarity: f64 },
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub tweet_id: String,
    pub label: Label,
    pub source: LabelSource,
    /// 0 for the seed set, otherwise the cycle that produced the label.
    pub round: usize,
}
