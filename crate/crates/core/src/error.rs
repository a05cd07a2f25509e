use thiserror::Error;

use crate::itemset::ItemSet;
use crate::mechanism::AuctionOutcome;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("universe mismatch: expected {expected} items, found {found}")]
    UniverseMismatch { expected: usize, found: usize },

    #[error("universe of {m} items exceeds the limit of {limit} for this operation")]
    UniverseTooLarge { m: usize, limit: usize },

    #[error("valuation is not monotone: v({larger}) = {larger_value} < v({smaller}) = {smaller_value}")]
    NotMonotone {
        smaller: ItemSet,
        larger: ItemSet,
        smaller_value: i64,
        larger_value: i64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid valuation: {0}")]
    InvalidValuation(String),

    #[error("no valuation passed the near-submodularity check after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("bidder {bidder} bid on items {items} it already holds")]
    InvalidBid { bidder: usize, items: ItemSet },

    #[error("auction did not terminate within {max_rounds} rounds")]
    Divergence {
        max_rounds: usize,
        partial: Box<AuctionOutcome>,
    },

    #[error("bidder {bidder} holds an insecure provisional set (subset {witness} is priced above its value)")]
    InsecureProvisionalState { bidder: usize, witness: ItemSet },

    #[error("welfare oracle too large: {bidders} bidders over {items} items exceeds the work budget")]
    OracleTooLarge { bidders: usize, items: usize },

    #[error("allocation is not disjoint: bidders {first} and {second} share items {shared}")]
    InvalidAllocation {
        first: usize,
        second: usize,
        shared: ItemSet,
    },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
