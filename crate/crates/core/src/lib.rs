//! Simulation of the simultaneous multiple-round auction (SMRA) with
//! near-submodular bidders.
//!
//! The crate covers the full pipeline: valuations and their degree of
//! submodularity ([`valuation`]), the round-by-round auction engine
//! ([`mechanism`]), bidding strategies ([`strategy`]), the exact welfare
//! oracle and rationality measurement ([`oracle`]), canned scenarios and
//! batch experiments ([`scenario`]), and the `smra` command line ([`cli`]).

pub mod cli;
pub mod error;
pub mod itemset;
pub mod mechanism;
pub mod oracle;
pub mod ratio;
pub mod scenario;
pub mod strategy;
pub mod valuation;

pub use error::{Error, Result};
pub use itemset::{ItemSet, MAX_ITEMS};
pub use mechanism::{init_auction, run_auction, AuctionOutcome, AuctionState, Draw, RoundRecord};
pub use oracle::{measure_rationality, optimal_welfare, welfare, welfare_ratio, Guarantee, OptimalAllocation};
pub use ratio::{ExtRational, Rational};
pub use strategy::{BidContext, BidPolicy, LocalStart, SecureVariant, Strategy, StrategyKind};
pub use valuation::{degree_of_submodularity, is_alpha_near_submodular, random_near_submodular, Valuation};
