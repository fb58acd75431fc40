//! Temporal popularity-bias mitigation for recommender systems.
//!
//! The crate is organised as a pipeline:
//!
//! * [`dataset`] parses raw rating files, filters sparse users and items, splits the catalog
//!   into a short head and a long tail, holds out test ratings and partitions test users into
//!   epochs.
//! * [`recommender`] trains the pairwise-ranking factorization model (RankALS) that produces the
//!   candidate lists, plus a popularity ranker used as a deterministic stand-in.
//! * [`reranker`] implements the four xQuAD variants. `Binary` and `Smooth` judge category
//!   coverage against the list under construction; `TimeBinary` and `TimeSmooth` judge it
//!   against a [`HistoryLedger`] of everything recommended so far.
//! * [`metrics`] computes ARP, LCR, cumulative LCR, NDCG and paired t-tests.
//! * [`simulator`] replays the test users epoch by epoch and collects per-epoch metrics.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod recommender;
pub mod reranker;
pub mod simulator;
pub mod synthetic;
mod types;

pub use error::{Error, Result};
pub use types::{Category, ItemIdx, ItemId, ScoredList, UserId, UserIdx};

pub use dataset::{CategorySplit, EpochPlan, Interactions, Rating, SplitData};
pub use recommender::{FactorModel, PopularityRanker, Recommender, TrainConfig};
pub use reranker::{Algorithm, HistoryLedger, RerankConfig, UserCategoryPreference, Variant};
pub use simulator::{Prepared, RunConfig, RunTrace, Seeds};

