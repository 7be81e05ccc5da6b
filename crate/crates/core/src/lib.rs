//! Federated metasearch over pluggable search backends.
//!
//! A query flows through five stages:
//!
//! 1. [`query`] expands the user text into contiguous n-gram combinations.
//! 2. [`seid`] resolves per-engine weights and priorities for those
//!    combinations from the engine database.
//! 3. [`gateway`] fans the combinations out to every planned engine.
//! 4. [`store`] keeps the per-engine buffers, filters them against the plan
//!    and merges duplicate pages.
//! 5. [`ranker`] scores every merged page with the telliFactor and orders
//!    the results.
//!
//! [`pipeline::Metasearch`] runs all five for one request.

pub mod exec;
pub mod gateway;
pub mod pipeline;
pub mod query;
pub mod ranker;
pub mod seid;
pub mod store;

pub use exec::Execution;
pub use gateway::{AdapterKind, AdapterRegistry, GatewayConfig, RawResult, SearchAdapter};
pub use pipeline::{Metasearch, SearchError, SearchOptions, SearchResponse, SearchSettings};
pub use query::{QcgConfig, QueryCombination, RawQuery};
pub use ranker::{RelevanceNumerator, ScoreParams, ScoredResult};
pub use seid::{EnginePlan, Seid, SeidStore};
pub use store::MergedResult;
