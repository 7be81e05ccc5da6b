//! Backend adapters and the concurrent fan-out that feeds them.
//!
//! Every `(engine, combination)` pair in a plan is fetched exactly once, with
//! a per-request timeout and a cap on requests in flight. A failing engine
//! only empties its own buffer; the search as a whole fails only when every
//! pair failed.

mod fixture;
mod http;
mod scripted;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::query::QueryCombination;
use crate::seid::EnginePlan;
use crate::store::normalize_url;

pub use fixture::{default_registry, FixtureAdapter, FixtureCorpus, FixtureError, FixtureRecord, SHIPPED_CORPORA};
pub use http::{HttpAdapterConfig, HttpJsonAdapter};
pub use scripted::{Fault, ScriptedAdapter};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend timed out")]
    BackendTimeout,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("result limit must be at least 1")]
    InvalidLimit,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("every backend request failed")]
    AllBackendsFailed(FetchReport),
    #[error("invalid gateway configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("`{0}` is not an absolute http(s) URL")]
pub struct InvalidResultUrl(pub String);

/// One hit from one engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResult {
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub out_links: u64,
    pub origin_engine: String,
    /// 1 is the engine's best hit.
    pub origin_rank: usize,
    pub source_combination: String,
    /// Forces the hit count; only fixture corpora set this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_hint: Option<u64>,
}

pub(crate) fn check_result_url(url: &str) -> Result<(), InvalidResultUrl> {
    match url::Url::parse(url) {
        Ok(u) if matches!(u.scheme(), "http" | "https") && u.has_host() => Ok(()),
        _ => Err(InvalidResultUrl(url.to_owned())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Fixture,
    Scripted,
    Http,
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdapterKind::Fixture => "fixture",
            AdapterKind::Scripted => "scripted",
            AdapterKind::Http => "http",
        })
    }
}

/// A search backend. Implementations must tolerate concurrent calls.
///
/// `fetch` returns at most `limit` results ranked `1..=n` in order, each
/// tagged with this adapter's engine id. Returning no results is not an
/// error.
#[async_trait]
pub trait SearchAdapter: Send + Sync {
    fn engine_id(&self) -> &str;

    fn kind(&self) -> AdapterKind;

    async fn fetch(
        &self,
        combination: &QueryCombination,
        limit: usize,
    ) -> Result<Vec<RawResult>, BackendError>;
}

/// Calls `adapter` after checking the limit, then verifies the adapter
/// honoured its contract.
pub async fn fetch_checked(
    adapter: &dyn SearchAdapter,
    combination: &QueryCombination,
    limit: usize,
) -> Result<Vec<RawResult>, BackendError> {
    if limit == 0 {
        return Err(BackendError::InvalidLimit);
    }
    let results = adapter.fetch(combination, limit).await?;
    if results.len() > limit {
        return Err(BackendError::MalformedResponse(format!(
            "{} results for limit {limit}",
            results.len()
        )));
    }
    for (i, r) in results.iter().enumerate() {
        if r.origin_engine != adapter.engine_id() {
            return Err(BackendError::MalformedResponse(format!(
                "result tagged `{}` from engine `{}`",
                r.origin_engine,
                adapter.engine_id()
            )));
        }
        if r.origin_rank != i + 1 {
            return Err(BackendError::MalformedResponse(format!(
                "rank {} at position {}",
                r.origin_rank,
                i + 1
            )));
        }
        check_result_url(&r.url).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayConfig {
    pub per_engine_timeout: Duration,
    pub max_results_per_engine_per_combination: usize,
    pub max_parallel_requests: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            per_engine_timeout: Duration::from_secs(3),
            max_results_per_engine_per_combination: 10,
            max_parallel_requests: 8,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.per_engine_timeout.is_zero() {
            return Err(GatewayError::InvalidConfig("per_engine_timeout must be positive"));
        }
        if self.max_results_per_engine_per_combination == 0 {
            return Err(GatewayError::InvalidConfig("max_results_per_engine_per_combination must be positive"));
        }
        if self.max_parallel_requests == 0 {
            return Err(GatewayError::InvalidConfig("max_parallel_requests must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FetchOutcome {
    Ok { results: usize },
    TimedOut,
    Failed { reason: String },
}

impl FetchOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, FetchOutcome::Ok { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchReportEntry {
    pub engine_id: String,
    pub combination: String,
    #[serde(flatten)]
    pub outcome: FetchOutcome,
}

/// One entry per dispatched pair, in plan priority then combination order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FetchReport {
    pub entries: Vec<FetchReportEntry>,
}

impl FetchReport {
    pub fn count(&self, pred: impl Fn(&FetchOutcome) -> bool) -> usize {
        self.entries.iter().filter(|e| pred(&e.outcome)).count()
    }
}

/// Results of one engine for one search, in that engine's rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineBuffer {
    pub engine_id: String,
    pub results: Vec<RawResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatched {
    pub buffers: Vec<EngineBuffer>,
    pub report: FetchReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdapterInfo {
    pub engine_id: String,
    pub kind: AdapterKind,
}

/// Adapters keyed by engine id, in registration order.
#[derive(Clone, Default)]
pub struct AdapterRegistry {
    adapters: Vec<Arc<dyn SearchAdapter>>,
}

impl fmt::Debug for AdapterRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.list_adapters()).finish()
    }
}

impl AdapterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an adapter. Registering an id twice replaces the old adapter in
    /// place and returns it.
    pub fn register(&mut self, adapter: Arc<dyn SearchAdapter>) -> Option<Arc<dyn SearchAdapter>> {
        match self.adapters.iter_mut().find(|a| a.engine_id() == adapter.engine_id()) {
            Some(slot) => Some(std::mem::replace(slot, adapter)),
            None => {
                self.adapters.push(adapter);
                None
            }
        }
    }

    pub fn get(&self, engine_id: &str) -> Option<&Arc<dyn SearchAdapter>> {
        self.adapters.iter().find(|a| a.engine_id() == engine_id)
    }

    pub fn list_adapters(&self) -> Vec<AdapterInfo> {
        self.adapters
            .iter()
            .map(|a| AdapterInfo {
                engine_id: a.engine_id().to_owned(),
                kind: a.kind(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.adapters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adapters.is_empty()
    }
}

/// Fetches every `(engine, combination)` pair of `plan` and groups results
/// per engine.
///
/// An engine's buffer lists its hits combination by combination in plan
/// order, each in the engine's own rank order. A URL the engine already
/// returned for an earlier combination is skipped, and ranks are renumbered
/// over the whole buffer so they stay strictly increasing.
pub async fn dispatch(
    plan: &EnginePlan,
    registry: &AdapterRegistry,
    config: &GatewayConfig,
) -> Result<Dispatched, GatewayError> {
    config.validate()?;
    let limit = config.max_results_per_engine_per_combination;
    let permits = Arc::new(Semaphore::new(config.max_parallel_requests));
    let mut tasks = JoinSet::new();

    let pairs: Vec<(&str, &QueryCombination)> = plan
        .entries
        .iter()
        .flat_map(|e| plan.combinations.iter().map(move |c| (e.engine_id.as_str(), c)))
        .collect();

    let mut outcomes: Vec<Option<Result<Vec<RawResult>, FetchOutcome>>> = vec![None; pairs.len()];

    for (slot, (engine_id, combination)) in pairs.iter().enumerate() {
        let Some(adapter) = registry.get(engine_id).cloned() else {
            outcomes[slot] = Some(Err(FetchOutcome::Failed {
                reason: "no adapter registered".into(),
            }));
            continue;
        };
        let combination = (*combination).clone();
        let permits = permits.clone();
        let timeout = config.per_engine_timeout;
        tasks.spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore closed");
            let fetched = tokio::time::timeout(timeout, fetch_checked(adapter.as_ref(), &combination, limit)).await;
            let outcome = match fetched {
                Ok(Ok(results)) => Ok(results),
                Ok(Err(BackendError::BackendTimeout)) | Err(_) => Err(FetchOutcome::TimedOut),
                Ok(Err(e)) => Err(FetchOutcome::Failed { reason: e.to_string() }),
            };
            (slot, outcome)
        });
    }

    while let Some(joined) = tasks.join_next().await {
        let (slot, outcome) = match joined {
            Ok(done) => done,
            Err(e) => {
                // a panicking adapter is reported like any other failure
                tracing::error!("adapter task aborted: {e}");
                continue;
            }
        };
        outcomes[slot] = Some(outcome);
    }

    let mut report = FetchReport::default();
    let mut buffers: Vec<EngineBuffer> = plan
        .entries
        .iter()
        .map(|e| EngineBuffer {
            engine_id: e.engine_id.clone(),
            results: Vec::new(),
        })
        .collect();
    let mut seen: Vec<HashSet<String>> = vec![HashSet::new(); buffers.len()];
    let per_engine = plan.combinations.len();

    for (slot, ((engine_id, combination), outcome)) in pairs.iter().zip(outcomes).enumerate() {
        let engine_idx = slot / per_engine.max(1);
        let outcome = outcome.unwrap_or_else(|| {
            Err(FetchOutcome::Failed {
                reason: "adapter task panicked".into(),
            })
        });
        let outcome = match outcome {
            Ok(results) => {
                let count = results.len();
                let buffer = &mut buffers[engine_idx];
                for mut r in results {
                    let key = normalize_url(&r.url).unwrap_or_else(|_| r.url.clone());
                    if seen[engine_idx].insert(key) {
                        r.origin_rank = buffer.results.len() + 1;
                        buffer.results.push(r);
                    }
                }
                FetchOutcome::Ok { results: count }
            }
            Err(failed) => {
                tracing::warn!(engine = engine_id, combination = %combination.phrase, ?failed, "backend fetch failed");
                failed
            }
        };
        report.entries.push(FetchReportEntry {
            engine_id: (*engine_id).to_owned(),
            combination: combination.phrase.clone(),
            outcome,
        });
    }

    if !report.entries.is_empty() && report.count(FetchOutcome::is_ok) == 0 {
        return Err(GatewayError::AllBackendsFailed(report));
    }
    Ok(Dispatched { buffers, report })
}
