//! End-to-end search: normalize, expand, plan, dispatch, merge, rank.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::gateway::{dispatch, AdapterKind, AdapterRegistry, FetchReport, GatewayConfig, GatewayError};
use crate::query::{generate_combinations, normalize, QcgConfig, QueryError, RawQuery};
use crate::ranker::{rank_with, ScoreParams, ScoredResult};
use crate::seid::{resolve_plan, Seid, SeidError, SeidStore};
use crate::store::{Contributor, SearchSession, SessionStore, DEFAULT_SESSION_TTL};

pub const DEFAULT_RESULT_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("no engine is enabled")]
    NoEnginesEnabled,
    #[error("every backend request failed")]
    AllBackendsFailed(FetchReport),
    #[error(transparent)]
    Seid(SeidError),
    #[error(transparent)]
    Gateway(GatewayError),
}

impl SearchError {
    /// Stable identifier used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            SearchError::Query(QueryError::EmptyQuery) => "EmptyQuery",
            SearchError::Query(QueryError::QueryTooLong(_)) => "QueryTooLong",
            SearchError::Query(_) => "InvalidQueryConfig",
            SearchError::NoEnginesEnabled => "NoEnginesEnabled",
            SearchError::AllBackendsFailed(_) => "AllBackendsFailed",
            SearchError::Seid(_) => "SeidError",
            SearchError::Gateway(_) => "GatewayError",
        }
    }

    /// True for problems with the request itself rather than the service.
    pub fn is_client_error(&self) -> bool {
        matches!(self, SearchError::Query(QueryError::EmptyQuery | QueryError::QueryTooLong(_)))
    }
}

impl From<SeidError> for SearchError {
    fn from(e: SeidError) -> Self {
        match e {
            SeidError::NoEnginesEnabled => SearchError::NoEnginesEnabled,
            other => SearchError::Seid(other),
        }
    }
}

impl From<GatewayError> for SearchError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::AllBackendsFailed(report) => SearchError::AllBackendsFailed(report),
            other => SearchError::Gateway(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    pub qcg: QcgConfig,
    pub gateway: GatewayConfig,
    pub score: ScoreParams,
    pub session_ttl: Duration,
    pub execution: Execution,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            qcg: QcgConfig::default(),
            gateway: GatewayConfig::default(),
            score: ScoreParams::default(),
            session_ttl: DEFAULT_SESSION_TTL,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// Results kept after ranking.
    pub limit: usize,
    /// Adds full-precision scores to each row.
    pub verbose: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            limit: DEFAULT_RESULT_LIMIT,
            verbose: false,
        }
    }
}

pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSummary {
    pub engine_id: String,
    pub display_name: String,
    pub priority: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub final_rank: usize,
    pub canonical_url: String,
    pub title: String,
    pub snippet: String,
    pub telli_factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub telli_factor_exact: Option<f64>,
    pub engines: Vec<Contributor>,
    pub hit_count: u64,
    pub out_links: u64,
    pub weight: f64,
    pub relevance_factor: f64,
}

impl ResultRow {
    fn from_scored(s: &ScoredResult, verbose: bool) -> Self {
        Self {
            final_rank: s.final_rank,
            canonical_url: s.merged.canonical_url.clone(),
            title: s.merged.title.clone(),
            snippet: s.merged.snippet.clone(),
            telli_factor: round3(s.telli_factor),
            telli_factor_exact: verbose.then_some(s.telli_factor),
            engines: s.merged.contributors.clone(),
            hit_count: s.merged.hit_count,
            out_links: s.merged.out_links,
            weight: round3(s.effective_weight),
            relevance_factor: s.relevance_factor,
        }
    }
}

/// What a search returns to API and CLI callers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResponse {
    pub query: String,
    pub combinations: Vec<String>,
    pub plan: Vec<PlanSummary>,
    pub damping: f64,
    pub total_results: usize,
    pub results: Vec<ResultRow>,
    pub fetch_report: FetchReport,
    pub timing_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineInfo {
    pub engine_id: String,
    pub display_name: String,
    pub initial_weight: f64,
    pub enabled: bool,
    pub adapter: Option<AdapterKind>,
}

/// The metasearch service state shared by every request.
#[derive(Debug)]
pub struct Metasearch {
    seid: Arc<SeidStore>,
    registry: AdapterRegistry,
    settings: SearchSettings,
    sessions: SessionStore,
}

impl Metasearch {
    pub fn new(seid: Arc<SeidStore>, registry: AdapterRegistry, settings: SearchSettings) -> Self {
        Self {
            seid,
            registry,
            settings,
            sessions: SessionStore::new(),
        }
    }

    /// Default roster over the bundled fixture corpora, not persisted.
    pub fn with_fixtures() -> Self {
        Self::new(
            Arc::new(SeidStore::in_memory(Seid::default_roster())),
            crate::gateway::default_registry(),
            SearchSettings::default(),
        )
    }

    pub fn settings(&self) -> &SearchSettings {
        &self.settings
    }

    pub fn seid(&self) -> &SeidStore {
        &self.seid
    }

    pub fn registry(&self) -> &AdapterRegistry {
        &self.registry
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn engines(&self) -> Vec<EngineInfo> {
        self.seid
            .snapshot()
            .engines()
            .iter()
            .map(|e| EngineInfo {
                engine_id: e.engine_id.clone(),
                display_name: e.display_name.clone(),
                initial_weight: e.initial_weight,
                enabled: e.enabled,
                adapter: self.registry.get(&e.engine_id).map(|a| a.kind()),
            })
            .collect()
    }

    pub fn set_engine_weight(&self, engine_id: &str, weight: f64) -> Result<(), SeidError> {
        self.seid.set_engine_weight(engine_id, weight).map(drop)
    }

    pub async fn search(&self, query: &str, options: SearchOptions) -> Result<SearchResponse, SearchError> {
        self.search_with_session(query, options).await.map(|(r, _)| r)
    }

    /// Runs one search and also returns the stored session.
    pub async fn search_with_session(
        &self,
        query: &str,
        options: SearchOptions,
    ) -> Result<(SearchResponse, Arc<SearchSession>), SearchError> {
        let started = Instant::now();
        let settings = &self.settings;
        settings.qcg.validate()?;

        let raw = RawQuery::new(query)?;
        let tokens = normalize(&raw, &settings.qcg)?;
        let combinations = generate_combinations(&tokens, &settings.qcg);
        let seid = self.seid.snapshot();
        let plan = resolve_plan(&combinations, &seid)?;

        let dispatched = dispatch(&plan, &self.registry, &settings.gateway).await?;
        let session = self.sessions.insert(SearchSession::new(
            raw.as_str(),
            plan,
            dispatched.buffers,
            dispatched.report,
            settings.session_ttl,
        ));

        let merged = session.filter_and_merge(settings.execution);
        let ranked = rank_with(&merged, &session.plan, &settings.score, settings.execution);

        let response = SearchResponse {
            query: raw.as_str().to_owned(),
            combinations: session.combinations.iter().map(|c| c.phrase.clone()).collect(),
            plan: session
                .plan
                .entries
                .iter()
                .map(|e| PlanSummary {
                    engine_id: e.engine_id.clone(),
                    display_name: e.display_name.clone(),
                    priority: e.priority,
                    weight: e.resolved_weight,
                })
                .collect(),
            damping: settings.score.damping,
            total_results: ranked.len(),
            results: ranked
                .iter()
                .take(options.limit)
                .map(|s| ResultRow::from_scored(s, options.verbose))
                .collect(),
            fetch_report: session.fetch_report.clone(),
            timing_ms: started.elapsed().as_millis() as u64,
        };
        Ok((response, session))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn fixture_search_is_ranked_and_deterministic() {
        let svc = Metasearch::with_fixtures();
        let a = svc.search("semantic web", SearchOptions::default()).await.unwrap();
        assert_eq!(a.combinations, ["semantic web", "semantic", "web"]);
        assert!(!a.results.is_empty());
        assert!(a.results.windows(2).all(|w| w[0].telli_factor >= w[1].telli_factor));
        assert_eq!(a.results.iter().map(|r| r.final_rank).collect::<Vec<_>>(), (1..=a.results.len()).collect::<Vec<_>>());
        let mut b = svc.search("semantic web", SearchOptions::default()).await.unwrap();
        b.timing_ms = a.timing_ms;
        assert_eq!(a, b);
        assert_eq!(svc.sessions().len(), 2);
    }

    #[tokio::test]
    async fn limit_truncates_after_ranking() {
        let svc = Metasearch::with_fixtures();
        let full = svc.search("semantic web", SearchOptions::default()).await.unwrap();
        let top = svc.search("semantic web", SearchOptions { limit: 2, verbose: true }).await.unwrap();
        assert_eq!(top.results.len(), 2);
        assert_eq!(top.total_results, full.total_results);
        assert_eq!(top.results[0].canonical_url, full.results[0].canonical_url);
        assert!(top.results[0].telli_factor_exact.is_some());
        assert!(full.results[0].telli_factor_exact.is_none());
    }

    #[tokio::test]
    async fn error_paths() {
        let svc = Metasearch::with_fixtures();
        let err = svc.search("   ", SearchOptions::default()).await.unwrap_err();
        assert_eq!(err.code(), "EmptyQuery");
        assert!(err.is_client_error());

        for id in ["duckduckgo", "hakia", "sensebot"] {
            svc.seid().update(|s| s.set_enabled(id, false)).unwrap();
        }
        let err = svc.search("semantic web", SearchOptions::default()).await.unwrap_err();
        assert_eq!(err, SearchError::NoEnginesEnabled);
        assert!(!err.is_client_error());
    }

    #[tokio::test]
    async fn unknown_phrase_yields_empty_results() {
        let svc = Metasearch::with_fixtures();
        let r = svc.search("zzzz qqqq", SearchOptions::default()).await.unwrap();
        assert!(r.results.is_empty());
        assert_eq!(r.fetch_report.entries.len(), 9);
    }
}
