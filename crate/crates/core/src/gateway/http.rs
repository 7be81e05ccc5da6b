use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{check_result_url, AdapterKind, BackendError, RawResult, SearchAdapter};
use crate::query::QueryCombination;

/// Where to send queries and how to read the JSON that comes back.
///
/// Field paths are dot-separated object keys. An empty `results_path` means
/// the response body itself is the result array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpAdapterConfig {
    /// URL with a `{query}` placeholder, e.g. `http://host/search?q={query}`.
    pub endpoint: String,
    pub results_path: String,
    pub url_field: String,
    pub title_field: String,
    pub snippet_field: String,
}

impl HttpAdapterConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            results_path: "results".into(),
            url_field: "url".into(),
            title_field: "title".into(),
            snippet_field: "snippet".into(),
        }
    }

    pub fn request_url(&self, phrase: &str) -> String {
        let encoded: String = url::form_urlencoded::byte_serialize(phrase.as_bytes()).collect();
        self.endpoint.replace("{query}", &encoded)
    }
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    if path.is_empty() {
        return Some(value);
    }
    path.split('.').try_fold(value, |v, key| v.get(key))
}

/// Counts string fields holding an http(s) URL, at any depth.
fn count_links(value: &Value) -> u64 {
    match value {
        Value::String(s) => u64::from(s.starts_with("http://") || s.starts_with("https://")),
        Value::Array(items) => items.iter().map(count_links).sum(),
        Value::Object(map) => map.values().map(count_links).sum(),
        _ => 0,
    }
}

/// Generic JSON-over-HTTP backend.
#[derive(Debug, Clone)]
pub struct HttpJsonAdapter {
    engine_id: String,
    config: HttpAdapterConfig,
    client: reqwest::Client,
}

impl HttpJsonAdapter {
    pub fn new(engine_id: impl Into<String>, config: HttpAdapterConfig) -> Self {
        Self {
            engine_id: engine_id.into(),
            config,
            client: reqwest::Client::new(),
        }
    }

    /// Maps a decoded response body to results. Records whose URL is not an
    /// absolute http(s) URL are skipped; a record without a URL string makes
    /// the whole response malformed.
    pub fn parse_body(&self, body: &Value, combination: &QueryCombination, limit: usize) -> Result<Vec<RawResult>, BackendError> {
        let cfg = &self.config;
        let records = lookup(body, &cfg.results_path)
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::MalformedResponse(format!("no result array at `{}`", cfg.results_path)))?;

        let text = |record: &Value, path: &str| lookup(record, path).and_then(Value::as_str).unwrap_or("").to_owned();

        let mut out = Vec::new();
        for record in records {
            if out.len() == limit {
                break;
            }
            let url = lookup(record, &cfg.url_field)
                .and_then(Value::as_str)
                .ok_or_else(|| BackendError::MalformedResponse(format!("record without `{}`", cfg.url_field)))?;
            if check_result_url(url).is_err() {
                continue;
            }
            // the result's own URL is not an out-link
            let out_links = count_links(record).saturating_sub(1);
            out.push(RawResult {
                url: url.to_owned(),
                title: text(record, &cfg.title_field),
                snippet: text(record, &cfg.snippet_field),
                out_links,
                origin_engine: self.engine_id.clone(),
                origin_rank: out.len() + 1,
                source_combination: combination.phrase.clone(),
                hit_hint: None,
            });
        }
        Ok(out)
    }
}

#[async_trait]
impl SearchAdapter for HttpJsonAdapter {
    fn engine_id(&self) -> &str {
        &self.engine_id
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::Http
    }

    async fn fetch(&self, combination: &QueryCombination, limit: usize) -> Result<Vec<RawResult>, BackendError> {
        let response = self
            .client
            .get(self.config.request_url(&combination.phrase))
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::BackendTimeout
                } else {
                    BackendError::BackendUnavailable(e.to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::BackendUnavailable(format!("HTTP {status}")));
        }
        let body: Value = response
            .json()
            .await
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        self.parse_body(&body, combination, limit)
    }
}
