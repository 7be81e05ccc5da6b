use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use thiserror::Error;

use super::{check_result_url, AdapterKind, AdapterRegistry, BackendError, RawResult, SearchAdapter};
use crate::query::QueryCombination;

/// Corpora bundled for the default roster, as `(engine_id, file contents)`.
pub const SHIPPED_CORPORA: &[(&str, &str)] = &[
    ("duckduckgo", include_str!("../../fixtures/duckduckgo.txt")),
    ("hakia", include_str!("../../fixtures/hakia.txt")),
    ("sensebot", include_str!("../../fixtures/sensebot.txt")),
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FixtureError {
    #[error("fixture line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("failed to read fixture {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureRecord {
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub out_links: u64,
    pub hit_hint: Option<u64>,
}

fn phrase_key(phrase: &str) -> String {
    phrase.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Canned results keyed by combination phrase.
///
/// File format, one record per line:
/// `phrase | url | title | snippet | out_links | hit_hint`, where `hit_hint`
/// may be empty or left out. `#` at the start of a line marks a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureCorpus {
    by_phrase: HashMap<String, Vec<FixtureRecord>>,
}

impl FixtureCorpus {
    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let mut corpus = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| FixtureError::Malformed { line: line_no, reason };
            let fields: Vec<&str> = trimmed.split('|').map(str::trim).collect();
            if !(5..=6).contains(&fields.len()) {
                return Err(malformed(format!("expected 5 or 6 fields, found {}", fields.len())));
            }
            let phrase = phrase_key(fields[0]);
            if phrase.is_empty() {
                return Err(malformed("empty phrase".into()));
            }
            check_result_url(fields[1]).map_err(|e| malformed(e.to_string()))?;
            let out_links = fields[4]
                .parse()
                .map_err(|_| malformed(format!("bad out_links `{}`", fields[4])))?;
            let hit_hint = match fields.get(5) {
                None | Some(&"") => None,
                Some(h) => Some(h.parse().map_err(|_| malformed(format!("bad hit_hint `{h}`")))?),
            };
            corpus.push(
                &phrase,
                FixtureRecord {
                    url: fields[1].to_owned(),
                    title: fields[2].to_owned(),
                    snippet: fields[3].to_owned(),
                    out_links,
                    hit_hint,
                },
            );
        }
        Ok(corpus)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FixtureError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn push(&mut self, phrase: &str, record: FixtureRecord) {
        self.by_phrase.entry(phrase_key(phrase)).or_default().push(record);
    }

    pub fn records(&self, phrase: &str) -> &[FixtureRecord] {
        self.by_phrase.get(&phrase_key(phrase)).map_or(&[], Vec::as_slice)
    }
}

/// Serves results from a [`FixtureCorpus`].
#[derive(Debug, Clone)]
pub struct FixtureAdapter {
    engine_id: String,
    corpus: Arc<FixtureCorpus>,
}

impl FixtureAdapter {
    pub fn new(engine_id: impl Into<String>, corpus: FixtureCorpus) -> Self {
        Self {
            engine_id: engine_id.into(),
            corpus: Arc::new(corpus),
        }
    }
}

#[async_trait]
impl SearchAdapter for FixtureAdapter {
    fn engine_id(&self) -> &str {
        &self.engine_id
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::Fixture
    }

    async fn fetch(&self, combination: &QueryCombination, limit: usize) -> Result<Vec<RawResult>, BackendError> {
        Ok(self
            .corpus
            .records(&combination.phrase)
            .iter()
            .take(limit)
            .enumerate()
            .map(|(i, rec)| RawResult {
                url: rec.url.clone(),
                title: rec.title.clone(),
                snippet: rec.snippet.clone(),
                out_links: rec.out_links,
                origin_engine: self.engine_id.clone(),
                origin_rank: i + 1,
                source_combination: combination.phrase.clone(),
                hit_hint: rec.hit_hint,
            })
            .collect())
    }
}

/// Fixture adapters for DuckDuckGo, Hakia and SenseBot over the bundled
/// corpora.
pub fn default_registry() -> AdapterRegistry {
    let mut registry = AdapterRegistry::new();
    for (engine_id, text) in SHIPPED_CORPORA {
        let corpus = FixtureCorpus::parse(text).expect("shipped corpus parses");
        registry.register(Arc::new(FixtureAdapter::new(*engine_id, corpus)));
    }
    registry
}
