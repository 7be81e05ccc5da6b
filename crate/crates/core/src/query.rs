//! Query combination generation.
//!
//! A raw user query is normalized into lowercase tokens and expanded into
//! contiguous n-grams, longest first. Each n-gram is one query combination
//! that gets dispatched to every planned engine.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum accepted query length, in characters.
pub const MAX_QUERY_CHARS: usize = 1024;

const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "in", "is", "it",
    "its", "of", "on", "or", "that", "the", "this", "to", "was", "were", "what", "when", "where",
    "which", "who", "will", "with",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("query is {0} characters long, the limit is {MAX_QUERY_CHARS}")]
    QueryTooLong(usize),
    #[error("invalid combination settings: {0}")]
    InvalidConfig(&'static str),
    #[error("failed to read stopword file {path}: {reason}")]
    StopwordFile { path: String, reason: String },
}

/// User input that passed the basic shape checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawQuery(String);

impl RawQuery {
    pub fn new(text: impl Into<String>) -> Result<Self, QueryError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(QueryError::EmptyQuery);
        }
        let len = text.chars().count();
        if len > MAX_QUERY_CHARS {
            return Err(QueryError::QueryTooLong(len));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// One expanded phrase of the user query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryCombination {
    pub tokens: Vec<String>,
    pub phrase: String,
    /// `(start, length)` within the normalized token list.
    pub span: (usize, usize),
}

impl QueryCombination {
    pub fn new(tokens: Vec<String>, start: usize) -> Self {
        let phrase = tokens.join(" ");
        let len = tokens.len();
        Self {
            tokens,
            phrase,
            span: (start, len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QcgConfig {
    pub max_tokens_per_combination: usize,
    pub stopwords: HashSet<String>,
    pub min_token_length: usize,
    pub max_combinations: usize,
}

impl Default for QcgConfig {
    fn default() -> Self {
        Self {
            max_tokens_per_combination: 4,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            min_token_length: 2,
            max_combinations: 32,
        }
    }
}

impl QcgConfig {
    pub fn validate(&self) -> Result<(), QueryError> {
        if self.max_tokens_per_combination == 0 {
            return Err(QueryError::InvalidConfig("max_tokens_per_combination must be >= 1"));
        }
        if self.max_combinations == 0 {
            return Err(QueryError::InvalidConfig("max_combinations must be >= 1"));
        }
        if self.min_token_length == 0 {
            return Err(QueryError::InvalidConfig("min_token_length must be >= 1"));
        }
        Ok(())
    }
}

/// Parses a stopword list: one term per line, `#` starts a comment.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|term| !term.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>, QueryError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| QueryError::StopwordFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(parse_stopwords(&text))
}

/// Lowercases, strips punctuation and drops stopwords and short tokens.
///
/// Punctuation acts as a separator, so `semantic-web` yields two tokens. When
/// filtering would leave nothing, the unfiltered tokens are returned instead.
pub fn normalize(raw: &RawQuery, config: &QcgConfig) -> Result<Vec<String>, QueryError> {
    let lowered = raw.as_str().to_lowercase();
    let all: Vec<String> = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    if all.is_empty() {
        return Err(QueryError::EmptyQuery);
    }

    let kept: Vec<String> = all
        .iter()
        .filter(|t| t.chars().count() >= config.min_token_length && !config.stopwords.contains(*t))
        .cloned()
        .collect();

    Ok(if kept.is_empty() { all } else { kept })
}

/// Expands tokens into contiguous n-grams, longest first, then by start
/// position. Repeated phrases keep their first occurrence and the list is cut
/// at `max_combinations`.
pub fn generate_combinations(tokens: &[String], config: &QcgConfig) -> Vec<QueryCombination> {
    if tokens.is_empty() {
        return Vec::new();
    }
    let longest = config.max_tokens_per_combination.min(tokens.len());
    let mut seen = HashSet::new();
    let mut out = Vec::new();

    'outer: for n in (1..=longest).rev() {
        for start in 0..=tokens.len() - n {
            let combination = QueryCombination::new(tokens[start..start + n].to_vec(), start);
            if seen.insert(combination.phrase.clone()) {
                out.push(combination);
                if out.len() == config.max_combinations {
                    break 'outer;
                }
            }
        }
    }
    out
}
