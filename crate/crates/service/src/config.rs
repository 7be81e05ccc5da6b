//! `key = value` configuration and service assembly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use semantelli_core::gateway::{
    AdapterRegistry, FixtureAdapter, FixtureCorpus, HttpAdapterConfig, HttpJsonAdapter, SHIPPED_CORPORA,
};
use semantelli_core::query::load_stopwords;
use semantelli_core::{Metasearch, SearchSettings, SeidStore};
use thiserror::Error;

/// Environment variable naming the config file.
pub const CONFIG_ENV: &str = "SEMANTELLI_CONFIG";
pub const DEFAULT_SEID_PATH: &str = "semantelli.seid";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("config line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("path for `{key}` does not exist: {path}")]
    MissingPath { key: &'static str, path: String },
    #[error(transparent)]
    Seid(#[from] semantelli_core::seid::SeidError),
    #[error(transparent)]
    Fixture(#[from] semantelli_core::gateway::FixtureError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub seid_path: PathBuf,
    /// Holds `<engine_id>.txt` corpora. Bundled corpora are used when unset.
    pub fixture_dir: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub listen: String,
    pub settings: SearchSettings,
    pub http_adapters: BTreeMap<String, HttpAdapterConfig>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seid_path: PathBuf::from(DEFAULT_SEID_PATH),
            fixture_dir: None,
            stopwords_path: None,
            ui_dir: None,
            listen: DEFAULT_LISTEN.to_owned(),
            settings: SearchSettings::default(),
            http_adapters: BTreeMap::new(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_owned(),
        reason: e.to_string(),
    })
}

impl AppConfig {
    /// Parses config text. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = AppConfig::default();
        let resolve = |v: &str| base.join(v);

        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line: idx + 1,
                    reason: format!("expected key = value, got `{line}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value, &resolve).map_err(|e| match e {
                ConfigError::Malformed { reason, .. } => ConfigError::Malformed { line: idx + 1, reason },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, resolve: &dyn Fn(&str) -> PathBuf) -> Result<(), ConfigError> {
        let s = &mut self.settings;
        match key {
            "seid" => self.seid_path = resolve(value),
            "fixtures" => self.fixture_dir = Some(resolve(value)),
            "stopwords" => self.stopwords_path = Some(resolve(value)),
            "ui_dir" => self.ui_dir = Some(resolve(value)),
            "listen" => self.listen = value.to_owned(),
            "timeout_ms" => s.gateway.per_engine_timeout = Duration::from_millis(parse_value(key, value)?),
            "max_results" => s.gateway.max_results_per_engine_per_combination = parse_value(key, value)?,
            "max_parallel" => s.gateway.max_parallel_requests = parse_value(key, value)?,
            "damping" => s.score.damping = parse_value(key, value)?,
            "redundancy_increment" => s.score.redundancy_increment = parse_value(key, value)?,
            "relevance_divisor" => s.score.relevance_divisor = parse_value(key, value)?,
            "component_cap" => s.score.component_cap = parse_value(key, value)?,
            "relevance_numerator" => s.score.relevance_numerator = parse_value(key, value)?,
            "max_tokens" => s.qcg.max_tokens_per_combination = parse_value(key, value)?,
            "max_combinations" => s.qcg.max_combinations = parse_value(key, value)?,
            "min_token_length" => s.qcg.min_token_length = parse_value(key, value)?,
            "session_ttl_s" => s.session_ttl = Duration::from_secs(parse_value(key, value)?),
            _ => {
                let Some(rest) = key.strip_prefix("http.") else {
                    return Err(ConfigError::Malformed {
                        line: 0,
                        reason: format!("unknown key `{key}`"),
                    });
                };
                let Some((engine, field)) = rest.split_once('.') else {
                    return Err(ConfigError::Malformed {
                        line: 0,
                        reason: format!("expected http.<engine>.<field>, got `{key}`"),
                    });
                };
                let adapter = self
                    .http_adapters
                    .entry(engine.to_owned())
                    .or_insert_with(|| HttpAdapterConfig::new(""));
                match field {
                    "endpoint" => adapter.endpoint = value.to_owned(),
                    "results_path" => adapter.results_path = value.to_owned(),
                    "url_field" => adapter.url_field = value.to_owned(),
                    "title_field" => adapter.title_field = value.to_owned(),
                    "snippet_field" => adapter.snippet_field = value.to_owned(),
                    other => {
                        return Err(ConfigError::Malformed {
                            line: 0,
                            reason: format!("unknown http adapter field `{other}`"),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Loads `explicit`, else the file named by `SEMANTELLI_CONFIG`, else
    /// defaults.
    pub fn discover(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(p),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: String| ConfigError::InvalidValue {
            key: key.to_owned(),
            reason,
        };
        self.settings.score.validate().map_err(|e| invalid("score", e.to_string()))?;
        self.settings.gateway.validate().map_err(|e| invalid("gateway", e.to_string()))?;
        self.settings.qcg.validate().map_err(|e| invalid("query", e.to_string()))?;
        for (engine, http) in &self.http_adapters {
            if !http.endpoint.contains("{query}") {
                return Err(invalid(&format!("http.{engine}.endpoint"), "missing {query} placeholder".into()));
            }
        }
        Ok(())
    }

    fn check_paths(&self) -> Result<(), ConfigError> {
        let paths = [
            ("fixtures", &self.fixture_dir),
            ("stopwords", &self.stopwords_path),
            ("ui_dir", &self.ui_dir),
        ];
        for (key, path) in paths {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(ConfigError::MissingPath {
                        key,
                        path: p.display().to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Opens the SEID (creating it with the default roster when absent) and
    /// registers one adapter per engine: HTTP when configured, else a fixture
    /// corpus from `fixture_dir`, else the bundled corpus of that name.
    pub fn build_service(&self) -> Result<Metasearch, ConfigError> {
        self.validate()?;
        self.check_paths()?;

        let mut settings = self.settings.clone();
        if let Some(path) = &self.stopwords_path {
            settings.qcg.stopwords = load_stopwords(path).map_err(|e| ConfigError::InvalidValue {
                key: "stopwords".into(),
                reason: e.to_string(),
            })?;
        }

        let seid = SeidStore::open(&self.seid_path)?;
        let mut registry = AdapterRegistry::new();
        for engine in seid.snapshot().engines() {
            let id = engine.engine_id.as_str();
            if let Some(http) = self.http_adapters.get(id) {
                registry.register(Arc::new(HttpJsonAdapter::new(id, http.clone())));
                continue;
            }
            let corpus = match &self.fixture_dir {
                Some(dir) if dir.join(format!("{id}.txt")).exists() => Some(FixtureCorpus::load(dir.join(format!("{id}.txt")))?),
                Some(_) => None,
                None => SHIPPED_CORPORA
                    .iter()
                    .find(|(name, _)| *name == id)
                    .map(|(_, text)| FixtureCorpus::parse(text))
                    .transpose()?,
            };
            match corpus {
                Some(corpus) => {
                    registry.register(Arc::new(FixtureAdapter::new(id, corpus)));
                }
                None => tracing::warn!(engine = id, "no adapter configured"),
            }
        }
        Ok(Metasearch::new(Arc::new(seid), registry, settings))
    }
}
