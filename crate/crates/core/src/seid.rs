//! Search engine information database and priority assignment.
//!
//! The database lists every known engine with its initial weight and a set of
//! keyword affinities that can raise an engine's weight for matching queries.
//! [`resolve_plan`] turns it into a per-query [`EnginePlan`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::QueryCombination;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeidError {
    #[error("malformed SEID file at line {line}: {reason}")]
    MalformedSeidFile { line: usize, reason: String },
    #[error("affinity at line {line} references unknown engine `{engine_id}`")]
    UnknownEngineReference { line: usize, engine_id: String },
    #[error("unknown engine `{0}`")]
    UnknownEngine(String),
    #[error("duplicate engine `{0}`")]
    DuplicateEngine(String),
    #[error("weight {0} is outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("no engine is enabled")]
    NoEnginesEnabled,
    #[error("SEID i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Weights are stored at the precision the file format prints.
fn quantize(weight: f64) -> f64 {
    (weight * 1000.0).round() / 1000.0
}

fn checked_weight(weight: f64) -> Result<f64, SeidError> {
    if !(0.0..=1.0).contains(&weight) || weight.is_nan() {
        return Err(SeidError::WeightOutOfRange(weight));
    }
    Ok(quantize(weight))
}

fn check_text(field: &str, value: &str) -> Result<(), SeidError> {
    if value.trim().is_empty() || value.contains('"') || value.contains('#') || value.contains('\n') {
        return Err(SeidError::InvalidField(format!("{field} `{value}`")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineDescriptor {
    pub engine_id: String,
    pub display_name: String,
    pub initial_weight: f64,
    pub enabled: bool,
}

impl EngineDescriptor {
    pub fn new(
        engine_id: impl Into<String>,
        display_name: impl Into<String>,
        initial_weight: f64,
        enabled: bool,
    ) -> Result<Self, SeidError> {
        let engine_id = engine_id.into();
        let display_name = display_name.into();
        check_text("engine_id", &engine_id)?;
        if engine_id.contains(char::is_whitespace) {
            return Err(SeidError::InvalidField(format!("engine_id `{engine_id}`")));
        }
        check_text("display_name", &display_name)?;
        Ok(Self {
            engine_id,
            display_name,
            initial_weight: checked_weight(initial_weight)?,
            enabled,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainAffinity {
    /// Lowercase term or phrase.
    pub keyword: String,
    pub engine_id: String,
    pub weight_override: f64,
}

impl DomainAffinity {
    pub fn new(
        keyword: impl AsRef<str>,
        engine_id: impl Into<String>,
        weight_override: f64,
    ) -> Result<Self, SeidError> {
        let keyword = keyword
            .as_ref()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        check_text("keyword", &keyword)?;
        Ok(Self {
            keyword,
            engine_id: engine_id.into(),
            weight_override: checked_weight(weight_override)?,
        })
    }

    /// Whole-phrase, case-insensitive containment on token boundaries.
    pub fn matches(&self, combination: &QueryCombination) -> bool {
        let needle: Vec<&str> = self.keyword.split(' ').collect();
        let hay: Vec<String> = combination.tokens.iter().map(|t| t.to_lowercase()).collect();
        hay.len() >= needle.len()
            && hay
                .windows(needle.len())
                .any(|w| w.iter().zip(&needle).all(|(a, b)| a == b))
    }
}

/// The engine database state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Seid {
    engines: Vec<EngineDescriptor>,
    affinities: Vec<DomainAffinity>,
}

impl Seid {
    pub fn new(
        engines: Vec<EngineDescriptor>,
        affinities: Vec<DomainAffinity>,
    ) -> Result<Self, SeidError> {
        let mut seid = Seid::default();
        for engine in engines {
            seid.add_engine(engine)?;
        }
        for affinity in affinities {
            seid.add_affinity(affinity)?;
        }
        Ok(seid)
    }

    /// The shipped roster: DuckDuckGo 0.3, Hakia 0.2, SenseBot 0.1.
    pub fn default_roster() -> Self {
        let engines = [
            ("duckduckgo", "DuckDuckGo", 0.3),
            ("hakia", "Hakia", 0.2),
            ("sensebot", "SenseBot", 0.1),
        ]
        .into_iter()
        .map(|(id, name, w)| EngineDescriptor::new(id, name, w, true).expect("valid roster"))
        .collect();
        Seid::new(engines, Vec::new()).expect("valid roster")
    }

    pub fn engines(&self) -> &[EngineDescriptor] {
        &self.engines
    }

    pub fn affinities(&self) -> &[DomainAffinity] {
        &self.affinities
    }

    pub fn engine(&self, engine_id: &str) -> Option<&EngineDescriptor> {
        self.engines.iter().find(|e| e.engine_id == engine_id)
    }

    pub fn add_engine(&mut self, engine: EngineDescriptor) -> Result<(), SeidError> {
        if self.engine(&engine.engine_id).is_some() {
            return Err(SeidError::DuplicateEngine(engine.engine_id));
        }
        self.engines.push(engine);
        Ok(())
    }

    pub fn add_affinity(&mut self, affinity: DomainAffinity) -> Result<(), SeidError> {
        if self.engine(&affinity.engine_id).is_none() {
            return Err(SeidError::UnknownEngineReference {
                line: 0,
                engine_id: affinity.engine_id,
            });
        }
        self.affinities.push(affinity);
        Ok(())
    }

    pub fn set_enabled(&self, engine_id: &str, enabled: bool) -> Result<Seid, SeidError> {
        let mut next = self.clone();
        next.engine_mut(engine_id)?.enabled = enabled;
        Ok(next)
    }

    fn engine_mut(&mut self, engine_id: &str) -> Result<&mut EngineDescriptor, SeidError> {
        self.engines
            .iter_mut()
            .find(|e| e.engine_id == engine_id)
            .ok_or_else(|| SeidError::UnknownEngine(engine_id.to_owned()))
    }
}

/// Returns a copy of `state` where only `engine_id`'s initial weight changed.
pub fn set_engine_weight(state: &Seid, engine_id: &str, weight: f64) -> Result<Seid, SeidError> {
    let mut next = state.clone();
    let engine = next.engine_mut(engine_id)?;
    engine.initial_weight = checked_weight(weight)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub engine_id: String,
    pub display_name: String,
    pub resolved_weight: f64,
    /// 1 is the most trusted engine for this query.
    pub priority: usize,
}

/// Per-query engine priorities plus the combinations to send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnginePlan {
    /// Sorted by priority.
    pub entries: Vec<PlanEntry>,
    pub combinations: Vec<QueryCombination>,
}

impl EnginePlan {
    pub fn entry(&self, engine_id: &str) -> Option<&PlanEntry> {
        self.entries.iter().find(|e| e.engine_id == engine_id)
    }

    pub fn weight_of(&self, engine_id: &str) -> Option<f64> {
        self.entry(engine_id).map(|e| e.resolved_weight)
    }

    pub fn priority_of(&self, engine_id: &str) -> Option<usize> {
        self.entry(engine_id).map(|e| e.priority)
    }
}

/// Resolves the engine plan for a query.
///
/// An enabled engine's weight is the larger of its initial weight and the
/// best override among affinities matching any combination. Priorities rank
/// engines by descending weight, ties by ascending engine id.
pub fn resolve_plan(combinations: &[QueryCombination], seid: &Seid) -> Result<EnginePlan, SeidError> {
    let mut entries: Vec<PlanEntry> = seid
        .engines
        .iter()
        .filter(|e| e.enabled)
        .map(|engine| {
            let boost = seid
                .affinities
                .iter()
                .filter(|a| a.engine_id == engine.engine_id)
                .filter(|a| combinations.iter().any(|c| a.matches(c)))
                .map(|a| a.weight_override)
                .fold(f64::NEG_INFINITY, f64::max);
            PlanEntry {
                engine_id: engine.engine_id.clone(),
                display_name: engine.display_name.clone(),
                resolved_weight: engine.initial_weight.max(boost),
                priority: 0,
            }
        })
        .collect();

    if entries.is_empty() {
        return Err(SeidError::NoEnginesEnabled);
    }

    entries.sort_by(|a, b| {
        b.resolved_weight
            .total_cmp(&a.resolved_weight)
            .then_with(|| a.engine_id.cmp(&b.engine_id))
    });
    for (i, entry) in entries.iter_mut().enumerate() {
        entry.priority = i + 1;
    }

    Ok(EnginePlan {
        entries,
        combinations: combinations.to_vec(),
    })
}

fn quote_if_needed(s: &str) -> String {
    if s.contains(char::is_whitespace) {
        format!("\"{s}\"")
    } else {
        s.to_owned()
    }
}

/// Splits a line into whitespace-separated fields; `"..."` groups a field.
fn split_fields(line: &str, line_no: usize) -> Result<Vec<String>, SeidError> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        let Some(&first) = chars.peek() else { break };
        let mut field = String::new();
        if first == '"' {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(c) => field.push(c),
                    None => {
                        return Err(SeidError::MalformedSeidFile {
                            line: line_no,
                            reason: "unterminated quote".into(),
                        })
                    }
                }
            }
            if chars.peek().is_some_and(|c| !c.is_whitespace()) {
                return Err(SeidError::MalformedSeidFile {
                    line: line_no,
                    reason: "text directly after closing quote".into(),
                });
            }
        } else {
            while let Some(c) = chars.next_if(|c| !c.is_whitespace()) {
                field.push(c);
            }
        }
        fields.push(field);
    }
    Ok(fields)
}

fn strip_comment(line: &str) -> &str {
    // `#` inside quotes is rejected on write, so a plain split is enough.
    line.split('#').next().unwrap_or("")
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Engines,
    Affinities,
}

pub fn parse_seid(text: &str) -> Result<Seid, SeidError> {
    let mut seid = Seid::default();
    let mut section = Section::None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let malformed = |reason: String| SeidError::MalformedSeidFile { line: line_no, reason };
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "[engines]" => {
                section = Section::Engines;
                continue;
            }
            "[affinities]" => {
                section = Section::Affinities;
                continue;
            }
            _ if line.starts_with('[') => return Err(malformed(format!("unknown section {line}"))),
            _ => {}
        }

        let fields = split_fields(line, line_no)?;
        let parse_weight = |s: &str| -> Result<f64, SeidError> {
            let w: f64 = s.parse().map_err(|_| malformed(format!("bad weight `{s}`")))?;
            checked_weight(w).map_err(|_| malformed(format!("weight {s} outside [0, 1]")))
        };

        match section {
            Section::None => return Err(malformed("entry before any section header".into())),
            Section::Engines => {
                let [id, name, weight, enabled] = fields.as_slice() else {
                    return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
                };
                let enabled = match enabled.as_str() {
                    "true" => true,
                    "false" => false,
                    other => return Err(malformed(format!("bad enabled flag `{other}`"))),
                };
                let engine = EngineDescriptor::new(id.as_str(), name.as_str(), parse_weight(weight)?, enabled)
                    .map_err(|e| malformed(e.to_string()))?;
                seid.add_engine(engine).map_err(|e| malformed(e.to_string()))?;
            }
            Section::Affinities => {
                let [keyword, engine_id, weight] = fields.as_slice() else {
                    return Err(malformed(format!("expected 3 fields, found {}", fields.len())));
                };
                let affinity = DomainAffinity::new(keyword, engine_id.as_str(), parse_weight(weight)?)
                    .map_err(|e| malformed(e.to_string()))?;
                seid.add_affinity(affinity).map_err(|e| match e {
                    SeidError::UnknownEngineReference { engine_id, .. } => {
                        SeidError::UnknownEngineReference { line: line_no, engine_id }
                    }
                    other => other,
                })?;
            }
        }
    }
    Ok(seid)
}

pub fn format_seid(seid: &Seid) -> String {
    let mut out = String::from("[engines]\n");
    for e in &seid.engines {
        let _ = writeln!(
            out,
            "{} {} {:.3} {}",
            e.engine_id,
            quote_if_needed(&e.display_name),
            e.initial_weight,
            e.enabled
        );
    }
    out.push_str("[affinities]\n");
    for a in &seid.affinities {
        let _ = writeln!(
            out,
            "{} {} {:.3}",
            quote_if_needed(&a.keyword),
            a.engine_id,
            a.weight_override
        );
    }
    out
}

fn io_error(path: &Path, e: std::io::Error) -> SeidError {
    SeidError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

pub fn load_seid(path: impl AsRef<Path>) -> Result<Seid, SeidError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_seid(&text)
}

/// Writes through a sibling temp file and a rename so readers never see a
/// half-written database.
pub fn save_seid(state: &Seid, path: impl AsRef<Path>) -> Result<(), SeidError> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, format_seid(state)).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

/// Shared SEID handle. Readers take a snapshot; writers are serialized and
/// publish a whole new state at once.
#[derive(Debug)]
pub struct SeidStore {
    current: RwLock<Arc<Seid>>,
    writer: Mutex<()>,
    path: Option<PathBuf>,
}

impl SeidStore {
    pub fn in_memory(seid: Seid) -> Self {
        Self {
            current: RwLock::new(Arc::new(seid)),
            writer: Mutex::new(()),
            path: None,
        }
    }

    /// Opens the database at `path`, creating it with the default roster if
    /// the file does not exist yet.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, SeidError> {
        let path = path.into();
        let seid = if path.exists() {
            load_seid(&path)?
        } else {
            let seid = Seid::default_roster();
            save_seid(&seid, &path)?;
            seid
        };
        Ok(Self {
            current: RwLock::new(Arc::new(seid)),
            writer: Mutex::new(()),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn snapshot(&self) -> Arc<Seid> {
        self.current.read().expect("seid lock poisoned").clone()
    }

    /// Applies `f` to the current state, persists the result when the store
    /// is file-backed, and then publishes it.
    pub fn update<F>(&self, f: F) -> Result<Arc<Seid>, SeidError>
    where
        F: FnOnce(&Seid) -> Result<Seid, SeidError>,
    {
        let _guard = self.writer.lock().expect("seid writer poisoned");
        let next = Arc::new(f(&self.snapshot())?);
        if let Some(path) = &self.path {
            save_seid(&next, path)?;
        }
        *self.current.write().expect("seid lock poisoned") = next.clone();
        Ok(next)
    }

    pub fn set_engine_weight(&self, engine_id: &str, weight: f64) -> Result<Arc<Seid>, SeidError> {
        self.update(|s| set_engine_weight(s, engine_id, weight))
    }
}
