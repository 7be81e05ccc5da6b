//! Shared helpers for the service integration tests, including a brute-force
//! ranking oracle that shares no code with the library's merge and scoring
//! path.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::seq::IndexedRandom;
use rand::Rng;
use semantelli_core::gateway::{AdapterRegistry, FixtureAdapter, FixtureCorpus, FixtureRecord};
use semantelli_core::seid::{EngineDescriptor, Seid};
use semantelli_core::{Metasearch, SearchSettings, SeidStore};
use tower::ServiceExt;

pub const GOLDEN_QUERY: &str = "semantic web";
pub const GOLDEN: &str = include_str!("../golden/semantic_web.json");

/// Replaces the `timing_ms` value so responses can be compared bytewise.
pub fn zero_timing(json: &str) -> String {
    let key = "\"timing_ms\":";
    let Some(start) = json.find(key) else { return json.to_owned() };
    let digits_start = start + key.len();
    let digits_end = json[digits_start..]
        .find(|c: char| !c.is_ascii_digit())
        .map_or(json.len(), |i| digits_start + i);
    format!("{}0{}", &json[..digits_start], &json[digits_end..])
}

pub async fn get(router: &axum::Router, uri: &str) -> (StatusCode, String) {
    send(router, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn put_json(router: &axum::Router, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::put(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    send(router, req).await
}

async fn send(router: &axum::Router, req: Request<Body>) -> (StatusCode, String) {
    let res = router.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

/// One corpus line.
#[derive(Debug, Clone)]
pub struct Record {
    pub phrase: String,
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub out_links: u64,
    pub hit_hint: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    pub id: String,
    pub weight_milli: u32,
    pub records: Vec<Record>,
}

impl Engine {
    pub fn weight(&self) -> f64 {
        f64::from(self.weight_milli) / 1000.0
    }
}

/// Builds an in-memory service over fixture adapters for `engines`.
pub fn service(engines: &[Engine], settings: SearchSettings) -> Metasearch {
    let descriptors = engines
        .iter()
        .map(|e| EngineDescriptor::new(e.id.clone(), e.id.to_uppercase(), e.weight(), true).unwrap())
        .collect();
    let seid = Seid::new(descriptors, vec![]).unwrap();
    let mut registry = AdapterRegistry::new();
    for e in engines {
        let mut corpus = FixtureCorpus::default();
        for r in &e.records {
            corpus.push(
                &r.phrase,
                FixtureRecord {
                    url: r.url.clone(),
                    title: r.title.clone(),
                    snippet: r.snippet.clone(),
                    out_links: r.out_links,
                    hit_hint: r.hit_hint,
                },
            );
        }
        registry.register(Arc::new(FixtureAdapter::new(e.id.clone(), corpus)));
    }
    Metasearch::new(Arc::new(SeidStore::in_memory(seid)), registry, settings)
}

/// Canonical form for URLs shaped `scheme://host[:port][/path][?query][#fragment]`.
pub fn oracle_canonical(url: &str) -> String {
    let url = url.split('#').next().unwrap();
    let (scheme, rest) = url.split_once("://").unwrap();
    let scheme = scheme.to_ascii_lowercase();
    let (before_query, query) = match rest.split_once('?') {
        Some((b, q)) => (b, Some(q)),
        None => (rest, None),
    };
    let (authority, path) = match before_query.find('/') {
        Some(i) => (&before_query[..i], &before_query[i..]),
        None => (before_query, ""),
    };
    let mut authority = authority.to_ascii_lowercase();
    let default_port = if scheme == "http" { ":80" } else { ":443" };
    if authority.ends_with(default_port) {
        authority.truncate(authority.len() - default_port.len());
    }
    let path = if path == "/" { "" } else { path };
    let mut query_out = String::new();
    if let Some(q) = query {
        let mut parts: Vec<&str> = q.split('&').filter(|p| !p.is_empty()).collect();
        parts.sort_by(|a, b| a.split('=').next().cmp(&b.split('=').next()));
        if !parts.is_empty() {
            query_out = format!("?{}", parts.join("&"));
        }
    }
    format!("{scheme}://{authority}{path}{query_out}")
}

fn occurrences(text: &str, phrase: &str) -> u64 {
    let text: Vec<char> = text.to_lowercase().chars().collect();
    let phrase: Vec<char> = phrase.to_lowercase().chars().collect();
    if phrase.is_empty() || phrase.len() > text.len() {
        return 0;
    }
    (0..=text.len() - phrase.len())
        .filter(|&i| text[i..i + phrase.len()] == phrase[..])
        .count() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub url: String,
    pub engines: Vec<(String, usize)>,
    pub h: u64,
    pub l: u64,
    pub w: f64,
    pub r: f64,
    pub t: f64,
}

pub struct OracleParams {
    pub damping: f64,
    pub increment: f64,
    pub divisor: f64,
    pub cap: u64,
    pub limit_per_fetch: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            damping: 0.85,
            increment: 0.1,
            divisor: 1000.0,
            cap: 500,
            limit_per_fetch: 10,
        }
    }
}

/// Recomputes the full ranking from the engine corpora.
pub fn oracle(engines: &[Engine], combinations: &[String], p: &OracleParams) -> Vec<OracleRow> {
    let mut by_priority: Vec<&Engine> = engines.iter().collect();
    by_priority.sort_by(|a, b| b.weight_milli.cmp(&a.weight_milli).then(a.id.cmp(&b.id)));

    struct Acc {
        engines: Vec<(String, usize)>,
        title: String,
        snippet: String,
        hint: Option<u64>,
        l: u64,
        base: f64,
    }
    let mut groups: BTreeMap<String, Acc> = BTreeMap::new();

    for engine in by_priority.iter().filter(|e| e.weight_milli > 0) {
        // the engine's own buffer: per combination, first `limit` records
        let mut buffer: Vec<&Record> = Vec::new();
        for combo in combinations {
            let hits = engine.records.iter().filter(|r| {
                r.phrase.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase() == *combo
            });
            for rec in hits.take(p.limit_per_fetch) {
                if !buffer.iter().any(|b| oracle_canonical(&b.url) == oracle_canonical(&rec.url)) {
                    buffer.push(rec);
                }
            }
        }
        for (i, rec) in buffer.iter().enumerate() {
            let acc = groups.entry(oracle_canonical(&rec.url)).or_insert_with(|| Acc {
                engines: vec![],
                title: rec.title.clone(),
                snippet: rec.snippet.clone(),
                hint: None,
                l: 0,
                base: 0.0,
            });
            acc.engines.push((engine.id.clone(), i + 1));
            acc.hint = acc.hint.max(rec.hit_hint);
            acc.l = acc.l.max(rec.out_links);
            acc.base = acc.base.max(engine.weight());
        }
    }

    let mut rows: Vec<OracleRow> = groups
        .into_iter()
        .map(|(url, acc)| {
            let text = format!("{} {}", acc.title, acc.snippet);
            let h = acc.hint.unwrap_or_else(|| combinations.iter().map(|c| occurrences(&text, c)).sum());
            let k = acc.engines.len();
            let w = (acc.base + p.increment * (k - 1) as f64).min(1.0);
            let r = (h.min(p.cap) + acc.l.min(p.cap)) as f64 / p.divisor;
            OracleRow {
                url,
                engines: acc.engines,
                h,
                l: acc.l,
                w,
                r,
                t: w * p.damping + r,
            }
        })
        .collect();

    rows.sort_by(|a, b| {
        b.t.partial_cmp(&a.t)
            .unwrap()
            .then_with(|| {
                let best = |r: &OracleRow| r.engines.iter().map(|e| e.1).min().unwrap();
                best(a).cmp(&best(b))
            })
            .then_with(|| a.url.cmp(&b.url))
    });
    rows
}

const WORDS: &[&str] = &["semantic", "web", "cloud", "agent", "search", "ontology", "data", "meta"];

fn random_text<R: Rng>(rng: &mut R, words: usize) -> String {
    (0..words)
        .map(|_| {
            let w = *WORDS.choose(rng).unwrap();
            if rng.random_bool(0.2) {
                w.to_uppercase()
            } else {
                w.to_owned()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn url_variant<R: Rng>(rng: &mut R, id: usize) -> String {
    let host = if rng.random_bool(0.3) { format!("Site{id}.EXAMPLE") } else { format!("site{id}.example") };
    let scheme = if rng.random_bool(0.2) { "HTTPS" } else { "https" };
    let port = if rng.random_bool(0.2) { ":443" } else { "" };
    let path = match id % 3 {
        0 => if rng.random_bool(0.5) { "/" } else { "" }.to_owned(),
        1 => format!("/doc/{id}"),
        _ => format!("/p?z={id}&a=1"),
    };
    let fragment = if rng.random_bool(0.2) { "#frag" } else { "" };
    format!("{scheme}://{host}{port}{path}{fragment}")
}

/// A random query and corpus with plenty of cross-engine duplicates.
pub fn random_case<R: Rng>(rng: &mut R) -> (String, Vec<Engine>) {
    let query_len = rng.random_range(1..=3);
    let query = (0..query_len).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ");
    let tokens: Vec<&str> = query.split(' ').collect();
    let mut phrases: Vec<String> = Vec::new();
    for n in 1..=tokens.len() {
        for s in 0..=tokens.len() - n {
            phrases.push(tokens[s..s + n].join(" "));
        }
    }
    phrases.push("unrelated phrase".into());

    let engine_count = rng.random_range(1..=4);
    let pool = rng.random_range(4..25);
    let engines = (0..engine_count)
        .map(|e| {
            let weight_milli = match rng.random_range(0..10) {
                0 => 0,
                1 => 300,
                2 => 950,
                _ => rng.random_range(1..=1000),
            };
            let records = (0..rng.random_range(0..20))
                .map(|_| {
                    let id = rng.random_range(0..pool);
                    let title_words = rng.random_range(1..5);
                    let snippet_words = rng.random_range(0..12);
                    Record {
                    phrase: phrases.choose(rng).unwrap().clone(),
                    url: url_variant(rng, id),
                    title: random_text(rng, title_words),
                    snippet: random_text(rng, snippet_words),
                    out_links: if rng.random_bool(0.1) { rng.random_range(400..900) } else { rng.random_range(0..30) },
                    hit_hint: rng.random_bool(0.15).then(|| rng.random_range(0..800)),
                }})
                .collect();
            Engine {
                id: format!("engine{e}"),
                weight_milli,
                records,
            }
        })
        .collect();
    (query, engines)
}
