//! Temporary per-search result storage, filtering and cross-engine merging.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Serialize, Serializer};
use thiserror::Error;
use url::{Position, Url};
use uuid::Uuid;

use crate::exec::{map_slice, Execution};
use crate::gateway::{EngineBuffer, FetchReport, RawResult};
use crate::query::QueryCombination;
use crate::seid::EnginePlan;

/// Session lifetime when none is configured.
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(300);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid URL `{0}`")]
pub struct InvalidUrl(pub String);

/// Canonical form used to detect the same page across engines.
///
/// Scheme and host are lowercased, default ports and the fragment dropped,
/// a bare `/` path removed, and query parameters stably sorted by key.
pub fn normalize_url(raw: &str) -> Result<String, InvalidUrl> {
    let invalid = || InvalidUrl(raw.to_owned());
    let mut url = Url::parse(raw.trim()).map_err(|_| invalid())?;
    if !matches!(url.scheme(), "http" | "https") || !url.has_host() {
        return Err(invalid());
    }
    url.set_fragment(None);

    let query = url.query().map(|q| {
        let mut params: Vec<&str> = q.split('&').filter(|p| !p.is_empty()).collect();
        params.sort_by_key(|p| p.split('=').next().unwrap_or(""));
        params.join("&")
    });
    match query {
        Some(q) if !q.is_empty() => url.set_query(Some(&q)),
        _ => url.set_query(None),
    }

    let path = if url.path() == "/" { "" } else { url.path() };
    Ok(format!("{}{}{}", &url[..Position::BeforePath], path, &url[Position::AfterPath..]))
}

/// Counts case-insensitive occurrences of every combination phrase in
/// `text`, overlaps included. Each phrase is counted on its own, so a hit on
/// "semantic web" also counts for "web".
pub fn hit_count(text: &str, combinations: &[QueryCombination]) -> u64 {
    let hay = text.to_lowercase();
    combinations
        .iter()
        .map(|c| count_overlapping(&hay, &c.phrase.to_lowercase()))
        .sum()
}

fn count_overlapping(hay: &str, needle: &str) -> u64 {
    if needle.is_empty() {
        return 0;
    }
    let mut count = 0;
    let mut from = 0;
    while let Some(pos) = hay[from..].find(needle) {
        count += 1;
        let at = from + pos;
        from = at + hay[at..].chars().next().map_or(1, char::len_utf8);
    }
    count
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Contributor {
    pub engine_id: String,
    pub origin_rank: usize,
}

/// One page after cross-engine deduplication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergedResult {
    pub canonical_url: String,
    pub title: String,
    pub snippet: String,
    /// Ordered by the engines' plan priority.
    pub contributors: Vec<Contributor>,
    pub redundancy_count: usize,
    pub out_links: u64,
    pub hit_count: u64,
    pub best_origin_rank: usize,
}

fn as_millis<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u128(d.as_millis())
}

fn as_unix_millis<S: Serializer>(t: &SystemTime, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u128(t.duration_since(UNIX_EPOCH).unwrap_or_default().as_millis())
}

/// Everything one search produced before ranking.
#[derive(Debug, Clone, Serialize)]
pub struct SearchSession {
    pub session_id: Uuid,
    pub query: String,
    pub combinations: Vec<QueryCombination>,
    pub plan: EnginePlan,
    pub buffers: Vec<EngineBuffer>,
    pub fetch_report: FetchReport,
    #[serde(serialize_with = "as_unix_millis")]
    pub created_at: SystemTime,
    #[serde(rename = "ttl_ms", serialize_with = "as_millis")]
    pub ttl: Duration,
}

impl SearchSession {
    /// Buffers for engines outside the plan are discarded.
    pub fn new(
        query: impl Into<String>,
        plan: EnginePlan,
        buffers: Vec<EngineBuffer>,
        fetch_report: FetchReport,
        ttl: Duration,
    ) -> Self {
        let buffers = buffers
            .into_iter()
            .filter(|b| plan.entry(&b.engine_id).is_some())
            .collect();
        Self {
            session_id: Uuid::new_v4(),
            query: query.into(),
            combinations: plan.combinations.clone(),
            plan,
            buffers,
            fetch_report,
            created_at: SystemTime::now(),
            ttl,
        }
    }

    pub fn is_expired(&self, now: SystemTime) -> bool {
        now.duration_since(self.created_at).unwrap_or_default() >= self.ttl
    }

    pub fn filter_and_merge(&self, exec: Execution) -> Vec<MergedResult> {
        filter_and_merge(&self.plan, &self.buffers, exec)
    }
}

struct Group<'a> {
    representative: &'a RawResult,
    contributors: Vec<Contributor>,
    out_links: u64,
    hit_hint: Option<u64>,
}

/// Drops results of engines that are not planned or carry zero weight, then
/// merges the rest by canonical URL.
///
/// Title and snippet come from the contributor with the best plan priority.
/// The output is sorted by canonical URL and does not depend on the order
/// of `buffers`.
pub fn filter_and_merge(plan: &EnginePlan, buffers: &[EngineBuffer], exec: Execution) -> Vec<MergedResult> {
    let mut ordered: Vec<(usize, &EngineBuffer)> = buffers
        .iter()
        .filter_map(|b| {
            let entry = plan.entry(&b.engine_id)?;
            (entry.resolved_weight > 0.0).then_some((entry.priority, b))
        })
        .collect();
    ordered.sort_by_key(|(priority, _)| *priority);

    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for (_, buffer) in ordered {
        for result in &buffer.results {
            let key = normalize_url(&result.url).unwrap_or_else(|_| result.url.clone());
            let group = groups.entry(key).or_insert_with(|| Group {
                representative: result,
                contributors: Vec::new(),
                out_links: 0,
                hit_hint: None,
            });
            group.out_links = group.out_links.max(result.out_links);
            group.hit_hint = group.hit_hint.max(result.hit_hint);
            match group.contributors.iter_mut().find(|c| c.engine_id == buffer.engine_id) {
                Some(existing) => existing.origin_rank = existing.origin_rank.min(result.origin_rank),
                None => group.contributors.push(Contributor {
                    engine_id: buffer.engine_id.clone(),
                    origin_rank: result.origin_rank,
                }),
            }
        }
    }

    let groups: Vec<(String, Group)> = groups.into_iter().collect();
    let combinations = &plan.combinations;
    map_slice(&groups, exec, |(canonical_url, g)| {
        let rep = g.representative;
        let hit_count = g
            .hit_hint
            .unwrap_or_else(|| hit_count(&format!("{} {}", rep.title, rep.snippet), combinations));
        MergedResult {
            canonical_url: canonical_url.clone(),
            title: rep.title.clone(),
            snippet: rep.snippet.clone(),
            redundancy_count: g.contributors.len() - 1,
            best_origin_rank: g.contributors.iter().map(|c| c.origin_rank).min().unwrap_or(1),
            contributors: g.contributors.clone(),
            out_links: g.out_links,
            hit_count,
        }
    })
}

/// In-memory sessions, dropped once their ttl passes.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<Uuid, Arc<SearchSession>>>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, session: SearchSession) -> Arc<SearchSession> {
        let session = Arc::new(session);
        let mut sessions = self.sessions.lock().expect("session store poisoned");
        let now = SystemTime::now();
        sessions.retain(|_, s| !s.is_expired(now));
        sessions.insert(session.session_id, session.clone());
        session
    }

    pub fn get(&self, id: &Uuid) -> Option<Arc<SearchSession>> {
        let sessions = self.sessions.lock().expect("session store poisoned");
        sessions.get(id).filter(|s| !s.is_expired(SystemTime::now())).cloned()
    }

    pub fn remove(&self, id: &Uuid) -> Option<Arc<SearchSession>> {
        self.sessions.lock().expect("session store poisoned").remove(id)
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{generate_combinations, QcgConfig};
    use crate::seid::{resolve_plan, set_engine_weight, Seid};

    fn combos(q: &str) -> Vec<QueryCombination> {
        let tokens: Vec<String> = q.split_whitespace().map(str::to_owned).collect();
        generate_combinations(&tokens, &QcgConfig::default())
    }

    fn raw(engine: &str, url: &str, rank: usize, title: &str) -> RawResult {
        RawResult {
            url: url.into(),
            title: title.into(),
            snippet: String::new(),
            out_links: rank as u64,
            origin_engine: engine.into(),
            origin_rank: rank,
            source_combination: "semantic web".into(),
            hit_hint: None,
        }
    }

    fn buffer(engine: &str, results: Vec<RawResult>) -> EngineBuffer {
        EngineBuffer {
            engine_id: engine.into(),
            results,
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_url("HTTP://Example.com:80/A?b=2&a=1#x").unwrap(), "http://example.com/A?a=1&b=2");
        assert_eq!(normalize_url("https://example.com/").unwrap(), "https://example.com");
        assert_eq!(normalize_url("notaurl"), Err(InvalidUrl("notaurl".into())));
        assert!(normalize_url("mailto:a@b.example").is_err());
        assert_eq!(normalize_url("https://example.com:443/?").unwrap(), "https://example.com");
        assert_eq!(normalize_url("https://example.com:8443/x/").unwrap(), "https://example.com:8443/x/");
        assert_eq!(normalize_url("http://h.example/?z=1&a=2&z=0").unwrap(), "http://h.example?a=2&z=1&z=0");
    }

    #[test]
    fn hit_count_examples() {
        let c = vec![
            QueryCombination::new(vec!["semantic".into(), "web".into()], 0),
            QueryCombination::new(vec!["web".into()], 1),
        ];
        assert_eq!(hit_count("semantic web search on the semantic web", &c), 4);
        assert_eq!(hit_count("Semantic WEB", &c), 2);
        assert_eq!(hit_count("nothing relevant", &c), 0);
        let aa = vec![QueryCombination::new(vec!["aa".into()], 0)];
        assert_eq!(hit_count("aaaa", &aa), 3);
    }

    #[test]
    fn hint_overrides_text() {
        let plan = resolve_plan(&combos("semantic web"), &Seid::default_roster()).unwrap();
        let mut r = raw("hakia", "https://a.example", 1, "semantic web semantic web");
        r.hit_hint = Some(7);
        let merged = filter_and_merge(&plan, &[buffer("hakia", vec![r])], Execution::Sequential);
        assert_eq!(merged[0].hit_count, 7);
    }

    #[test]
    fn duplicate_takes_title_from_higher_priority_engine() {
        let plan = resolve_plan(&combos("semantic web"), &Seid::default_roster()).unwrap();
        let buffers = [
            buffer("hakia", vec![raw("hakia", "https://dup.example/", 1, "from hakia")]),
            buffer(
                "duckduckgo",
                vec![
                    raw("duckduckgo", "https://other.example", 1, "other"),
                    raw("duckduckgo", "HTTPS://dup.example#frag", 2, "from ddg"),
                ],
            ),
        ];
        let merged = filter_and_merge(&plan, &buffers, Execution::Sequential);
        assert_eq!(merged.len(), 2);
        let dup = merged.iter().find(|m| m.canonical_url == "https://dup.example").unwrap();
        assert_eq!(dup.redundancy_count, 1);
        assert_eq!(dup.title, "from ddg");
        assert_eq!(dup.best_origin_rank, 1);
        assert_eq!(dup.out_links, 2);
        let engines: Vec<_> = dup.contributors.iter().map(|c| (c.engine_id.as_str(), c.origin_rank)).collect();
        assert_eq!(engines, [("duckduckgo", 2), ("hakia", 1)]);
    }

    #[test]
    fn disjoint_sets_keep_everything() {
        let plan = resolve_plan(&combos("q"), &Seid::default_roster()).unwrap();
        let buffers: Vec<_> = ["duckduckgo", "hakia", "sensebot"]
            .iter()
            .map(|e| buffer(e, (1..=3).map(|i| raw(e, &format!("https://{e}.example/{i}"), i, "t")).collect()))
            .collect();
        let merged = filter_and_merge(&plan, &buffers, Execution::Sequential);
        assert_eq!(merged.len(), 9);
        assert!(merged.iter().all(|m| m.redundancy_count == 0));
    }

    #[test]
    fn zero_weight_engine_is_filtered() {
        let seid = set_engine_weight(&Seid::default_roster(), "sensebot", 0.0).unwrap();
        let plan = resolve_plan(&combos("q"), &seid).unwrap();
        let buffers = [
            buffer("sensebot", vec![raw("sensebot", "https://only-sb.example", 1, "t"), raw("sensebot", "https://shared.example", 2, "t")]),
            buffer("hakia", vec![raw("hakia", "https://shared.example", 1, "t")]),
            buffer("ghost", vec![raw("ghost", "https://ghost.example", 1, "t")]),
        ];
        let merged = filter_and_merge(&plan, &buffers, Execution::Sequential);
        let urls: Vec<_> = merged.iter().map(|m| m.canonical_url.as_str()).collect();
        assert_eq!(urls, ["https://shared.example"]);
        assert_eq!(merged[0].redundancy_count, 0);
    }

    #[test]
    fn sessions_expire() {
        let plan = resolve_plan(&combos("q"), &Seid::default_roster()).unwrap();
        let store = SessionStore::new();
        let live = store.insert(SearchSession::new("q", plan.clone(), vec![buffer("ghost", vec![])], FetchReport::default(), DEFAULT_SESSION_TTL));
        assert!(live.buffers.is_empty());
        let dead = store.insert(SearchSession::new("q", plan, vec![], FetchReport::default(), Duration::ZERO));
        assert!(store.get(&live.session_id).is_some());
        assert!(store.get(&dead.session_id).is_none());
        let json = serde_json::to_value(&*live).unwrap();
        assert_eq!(json["ttl_ms"], 300_000);
        assert_eq!(json["query"], "q");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// String-level canonicalizer for the simple URL shapes generated
        /// below; independent of the `url` crate.
        fn oracle(scheme: &str, host: &str, port: Option<u16>, path: &str, query: &[(String, String)]) -> String {
            let scheme = scheme.to_lowercase();
            let host = host.to_lowercase();
            let default = if scheme == "http" { 80 } else { 443 };
            let port = match port {
                Some(p) if p != default => format!(":{p}"),
                _ => String::new(),
            };
            let path = if path == "/" { "" } else { path };
            let mut q: Vec<String> = query.iter().map(|(k, v)| format!("{k}={v}")).collect();
            q.sort_by_key(|p| p.split('=').next().unwrap().to_owned());
            let q = if q.is_empty() { String::new() } else { format!("?{}", q.join("&")) };
            format!("{scheme}://{host}{port}{path}{q}")
        }

        fn urls() -> impl Strategy<Value = (String, String)> {
            (
                prop::sample::select(vec!["http", "HTTP", "https", "HttpS"]),
                "[a-zA-Z][a-zA-Z0-9]{0,8}(\\.[a-zA-Z]{2,5}){1,2}",
                prop::option::of(prop::sample::select(vec![80u16, 443, 8080])),
                prop::sample::select(vec!["/", "/A", "/a/b", "/x/", "/Docs/Index.html"]),
                prop::collection::vec(("[a-d]", "[0-9]{1,2}"), 0..4),
                prop::option::of("[a-z]{1,5}"),
            )
                .prop_map(|(scheme, host, port, path, query, frag)| {
                    let port_s = port.map(|p| format!(":{p}")).unwrap_or_default();
                    let q = if query.is_empty() {
                        String::new()
                    } else {
                        format!("?{}", query.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("&"))
                    };
                    let f = frag.map(|f| format!("#{f}")).unwrap_or_default();
                    let raw = format!("{scheme}://{host}{port_s}{path}{q}{f}");
                    (raw, oracle(scheme, &host, port, path, &query))
                })
        }

        fn buffers() -> impl Strategy<Value = Vec<EngineBuffer>> {
            let engines = ["duckduckgo", "hakia", "sensebot"];
            prop::collection::vec(prop::collection::vec(0u8..12, 0..8), 3).prop_map(move |sets| {
                sets.into_iter()
                    .zip(engines)
                    .map(|(ids, e)| {
                        let mut seen = std::collections::HashSet::new();
                        let results = ids
                            .into_iter()
                            .filter(|i| seen.insert(*i))
                            .enumerate()
                            .map(|(rank, i)| raw(e, &format!("https://p{i}.example/"), rank + 1, &format!("{e} {i}")))
                            .collect();
                        buffer(e, results)
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn normalize_matches_oracle_and_is_idempotent((raw, expected) in urls()) {
                let once = normalize_url(&raw).unwrap();
                prop_assert_eq!(&once, &expected);
                prop_assert_eq!(normalize_url(&once).unwrap(), once);
            }

            #[test]
            fn merge_conserves_and_ignores_arrival_order(bufs in buffers(), rotate in 0usize..3) {
                let plan = resolve_plan(&combos("semantic web"), &Seid::default_roster()).unwrap();
                let merged = filter_and_merge(&plan, &bufs, Execution::Sequential);
                let total: usize = bufs.iter().map(|b| b.results.len()).sum();
                prop_assert_eq!(merged.iter().map(|m| m.contributors.len()).sum::<usize>(), total);
                let distinct: std::collections::HashSet<_> = merged.iter().map(|m| &m.canonical_url).collect();
                prop_assert_eq!(distinct.len(), merged.len());

                let mut shuffled = bufs.clone();
                shuffled.rotate_left(rotate);
                shuffled.reverse();
                prop_assert_eq!(filter_and_merge(&plan, &shuffled, Execution::Parallel), merged);
            }
        }
    }
}
