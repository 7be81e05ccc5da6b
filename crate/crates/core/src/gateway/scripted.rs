use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;

use super::{AdapterKind, BackendError, RawResult, SearchAdapter};
use crate::query::QueryCombination;

/// Misbehaviour a [`ScriptedAdapter`] injects into every call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Sleep before answering.
    Delay(Duration),
    Unavailable(String),
    Malformed(String),
}

/// Test and fault-injection adapter: optionally delegates to another adapter,
/// then applies a [`Fault`]. Counts how often it was called.
pub struct ScriptedAdapter {
    engine_id: String,
    inner: Option<Arc<dyn SearchAdapter>>,
    fault: Option<Fault>,
    calls: AtomicUsize,
}

impl ScriptedAdapter {
    /// An adapter that answers every query with no results.
    pub fn empty(engine_id: impl Into<String>) -> Self {
        Self {
            engine_id: engine_id.into(),
            inner: None,
            fault: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn wrap(inner: Arc<dyn SearchAdapter>) -> Self {
        Self {
            engine_id: inner.engine_id().to_owned(),
            inner: Some(inner),
            fault: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    /// Reports a different engine id than the wrapped adapter tags its
    /// results with.
    pub fn renamed(mut self, engine_id: impl Into<String>) -> Self {
        self.engine_id = engine_id.into();
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl SearchAdapter for ScriptedAdapter {
    fn engine_id(&self) -> &str {
        &self.engine_id
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::Scripted
    }

    async fn fetch(&self, combination: &QueryCombination, limit: usize) -> Result<Vec<RawResult>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.fault {
            Some(Fault::Delay(d)) => tokio::time::sleep(*d).await,
            Some(Fault::Unavailable(why)) => return Err(BackendError::BackendUnavailable(why.clone())),
            Some(Fault::Malformed(why)) => return Err(BackendError::MalformedResponse(why.clone())),
            None => {}
        }
        match &self.inner {
            Some(inner) => inner.fetch(combination, limit).await,
            None => Ok(Vec::new()),
        }
    }
}
