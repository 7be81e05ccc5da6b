//! telliFactor scoring.
//!
//! Each merged result gets
//!
//! ```text
//! W   = min(1, base + redundancy_increment * redundancy_count)
//! r_F = (min(h, cap) + min(l, cap)) / relevance_divisor
//! t_F = W * d + r_F
//! ```
//!
//! where `base` is the highest plan weight among the engines that returned
//! the result, `h` its hit count and `l` its out-link count. Results are
//! ordered by `t_F` descending, then by the best rank any engine gave them,
//! then by canonical URL.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_slice, Execution};
use crate::seid::EnginePlan;
use crate::store::MergedResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreParamsError {
    #[error("damping must be in (0, 1], got {0}")]
    Damping(f64),
    #[error("redundancy increment must be >= 0, got {0}")]
    RedundancyIncrement(f64),
    #[error("relevance divisor must be > 0, got {0}")]
    RelevanceDivisor(f64),
    #[error("unknown relevance numerator `{0}` (expected h_plus_l or h_plus_one)")]
    RelevanceNumerator(String),
}

/// Which quantity joins the hit count in the relevance numerator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceNumerator {
    /// `h + l`, hit count plus out-links.
    #[default]
    HPlusL,
    /// `h + 1`, the formula as literally typeset.
    HPlusOne,
}

impl FromStr for RelevanceNumerator {
    type Err = ScoreParamsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h_plus_l" => Ok(Self::HPlusL),
            "h_plus_one" => Ok(Self::HPlusOne),
            other => Err(ScoreParamsError::RelevanceNumerator(other.to_owned())),
        }
    }
}

impl fmt::Display for RelevanceNumerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::HPlusL => "h_plus_l",
            Self::HPlusOne => "h_plus_one",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub damping: f64,
    pub redundancy_increment: f64,
    pub relevance_divisor: f64,
    /// Applied to `h` and `l` separately.
    pub component_cap: u64,
    pub relevance_numerator: RelevanceNumerator,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            damping: 0.85,
            redundancy_increment: 0.1,
            relevance_divisor: 1000.0,
            component_cap: 500,
            relevance_numerator: RelevanceNumerator::HPlusL,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<(), ScoreParamsError> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(ScoreParamsError::Damping(self.damping));
        }
        if !(0.0..=f64::MAX).contains(&self.redundancy_increment) {
            return Err(ScoreParamsError::RedundancyIncrement(self.redundancy_increment));
        }
        if self.relevance_divisor.is_nan() || self.relevance_divisor <= 0.0 {
            return Err(ScoreParamsError::RelevanceDivisor(self.relevance_divisor));
        }
        Ok(())
    }
}

pub fn relevance_factor(hits: u64, out_links: u64, params: &ScoreParams) -> f64 {
    let h = hits.min(params.component_cap);
    let other = match params.relevance_numerator {
        RelevanceNumerator::HPlusL => out_links.min(params.component_cap),
        RelevanceNumerator::HPlusOne => 1,
    };
    (h + other) as f64 / params.relevance_divisor
}

/// Base weight raised by the redundancy increment per extra engine, capped
/// at 1.
pub fn effective_weight(base: f64, redundancy_count: usize, params: &ScoreParams) -> f64 {
    (base + params.redundancy_increment * redundancy_count as f64).min(1.0)
}

pub fn telli_factor(weight: f64, relevance: f64, params: &ScoreParams) -> f64 {
    weight * params.damping + relevance
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredResult {
    pub merged: MergedResult,
    pub effective_weight: f64,
    pub relevance_factor: f64,
    pub telli_factor: f64,
    pub final_rank: usize,
}

/// Highest plan weight among a result's contributors.
pub fn base_weight(merged: &MergedResult, plan: &EnginePlan) -> f64 {
    merged
        .contributors
        .iter()
        .filter_map(|c| plan.weight_of(&c.engine_id))
        .fold(0.0, f64::max)
}

pub fn score(merged: &MergedResult, plan: &EnginePlan, params: &ScoreParams) -> ScoredResult {
    let w = effective_weight(base_weight(merged, plan), merged.redundancy_count, params);
    let r = relevance_factor(merged.hit_count, merged.out_links, params);
    ScoredResult {
        merged: merged.clone(),
        effective_weight: w,
        relevance_factor: r,
        telli_factor: telli_factor(w, r, params),
        final_rank: 0,
    }
}

/// The result order: `t_F` descending, best origin rank ascending, canonical
/// URL ascending.
pub fn compare(a: &ScoredResult, b: &ScoredResult) -> Ordering {
    b.telli_factor
        .total_cmp(&a.telli_factor)
        .then(a.merged.best_origin_rank.cmp(&b.merged.best_origin_rank))
        .then_with(|| a.merged.canonical_url.cmp(&b.merged.canonical_url))
}

pub fn rank(merged: &[MergedResult], plan: &EnginePlan, params: &ScoreParams) -> Vec<ScoredResult> {
    rank_with(merged, plan, params, Execution::default())
}

/// [`rank`] with an explicit execution mode. Scoring may run in parallel;
/// the sort is a single sequential pass.
pub fn rank_with(merged: &[MergedResult], plan: &EnginePlan, params: &ScoreParams, exec: Execution) -> Vec<ScoredResult> {
    let mut scored = map_slice(merged, exec, |m| score(m, plan, params));
    scored.sort_by(compare);
    for (i, s) in scored.iter_mut().enumerate() {
        s.final_rank = i + 1;
    }
    scored
}
