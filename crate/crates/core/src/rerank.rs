//! Greedy marginal-relevance re-ranking of sampled paths.
//!
//! Position by position, every remaining path `l` to a not-yet-picked
//! product is scored
//!
//! ```text
//! Q(l) = (1 - alpha) * relevance(l) + alpha * sum_c [c(prefix + l) - c(prefix)]
//! ```
//!
//! with `c(empty) = 0`. PTC is undefined below two paths, so its gain is 0
//! while the prefix holds fewer than two.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, ReasoningPath};
use crate::metrics::{MetricContext, PathMetric};
use crate::sampler::{rank_order, Candidate, CandidateSet, RankedList};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    pub alpha: f64,
    pub metrics: Vec<PathMetric>,
    pub n: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            alpha: 0.0,
            metrics: vec![PathMetric::Lir],
            n: 10,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.n == 0 {
            return Err(Error::Config("list size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Increase of `metric` when `extra` is appended to `prefix`.
pub fn marginal_gain(
    metric: PathMetric,
    prefix: &[ReasoningPath],
    extra: &ReasoningPath,
    ctx: &MetricContext<'_>,
) -> Result<f64> {
    if metric == PathMetric::Ptc && prefix.len() < 2 {
        return Ok(0.0);
    }
    let before = if prefix.is_empty() {
        0.0
    } else {
        metric.evaluate(prefix, ctx)?
    };
    let mut with = prefix.to_vec();
    with.push(extra.clone());
    Ok(metric.evaluate(&with, ctx)? - before)
}

/// The re-ranking score of `candidate` given the current prefix.
pub fn rerank_score(
    candidate: &Candidate,
    prefix: &[ReasoningPath],
    config: &RerankConfig,
    ctx: &MetricContext<'_>,
) -> Result<f64> {
    let mut gain = 0.0;
    if config.alpha > 0.0 {
        for &m in &config.metrics {
            gain += marginal_gain(m, prefix, &candidate.path, ctx)?;
        }
    }
    Ok((1.0 - config.alpha) * candidate.relevance + config.alpha * gain)
}

/// Greedily builds a list of up to `n` distinct products, never picking
/// one in `exclude`. Equal scores go to higher relevance, then higher
/// probability, then the smaller path, so `alpha = 0` reproduces the
/// relevance ranking of [`crate::sampler::top_n`].
pub fn rerank(
    cands: &CandidateSet,
    config: &RerankConfig,
    ctx: &MetricContext<'_>,
    exclude: &HashSet<EntityId>,
) -> Result<RankedList> {
    config.validate()?;
    if cands.is_empty() {
        return Err(Error::EmptyInput("rerank"));
    }
    let mut pool: Vec<&Candidate> = cands
        .candidates
        .iter()
        .filter(|c| !exclude.contains(&c.product()))
        .collect();
    let mut picked: Vec<Candidate> = Vec::new();
    let mut prefix: Vec<ReasoningPath> = Vec::new();
    while picked.len() < config.n && !pool.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in pool.iter().enumerate() {
            let q = rerank_score(c, &prefix, config, ctx)?;
            let better = match best {
                None => true,
                Some((j, bq)) => q > bq || (q == bq && rank_order(c, pool[j]).is_lt()),
            };
            if better {
                best = Some((i, q));
            }
        }
        let (i, _) = best.expect("pool is non-empty");
        let chosen = pool[i].clone();
        let product = chosen.product();
        pool.retain(|c| c.product() != product);
        prefix.push(chosen.path.clone());
        picked.push(chosen);
    }
    let truncated = picked.len() < config.n;
    Ok(RankedList {
        items: picked,
        truncated,
    })
}
