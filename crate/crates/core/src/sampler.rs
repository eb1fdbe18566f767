//! Probability-guided beam search over the trained policy, best-path
//! selection per product and relevance ranking.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, Environment, PolicyModel, SeenTypes};
use crate::error::{Error, Result};
use crate::graph::{EntityId, ReasoningPath};

/// Beam widths per hop; `usize::MAX` expands every action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeamWidths(pub Vec<usize>);

impl Default for BeamWidths {
    fn default() -> Self {
        BeamWidths(vec![25, 5, 1])
    }
}

impl BeamWidths {
    pub fn unbounded(hops: usize) -> Self {
        BeamWidths(vec![usize::MAX; hops])
    }

    pub fn validate(&self, hops: usize) -> Result<()> {
        if self.0.len() != hops {
            return Err(Error::Config(format!("expected {hops} beam widths, got {}", self.0.len())));
        }
        if self.0.contains(&0) {
            return Err(Error::Config("beam widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// A user-to-product path with its generative probability and the
/// relevance of its terminal product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub path: ReasoningPath,
    pub prob: f64,
    pub relevance: f64,
}

impl Candidate {
    pub fn product(&self) -> EntityId {
        self.path.terminal()
    }
}

/// All sampled paths of one user, ordered by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub user: EntityId,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn paths(&self) -> impl Iterator<Item = &ReasoningPath> {
        self.candidates.iter().map(|c| &c.path)
    }

    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.candidates.iter().map(|c| c.prob)
    }

    pub fn relevance(&self) -> impl Iterator<Item = f64> + '_ {
        self.candidates.iter().map(|c| c.relevance)
    }
}

/// Expands every partial path by its `widths[i]` most probable actions at
/// level `i` and keeps the length-`k` paths that end on a product.
///
/// Each partial path is its own beam node, so no two nodes are merged and
/// the emitted set with unbounded widths is exactly the set of valid walks.
pub fn sample_candidates(
    env: &Environment<'_>,
    policy: &PolicyModel,
    user: EntityId,
    widths: &BeamWidths,
) -> Result<CandidateSet> {
    let hops = env.config().hops;
    widths.validate(hops)?;
    let start = env.initial_state(user)?;
    let seen = SeenTypes::new();
    let mut beam: Vec<(AgentState, f64)> = vec![(start, 1.0)];
    for &width in &widths.0 {
        let mut next = Vec::new();
        for (state, prob) in &beam {
            let mut dist = policy.action_distribution(env, state, &seen);
            dist.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            dist.truncate(width);
            next.extend(dist.into_iter().map(|(a, p)| (state.advance(a), prob * p)));
        }
        beam = next;
    }
    let mut candidates: Vec<Candidate> = beam
        .into_iter()
        .filter(|(s, _)| env.graph.is_product(s.current))
        .map(|(s, prob)| Candidate {
            relevance: env.embeddings.relevance_unchecked(user, s.current),
            path: s.path(),
            prob,
        })
        .collect();
    candidates.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(CandidateSet { user, candidates })
}

/// The most probable path to each product; ties go to the smaller path.
pub fn select_best_paths(cands: &CandidateSet) -> BTreeMap<EntityId, Candidate> {
    let mut best: BTreeMap<EntityId, Candidate> = BTreeMap::new();
    for c in &cands.candidates {
        match best.get(&c.product()) {
            Some(b) if b.prob > c.prob || (b.prob == c.prob && b.path <= c.path) => {}
            _ => {
                best.insert(c.product(), c.clone());
            }
        }
    }
    best
}

/// A ranked recommendation list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<Candidate>,
    /// Fewer than the requested number of products were available.
    pub truncated: bool,
}

impl RankedList {
    pub fn products(&self) -> Vec<EntityId> {
        self.items.iter().map(|c| c.product()).collect()
    }

    pub fn paths(&self) -> Vec<ReasoningPath> {
        self.items.iter().map(|c| c.path.clone()).collect()
    }
}

/// Ranking order shared with the re-ranker: higher relevance, then higher
/// probability, then the smaller path.
pub(crate) fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.relevance
        .total_cmp(&a.relevance)
        .then(b.prob.total_cmp(&a.prob))
        .then(a.path.cmp(&b.path))
}

/// Top-`n` products by relevance, skipping `exclude`.
pub fn top_n(
    selected: &BTreeMap<EntityId, Candidate>,
    n: usize,
    exclude: &HashSet<EntityId>,
) -> Result<RankedList> {
    if n == 0 {
        return Err(Error::Config("list size must be >= 1".into()));
    }
    let mut items: Vec<Candidate> = selected
        .iter()
        .filter(|(p, _)| !exclude.contains(p))
        .map(|(_, c)| c.clone())
        .collect();
    items.sort_by(rank_order);
    let truncated = items.len() < n;
    items.truncate(n);
    Ok(RankedList { items, truncated })
}
