//! Reasoning-path quality metrics.
//!
//! Two smoothed, min-max normalised scores feed the list-level metrics:
//!
//! - interaction recency: an exponentially weighted moving average over the
//!   timestamps of a user's chronologically sorted interactions;
//! - entity popularity: the same recurrence over the degrees of all entities
//!   of one type, sorted by degree.
//!
//! Over a list of paths, LIR/SEP average those scores for the linked product
//! and the shared entity, LID/SED count distinct linked products and shared
//! entities, and PTD/PTC measure the spread of path types.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, Interaction, InteractionLog, KnowledgeGraph, ReasoningPath, RelationId, TypeId};

pub const DEFAULT_BETA: f64 = 0.3;

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("decay must lie in (0, 1], got {beta}")))
    }
}

/// `s_1 = x_1`, `s_i = (1 - beta) * s_{i-1} + beta * x_i`.
pub fn ewma(values: &[f64], beta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, &x) in values.iter().enumerate() {
        acc = if i == 0 { x } else { (1.0 - beta) * acc + beta * x };
        out.push(acc);
    }
    out
}

/// Min-max normalisation. A constant (or single-element) series maps to 1.0.
///
/// Spreads below `1e-12` relative to the magnitude count as constant; the
/// smoothing recurrence does not reproduce a constant input bit-exactly.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return vec![1.0; values.len()];
    }
    values.iter().map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

/// Normalised recency score of every interaction in a chronologically
/// sorted list.
pub fn interaction_recency(sorted: &[Interaction], beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    if sorted.is_empty() {
        return Err(Error::EmptyInput("interaction_recency"));
    }
    if sorted.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
        return Err(Error::Dataset("interactions are not sorted by timestamp".into()));
    }
    let ts: Vec<f64> = sorted.iter().map(|i| i.timestamp as f64).collect();
    Ok(min_max(&ewma(&ts, beta)))
}

/// Per-user recency score of each interacted product.
#[derive(Debug, Clone, Default)]
pub struct RecencyTable {
    beta: f64,
    users: HashMap<EntityId, HashMap<EntityId, f64>>,
    rows: BTreeMap<EntityId, Vec<(EntityId, i64, f64)>>,
}

impl RecencyTable {
    /// Builds the table from a (training) interaction log. A product seen
    /// several times keeps its most recent, hence highest, score.
    pub fn from_log(log: &InteractionLog, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let mut table = RecencyTable {
            beta,
            ..Default::default()
        };
        for (&user, items) in log.iter() {
            let scores = interaction_recency(items, beta)?;
            let map = table.users.entry(user).or_default();
            let rows = table.rows.entry(user).or_default();
            for (it, &s) in items.iter().zip(&scores) {
                let slot = map.entry(it.product).or_insert(s);
                *slot = slot.max(s);
                rows.push((it.product, it.timestamp, s));
            }
        }
        Ok(table)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn score(&self, user: EntityId, product: EntityId) -> Option<f64> {
        self.users.get(&user)?.get(&product).copied()
    }

    /// `(user, product, timestamp, normalised score)` in user then
    /// chronological order.
    pub fn rows(&self) -> impl Iterator<Item = (EntityId, EntityId, i64, f64)> + '_ {
        self.rows
            .iter()
            .flat_map(|(&u, v)| v.iter().map(move |&(p, t, s)| (u, p, t, s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopularityEntry {
    pub entity: EntityId,
    pub degree: usize,
    pub raw: f64,
    pub normalized: f64,
}

/// Per-type popularity score of every entity.
#[derive(Debug, Clone, Default)]
pub struct PopularityTable {
    beta: f64,
    by_type: BTreeMap<TypeId, Vec<PopularityEntry>>,
    scores: HashMap<EntityId, f64>,
}

impl PopularityTable {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn score(&self, entity: EntityId) -> Option<f64> {
        self.scores.get(&entity).copied()
    }

    /// Entries of one type, sorted by degree ascending then id.
    pub fn entries(&self, ty: TypeId) -> &[PopularityEntry] {
        self.by_type.get(&ty).map_or(&[], Vec::as_slice)
    }

    pub fn types(&self) -> impl Iterator<Item = TypeId> + '_ {
        self.by_type.keys().copied()
    }
}

/// Popularity table of every entity type in `graph`, using the number of
/// triples an entity takes part in as its raw popularity.
pub fn entity_popularity(graph: &KnowledgeGraph, beta: f64) -> Result<PopularityTable> {
    check_beta(beta)?;
    let mut groups: BTreeMap<TypeId, Vec<(usize, EntityId)>> = BTreeMap::new();
    for e in graph.entities() {
        groups.entry(graph.entity_type(e)).or_default().push((graph.degree(e), e));
    }
    let mut table = PopularityTable {
        beta,
        ..Default::default()
    };
    for (ty, mut members) in groups {
        members.sort_unstable();
        let degrees: Vec<f64> = members.iter().map(|&(d, _)| d as f64).collect();
        let raw = ewma(&degrees, beta);
        let norm = min_max(&raw);
        let entries: Vec<PopularityEntry> = members
            .iter()
            .zip(raw.iter().zip(&norm))
            .map(|(&(degree, entity), (&raw, &normalized))| PopularityEntry {
                entity,
                degree,
                raw,
                normalized,
            })
            .collect();
        for e in &entries {
            table.scores.insert(e.entity, e.normalized);
        }
        table.by_type.insert(ty, entries);
    }
    Ok(table)
}

fn non_empty(paths: &[ReasoningPath], metric: &'static str) -> Result<()> {
    if paths.is_empty() {
        Err(Error::EmptyInput(metric))
    } else {
        Ok(())
    }
}

fn hops<'a>(p: &'a ReasoningPath, metric: &'static str) -> Result<&'a [crate::graph::Hop]> {
    if p.hops.is_empty() {
        Err(Error::Structure(format!("{metric} needs paths with at least one hop")))
    } else {
        Ok(&p.hops)
    }
}

/// Linking interaction recency: mean recency of the linked products.
pub fn lir(paths: &[ReasoningPath], recency: &RecencyTable) -> Result<f64> {
    non_empty(paths, "LIR")?;
    let mut sum = 0.0;
    for p in paths {
        let linked = hops(p, "LIR")?[0].entity;
        sum += recency
            .score(p.origin, linked)
            .ok_or_else(|| Error::MissingEntry(format!("{} (user {})", linked, p.origin), "recency"))?;
    }
    Ok(sum / paths.len() as f64)
}

/// Linking interaction diversity: share of distinct linked products.
pub fn lid(paths: &[ReasoningPath]) -> Result<f64> {
    non_empty(paths, "LID")?;
    let mut distinct = HashSet::new();
    for p in paths {
        distinct.insert(hops(p, "LID")?[0].entity);
    }
    Ok(distinct.len() as f64 / paths.len() as f64)
}

/// Shared entity popularity: mean popularity of the shared entities.
pub fn sep(paths: &[ReasoningPath], popularity: &PopularityTable) -> Result<f64> {
    non_empty(paths, "SEP")?;
    let mut sum = 0.0;
    for p in paths {
        hops(p, "SEP")?;
        let shared = p.shared_entity().expect("non-empty path");
        sum += popularity
            .score(shared)
            .ok_or_else(|| Error::MissingEntry(shared.to_string(), "popularity"))?;
    }
    Ok(sum / paths.len() as f64)
}

/// Shared entity diversity: share of distinct shared entities.
pub fn sed(paths: &[ReasoningPath]) -> Result<f64> {
    non_empty(paths, "SED")?;
    let mut distinct = HashSet::new();
    for p in paths {
        hops(p, "SED")?;
        distinct.insert(p.shared_entity().expect("non-empty path"));
    }
    Ok(distinct.len() as f64 / paths.len() as f64)
}

fn type_counts(paths: &[ReasoningPath], metric: &'static str) -> Result<HashMap<RelationId, usize>> {
    let mut counts = HashMap::new();
    for p in paths {
        let r = hops(p, metric)?.last().unwrap().relation;
        *counts.entry(r).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Path type diversity: distinct path types over `min(|paths|, |R|)`.
pub fn ptd(paths: &[ReasoningPath], num_relation_types: usize) -> Result<f64> {
    non_empty(paths, "PTD")?;
    if num_relation_types == 0 {
        return Err(Error::Config("PTD needs at least one relation type".into()));
    }
    let distinct = type_counts(paths, "PTD")?.len();
    Ok(distinct as f64 / paths.len().min(num_relation_types) as f64)
}

/// Path type concentration, `1 - sum N(r)(N(r)-1) / (n(n-1))`. Undefined
/// for fewer than two paths.
pub fn ptc(paths: &[ReasoningPath]) -> Result<f64> {
    let n = paths.len();
    if n < 2 {
        return Err(Error::TooFewPaths {
            metric: "PTC",
            needed: 2,
            got: n,
        });
    }
    let same: usize = type_counts(paths, "PTC")?.values().map(|&c| c * (c - 1)).sum();
    Ok(1.0 - same as f64 / (n * (n - 1)) as f64)
}

/// The path-quality metrics by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMetric {
    Lir,
    Lid,
    Sep,
    Sed,
    Ptd,
    Ptc,
}

impl PathMetric {
    pub const ALL: [PathMetric; 6] = [
        PathMetric::Lir,
        PathMetric::Lid,
        PathMetric::Sep,
        PathMetric::Sed,
        PathMetric::Ptd,
        PathMetric::Ptc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PathMetric::Lir => "lir",
            PathMetric::Lid => "lid",
            PathMetric::Sep => "sep",
            PathMetric::Sed => "sed",
            PathMetric::Ptd => "ptd",
            PathMetric::Ptc => "ptc",
        }
    }

    pub fn evaluate(self, paths: &[ReasoningPath], ctx: &MetricContext<'_>) -> Result<f64> {
        match self {
            PathMetric::Lir => lir(paths, ctx.recency),
            PathMetric::Lid => lid(paths),
            PathMetric::Sep => sep(paths, ctx.popularity),
            PathMetric::Sed => sed(paths),
            PathMetric::Ptd => ptd(paths, ctx.num_relations),
            PathMetric::Ptc => ptc(paths),
        }
    }
}

impl fmt::Display for PathMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PathMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PathMetric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

/// Parses a comma-separated metric list such as `lir,sep`.
pub fn parse_metric_list(s: &str) -> Result<Vec<PathMetric>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m: PathMetric = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// Everything needed to evaluate any [`PathMetric`].
#[derive(Debug, Clone, Copy)]
pub struct MetricContext<'a> {
    pub recency: &'a RecencyTable,
    pub popularity: &'a PopularityTable,
    pub num_relations: usize,
}
