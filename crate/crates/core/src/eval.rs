//! Ranking utility, per-user path-quality reports and dataset statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, InteractionLog, KnowledgeGraph, ReasoningPath};
use crate::metrics::{MetricContext, PathMetric};

/// NDCG@n with binary gains and `1 / log2(rank + 1)` discounts.
pub fn ndcg_at_k(ranked: &[EntityId], relevant: &HashSet<EntityId>, n: usize) -> f64 {
    if relevant.is_empty() || n == 0 {
        return 0.0;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, p)| relevant.contains(p))
        .fold(0.0, |acc, (i, _)| acc + discount(i + 1));
    let ideal: f64 = (1..=relevant.len().min(n)).map(discount).sum();
    dcg / ideal
}

/// Reciprocal rank of the first hit within the top `n`, or 0.
pub fn mrr_at_k(ranked: &[EntityId], relevant: &HashSet<EntityId>, n: usize) -> f64 {
    ranked
        .iter()
        .take(n)
        .position(|p| relevant.contains(p))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// One user's recommendation list: products in rank order with their paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRun {
    pub user: EntityId,
    pub products: Vec<EntityId>,
    pub paths: Vec<ReasoningPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReport {
    pub user: EntityId,
    pub ndcg: f64,
    pub mrr: f64,
    /// Path metrics in [`PathMetric::ALL`] order; `None` when undefined.
    pub metrics: BTreeMap<PathMetric, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Option<f64>,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n: usize,
    pub users: Vec<UserReport>,
    pub ndcg: Aggregate,
    pub mrr: Aggregate,
    pub metrics: BTreeMap<PathMetric, Aggregate>,
}

fn mean(values: impl Iterator<Item = f64>) -> Aggregate {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    Aggregate {
        mean: (count > 0).then(|| sum / count as f64),
        users: count,
    }
}

impl RunReport {
    /// Per-user rows keyed by the graph's entity keys, then the means.
    pub fn to_tsv(&self, graph: &KnowledgeGraph) -> String {
        let mut out = String::from("user\tndcg\tmrr");
        for m in PathMetric::ALL {
            write!(out, "\t{}", m.name().to_lowercase()).unwrap();
        }
        out.push('\n');
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        for u in &self.users {
            write!(out, "{}\t{:.6}\t{:.6}", graph.entity_key(u.user), u.ndcg, u.mrr).unwrap();
            for m in PathMetric::ALL {
                write!(out, "\t{}", fmt(u.metrics.get(&m).copied().flatten())).unwrap();
            }
            out.push('\n');
        }
        write!(out, "mean\t{}\t{}", fmt(self.ndcg.mean), fmt(self.mrr.mean)).unwrap();
        for m in PathMetric::ALL {
            write!(out, "\t{}", fmt(self.metrics[&m].mean)).unwrap();
        }
        out.push('\n');
        out
    }
}

/// Evaluates every user of `runs` with at least one test interaction.
///
/// NDCG and MRR are computed at `n`; path metrics on the user's list. A
/// metric that is undefined for a user (PTC with fewer than two paths, or
/// any metric on an empty list) is reported as missing and left out of its
/// average.
pub fn evaluate_run(runs: &[UserRun], test: &InteractionLog, ctx: &MetricContext<'_>, n: usize) -> Result<RunReport> {
    if n == 0 {
        return Err(Error::Config("list size must be >= 1".into()));
    }
    let mut users = Vec::new();
    let mut seen = HashSet::new();
    for run in runs {
        if run.products.len() != run.paths.len() {
            return Err(Error::Structure(format!("user {}: products and paths differ in length", run.user)));
        }
        if !seen.insert(run.user) {
            return Err(Error::Structure(format!("user {} appears twice in the run", run.user)));
        }
        let relevant = test.products_of(run.user);
        if relevant.is_empty() {
            continue;
        }
        let paths: Vec<ReasoningPath> = run.paths.iter().take(n).cloned().collect();
        let mut metrics = BTreeMap::new();
        for m in PathMetric::ALL {
            let v = if paths.is_empty() || (m == PathMetric::Ptc && paths.len() < 2) {
                None
            } else {
                Some(m.evaluate(&paths, ctx)?)
            };
            metrics.insert(m, v);
        }
        users.push(UserReport {
            user: run.user,
            ndcg: ndcg_at_k(&run.products, &relevant, n),
            mrr: mrr_at_k(&run.products, &relevant, n),
            metrics,
        });
    }
    users.sort_by_key(|u| u.user);
    let metrics = PathMetric::ALL
        .into_iter()
        .map(|m| (m, mean(users.iter().filter_map(|u| u.metrics[&m]))))
        .collect();
    Ok(RunReport {
        n,
        ndcg: mean(users.iter().map(|u| u.ndcg)),
        mrr: mean(users.iter().map(|u| u.mrr)),
        metrics,
        users,
    })
}

pub const DAY: i64 = 86_400;
pub const MONTH: i64 = 30 * DAY;
pub const YEAR: i64 = 365 * DAY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub users: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub entity_type: String,
    pub entities: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationFrequency {
    pub relation: String,
    pub triples: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub recency_buckets: Vec<Bucket>,
    pub degrees: Vec<DegreeSummary>,
    pub relations: Vec<RelationFrequency>,
}

/// Mean distance in seconds between a user's interactions and their most
/// recent one.
pub fn mean_recency_gap(timestamps: &[i64]) -> Option<f64> {
    let latest = *timestamps.iter().max()?;
    Some(timestamps.iter().map(|&t| (latest - t) as f64).sum::<f64>() / timestamps.len() as f64)
}

/// Linear-interpolation percentile of sorted values, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Recency buckets of users, degree summaries per entity type and
/// relation frequencies of the knowledge graph `kg`.
///
/// Degrees are counted after adding the interactions of `log` as feedback
/// triples; relation frequencies cover `kg` alone and skip relations
/// without triples.
pub fn dataset_stats(kg: &KnowledgeGraph, log: &InteractionLog) -> Result<DatasetStats> {
    let graph = &kg.with_feedback(log)?;
    let labels = ["<=1D", "<=1M", "<=1Y", ">1Y"];
    let mut counts = [0usize; 4];
    for (_, items) in log.iter() {
        let ts: Vec<i64> = items.iter().map(|i| i.timestamp).collect();
        if let Some(gap) = mean_recency_gap(&ts) {
            let b = if gap <= DAY as f64 {
                0
            } else if gap <= MONTH as f64 {
                1
            } else if gap <= YEAR as f64 {
                2
            } else {
                3
            };
            counts[b] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let recency_buckets = labels
        .iter()
        .zip(counts)
        .map(|(l, c)| Bucket {
            label: l.to_string(),
            users: c,
            percent: percent(c, total),
        })
        .collect();

    let mut degrees = Vec::new();
    for ty in 0..graph.num_types() {
        let ty = crate::graph::TypeId(ty as u32);
        let mut d: Vec<f64> = graph.entities_of_type(ty).map(|e| graph.degree(e) as f64).collect();
        if d.is_empty() {
            continue;
        }
        d.sort_by(f64::total_cmp);
        degrees.push(DegreeSummary {
            entity_type: graph.type_name(ty).to_owned(),
            entities: d.len(),
            min: d[0],
            p25: percentile(&d, 0.25),
            median: percentile(&d, 0.5),
            p75: percentile(&d, 0.75),
            p90: percentile(&d, 0.9),
            max: d[d.len() - 1],
            mean: d.iter().sum::<f64>() / d.len() as f64,
        });
    }

    let total = kg.triples().len();
    let relations = kg
        .relation_counts()
        .into_iter()
        .zip(kg.relations())
        .filter(|&(c, _)| c > 0)
        .map(|(c, r)| RelationFrequency {
            relation: kg.relation_name(r).to_owned(),
            triples: c,
            percent: percent(c, total),
        })
        .collect();
    Ok(DatasetStats {
        recency_buckets,
        degrees,
        relations,
    })
}

impl DatasetStats {
    pub fn buckets_tsv(&self) -> String {
        let mut out = String::from("bucket\tusers\tpercent\n");
        for b in &self.recency_buckets {
            writeln!(out, "{}\t{}\t{:.4}", b.label, b.users, b.percent).unwrap();
        }
        out
    }

    pub fn degrees_tsv(&self) -> String {
        let mut out = String::from("type\tentities\tmin\tp25\tmedian\tp75\tp90\tmax\tmean\n");
        for d in &self.degrees {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}",
                d.entity_type, d.entities, d.min, d.p25, d.median, d.p75, d.p90, d.max, d.mean
            )
            .unwrap();
        }
        out
    }

    pub fn relations_tsv(&self) -> String {
        let mut out = String::from("relation\ttriples\tpercent\n");
        for r in &self.relations {
            writeln!(out, "{}\t{}\t{:.4}", r.relation, r.triples, r.percent).unwrap();
        }
        out
    }
}
