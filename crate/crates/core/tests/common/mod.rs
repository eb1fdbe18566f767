//! Random graphs and straightforward reimplementations of the path metrics,
//! shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use pathrec::graph::{GraphBuilder, Interaction};
use pathrec::metrics::{entity_popularity, MetricContext, PathMetric, PopularityTable, RecencyTable};
use pathrec::{Direction, EntityId, Hop, InteractionLog, KnowledgeGraph, ReasoningPath, RelationId};
use rand::seq::SliceRandom;
use rand::Rng;

pub struct World {
    pub graph: KnowledgeGraph,
    pub log: InteractionLog,
    pub recency: RecencyTable,
    pub popularity: PopularityTable,
    pub users: Vec<EntityId>,
    pub products: Vec<EntityId>,
    pub beta: f64,
    pub reference: RefScores,
}

impl World {
    pub fn ctx(&self) -> MetricContext<'_> {
        MetricContext {
            recency: &self.recency,
            popularity: &self.popularity,
            num_relations: self.graph.num_relations(),
        }
    }

    /// A 3-hop path from `user` through one of its interactions to a
    /// random product. Paths are not necessarily walkable in the graph.
    pub fn random_path(&self, rng: &mut impl Rng, user: EntityId) -> ReasoningPath {
        let bought = self.graph.feedback_relation();
        let linked = self.log.get(user).choose(rng).unwrap().product;
        let n = self.graph.num_entities() as u32;
        let r = self.graph.num_relations() as u32;
        let dir = |rng: &mut dyn rand::RngCore| if rng.gen_bool(0.5) { Direction::Forward } else { Direction::Backward };
        ReasoningPath::new(
            user,
            vec![
                Hop { relation: bought, direction: Direction::Forward, entity: linked },
                Hop { relation: RelationId(rng.gen_range(0..r)), direction: dir(rng), entity: EntityId(rng.gen_range(0..n)) },
                Hop {
                    relation: RelationId(rng.gen_range(0..r)),
                    direction: dir(rng),
                    entity: *self.products.choose(rng).unwrap(),
                },
            ],
        )
    }
}

/// Users, products and up to three attribute types with random links.
/// Every user has at least one interaction; a user's timestamps are
/// distinct.
pub fn random_world(rng: &mut impl Rng, max_entities: usize) -> World {
    let beta = [0.1, 0.3, 0.5, 1.0][rng.gen_range(0..4)];
    let mut b = GraphBuilder::new("user", "product", "bought");
    let budget = max_entities.max(8);
    let n_users = rng.gen_range(1..=3.min(budget / 4));
    let n_products = rng.gen_range(3..=(budget / 3).max(3));
    let users: Vec<EntityId> = (0..n_users)
        .map(|i| b.add_entity(&format!("u{i}"), "user", &format!("user {i}")))
        .collect();
    let products: Vec<EntityId> = (0..n_products)
        .map(|i| b.add_entity(&format!("p{i}"), "product", &format!("product {i}")))
        .collect();
    let left = budget.saturating_sub(n_users + n_products).max(2);
    let n_types = rng.gen_range(1..=3);
    let mut attrs = Vec::new();
    for t in 0..n_types {
        let count = rng.gen_range(1..=(left / n_types).max(1));
        let rel = format!("rel{t}");
        for i in 0..count {
            let e = b.add_entity(&format!("a{t}_{i}"), &format!("type{t}"), &format!("attr {t}.{i}"));
            attrs.push((e, rel.clone()));
        }
    }
    let mut triples = BTreeSet::new();
    for (e, rel) in &attrs {
        for &p in &products {
            if rng.gen_bool(0.3) {
                triples.insert((*e, rel.clone(), p));
            }
        }
    }
    for (i, &p) in products.iter().enumerate() {
        for &q in &products[i + 1..] {
            if rng.gen_bool(0.05) {
                triples.insert((p, "similar".to_string(), q));
            }
        }
    }
    let mut log = InteractionLog::new();
    for &u in &users {
        let n = rng.gen_range(1..=6);
        let mut ts: Vec<i64> = (0..1000).collect();
        ts.shuffle(rng);
        for &t in &ts[..n] {
            let p = *products.choose(rng).unwrap();
            log.push(u, p, t);
            triples.insert((u, "bought".to_string(), p));
        }
    }
    log.sort();
    for (h, r, t) in triples {
        b.add_triple(h, &r, t);
    }
    let graph = b.build().unwrap();
    let recency = RecencyTable::from_log(&log, beta).unwrap();
    let popularity = entity_popularity(&graph, beta).unwrap();
    let reference = RefScores::new(&graph, &log, beta);
    World { graph, log, recency, popularity, users, products, beta, reference }
}

// ---- reference implementations ----

pub fn ref_ewma_normalized(xs: &[f64], beta: f64) -> Vec<f64> {
    if xs.iter().all(|&x| x == xs[0]) {
        return vec![1.0; xs.len()];
    }
    let mut raw = vec![xs[0]];
    for &x in &xs[1..] {
        let prev = *raw.last().unwrap();
        raw.push((1.0 - beta) * prev + beta * x);
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Recency of `product` for `user`: the highest score among its
/// occurrences in the chronologically ordered history.
pub fn ref_recency(log: &InteractionLog, beta: f64, user: EntityId, product: EntityId) -> f64 {
    let mut items: Vec<Interaction> = log.get(user).to_vec();
    items.sort_by_key(|i| i.timestamp);
    let ts: Vec<f64> = items.iter().map(|i| i.timestamp as f64).collect();
    let s = ref_ewma_normalized(&ts, beta);
    items
        .iter()
        .zip(&s)
        .filter(|(i, _)| i.product == product)
        .map(|(_, &v)| v)
        .fold(f64::NAN, f64::max)
}

/// Popularity from triple counts, entities of a type ordered by (degree, id).
pub fn ref_popularity(graph: &KnowledgeGraph, beta: f64, entity: EntityId) -> f64 {
    let degree = |e: EntityId| graph.triples().iter().filter(|t| t.head == e).count()
        + graph.triples().iter().filter(|t| t.tail == e).count();
    let ty = graph.entity_type(entity);
    let mut members: Vec<(usize, EntityId)> = graph
        .entities()
        .filter(|&e| graph.entity_type(e) == ty)
        .map(|e| (degree(e), e))
        .collect();
    members.sort();
    let xs: Vec<f64> = members.iter().map(|&(d, _)| d as f64).collect();
    let s = ref_ewma_normalized(&xs, beta);
    let pos = members.iter().position(|&(_, e)| e == entity).unwrap();
    s[pos]
}

fn count_distinct<T: PartialEq>(xs: &[T]) -> usize {
    (0..xs.len()).filter(|&i| !xs[..i].contains(&xs[i])).count()
}

fn shared(p: &ReasoningPath) -> EntityId {
    let k = p.hops.len();
    if k >= 2 {
        p.hops[k - 2].entity
    } else {
        p.origin
    }
}

/// Direct computation of `metric` over `paths`; `None` where undefined.
pub fn ref_metric(metric: PathMetric, paths: &[ReasoningPath], w: &World) -> Option<f64> {
    let n = paths.len();
    if n == 0 {
        return None;
    }
    let types: Vec<RelationId> = paths.iter().map(|p| p.hops.last().unwrap().relation).collect();
    Some(match metric {
        PathMetric::Lir => {
            paths.iter().map(|p| w.reference.recency[&(p.origin, p.hops[0].entity)]).sum::<f64>() / n as f64
        }
        PathMetric::Lid => {
            let linked: Vec<EntityId> = paths.iter().map(|p| p.hops[0].entity).collect();
            count_distinct(&linked) as f64 / n as f64
        }
        PathMetric::Sep => paths.iter().map(|p| w.reference.popularity[&shared(p)]).sum::<f64>() / n as f64,
        PathMetric::Sed => {
            let s: Vec<EntityId> = paths.iter().map(shared).collect();
            count_distinct(&s) as f64 / n as f64
        }
        PathMetric::Ptd => count_distinct(&types) as f64 / n.min(w.graph.num_relations()) as f64,
        PathMetric::Ptc => {
            if n < 2 {
                return None;
            }
            let mut same = 0usize;
            for i in 0..n {
                for j in 0..n {
                    if i != j && types[i] == types[j] {
                        same += 1;
                    }
                }
            }
            1.0 - same as f64 / (n * (n - 1)) as f64
        }
    })
}

/// Reference recency and popularity of every (user, product) pair and
/// entity, computed once per world.
pub struct RefScores {
    pub recency: HashMap<(EntityId, EntityId), f64>,
    pub popularity: HashMap<EntityId, f64>,
}

impl RefScores {
    pub fn new(graph: &KnowledgeGraph, log: &InteractionLog, beta: f64) -> Self {
        let mut recency = HashMap::new();
        for u in log.users() {
            for it in log.get(u) {
                recency.insert((u, it.product), ref_recency(log, beta, u, it.product));
            }
        }
        let popularity = graph.entities().map(|e| (e, ref_popularity(graph, beta, e))).collect();
        RefScores { recency, popularity }
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
