//! Immutable knowledge-graph store.
//!
//! Entities and relations are interned to dense integer ids at build time.
//! Every triple `(head, relation, tail)` is indexed twice in the adjacency
//! lists: once as a forward edge leaving `head` and once as a backward edge
//! leaving `tail`, so walks may traverse relations in either direction.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypeId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Direction in which an edge is walked relative to its stored triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `head -> tail`
    Forward,
    /// `tail -> head`, i.e. the inverse relation.
    Backward,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// An outgoing adjacency entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub relation: RelationId,
    pub direction: Direction,
    pub neighbor: EntityId,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entity_keys: Vec<String>,
    entity_names: Vec<String>,
    entity_types: Vec<TypeId>,
    type_names: Vec<String>,
    relation_names: Vec<String>,
    relation_surfaces: Vec<String>,
    key_index: HashMap<String, EntityId>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: BTreeSet<Triple>,
    adjacency: Vec<Vec<Edge>>,
    user_type: TypeId,
    product_type: TypeId,
    feedback: RelationId,
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entity_keys.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn num_types(&self) -> usize {
        self.type_names.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains_triple(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.triple_set.contains(&Triple {
            head,
            relation,
            tail,
        })
    }

    /// Outgoing edges of `entity`, sorted by `(relation, direction, neighbor)`.
    pub fn edges(&self, entity: EntityId) -> &[Edge] {
        &self.adjacency[entity.index()]
    }

    pub fn has_edge(&self, from: EntityId, relation: RelationId, direction: Direction, to: EntityId) -> bool {
        match direction {
            Direction::Forward => self.contains_triple(from, relation, to),
            Direction::Backward => self.contains_triple(to, relation, from),
        }
    }

    /// Number of triples the entity takes part in. Since every triple is
    /// mirrored in the adjacency index this is the in-degree of the
    /// symmetrised graph.
    pub fn degree(&self, entity: EntityId) -> usize {
        self.adjacency[entity.index()].len()
    }

    pub fn contains_entity(&self, entity: EntityId) -> bool {
        entity.index() < self.entity_keys.len()
    }

    pub fn check_entity(&self, entity: EntityId) -> Result<()> {
        if self.contains_entity(entity) {
            Ok(())
        } else {
            Err(Error::UnknownEntity(entity.0))
        }
    }

    pub fn entity_key(&self, entity: EntityId) -> &str {
        &self.entity_keys[entity.index()]
    }

    pub fn entity_name(&self, entity: EntityId) -> &str {
        &self.entity_names[entity.index()]
    }

    pub fn entity_type(&self, entity: EntityId) -> TypeId {
        self.entity_types[entity.index()]
    }

    pub fn type_name(&self, ty: TypeId) -> &str {
        &self.type_names[ty.0 as usize]
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.type_names
            .iter()
            .position(|n| n == name)
            .map(|i| TypeId(i as u32))
    }

    pub fn relation_name(&self, relation: RelationId) -> &str {
        &self.relation_names[relation.index()]
    }

    /// Verb phrase used when rendering explanations.
    pub fn relation_surface(&self, relation: RelationId) -> &str {
        &self.relation_surfaces[relation.index()]
    }

    pub fn entity_by_key(&self, key: &str) -> Option<EntityId> {
        self.key_index.get(key).copied()
    }

    pub fn relation_by_name(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn user_type(&self) -> TypeId {
        self.user_type
    }

    pub fn product_type(&self) -> TypeId {
        self.product_type
    }

    pub fn feedback_relation(&self) -> RelationId {
        self.feedback
    }

    pub fn is_user(&self, entity: EntityId) -> bool {
        self.contains_entity(entity) && self.entity_type(entity) == self.user_type
    }

    pub fn is_product(&self, entity: EntityId) -> bool {
        self.contains_entity(entity) && self.entity_type(entity) == self.product_type
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entity_keys.len() as u32).map(EntityId)
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relation_names.len() as u32).map(RelationId)
    }

    pub fn users(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entities().filter(move |&e| self.is_user(e))
    }

    pub fn products(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entities().filter(move |&e| self.is_product(e))
    }

    pub fn entities_of_type(&self, ty: TypeId) -> impl Iterator<Item = EntityId> + '_ {
        self.entities().filter(move |&e| self.entity_type(e) == ty)
    }

    /// Per-relation triple counts, indexed by relation id.
    pub fn relation_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_relations()];
        for t in &self.triples {
            counts[t.relation.index()] += 1;
        }
        counts
    }

    /// A builder pre-populated with every entity, relation and triple of this graph.
    pub fn to_builder(&self) -> GraphBuilder {
        let mut b = GraphBuilder::new(
            self.type_name(self.user_type),
            self.type_name(self.product_type),
            self.relation_name(self.feedback),
        );
        for e in self.entities() {
            b.add_entity(self.entity_key(e), self.type_name(self.entity_type(e)), self.entity_name(e));
        }
        for r in self.relations() {
            let id = b.relation(self.relation_name(r));
            b.set_surface(id, self.relation_surface(r));
        }
        for t in &self.triples {
            b.add_triple_ids(t.head, t.relation, t.tail);
        }
        b
    }

    /// Graph restricted to relations occurring at least `min_count` times.
    ///
    /// The feedback relation is always kept. Entities are never dropped, so
    /// entity ids stay stable; relation ids are re-packed.
    pub fn filter_relations(&self, min_count: usize) -> Result<KnowledgeGraph> {
        let counts = self.relation_counts();
        let mut b = GraphBuilder::new(
            self.type_name(self.user_type),
            self.type_name(self.product_type),
            self.relation_name(self.feedback),
        );
        for e in self.entities() {
            b.add_entity(self.entity_key(e), self.type_name(self.entity_type(e)), self.entity_name(e));
        }
        let keep = |r: RelationId| r == self.feedback || counts[r.index()] >= min_count;
        let mut remap = vec![None; self.num_relations()];
        for r in self.relations().filter(|&r| keep(r)) {
            let id = b.relation(self.relation_name(r));
            b.set_surface(id, self.relation_surface(r));
            remap[r.index()] = Some(id);
        }
        for t in &self.triples {
            if let Some(r) = remap[t.relation.index()] {
                b.add_triple_ids(t.head, r, t.tail);
            }
        }
        b.build()
    }

    /// Copy of the graph with one feedback triple per logged interaction.
    pub fn with_feedback(&self, log: &InteractionLog) -> Result<KnowledgeGraph> {
        let mut b = self.to_builder();
        for (&user, items) in log.iter() {
            for it in items {
                b.add_triple_ids(user, self.feedback, it.product);
            }
        }
        b.build()
    }

    /// Checks that `path` walks existing edges and repeats neither an entity
    /// nor a directed relation.
    pub fn validate_path(&self, path: &ReasoningPath) -> Result<()> {
        if path.hops.is_empty() {
            return Err(Error::Structure("path has no hops".into()));
        }
        self.check_entity(path.origin)?;
        let mut seen_entities = vec![path.origin];
        let mut seen_relations: Vec<(RelationId, Direction)> = Vec::new();
        let mut current = path.origin;
        for hop in &path.hops {
            self.check_entity(hop.entity)?;
            if hop.relation.index() >= self.num_relations() {
                return Err(Error::UnknownRelation(hop.relation.0));
            }
            if !self.has_edge(current, hop.relation, hop.direction, hop.entity) {
                return Err(Error::Structure(format!(
                    "no {:?} edge {} -{}-> {}",
                    hop.direction, current, hop.relation, hop.entity
                )));
            }
            if seen_entities.contains(&hop.entity) {
                return Err(Error::Structure(format!("entity {} repeated", hop.entity)));
            }
            if seen_relations.contains(&(hop.relation, hop.direction)) {
                return Err(Error::Structure(format!("relation {} repeated", hop.relation)));
            }
            seen_entities.push(hop.entity);
            seen_relations.push((hop.relation, hop.direction));
            current = hop.entity;
        }
        Ok(())
    }
}

/// Incremental constructor for [`KnowledgeGraph`].
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    user_type: String,
    product_type: String,
    feedback: String,
    entity_keys: Vec<String>,
    entity_names: Vec<String>,
    entity_types: Vec<TypeId>,
    type_names: Vec<String>,
    key_index: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_surfaces: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    conflicts: Vec<String>,
}

impl GraphBuilder {
    pub fn new(user_type: &str, product_type: &str, feedback_relation: &str) -> Self {
        let mut b = GraphBuilder {
            user_type: user_type.to_owned(),
            product_type: product_type.to_owned(),
            feedback: feedback_relation.to_owned(),
            entity_keys: Vec::new(),
            entity_names: Vec::new(),
            entity_types: Vec::new(),
            type_names: Vec::new(),
            key_index: HashMap::new(),
            relation_names: Vec::new(),
            relation_surfaces: Vec::new(),
            relation_index: HashMap::new(),
            triples: Vec::new(),
            conflicts: Vec::new(),
        };
        b.type_id(user_type);
        b.type_id(product_type);
        b.relation(feedback_relation);
        b
    }

    fn type_id(&mut self, name: &str) -> TypeId {
        match self.type_names.iter().position(|n| n == name) {
            Some(i) => TypeId(i as u32),
            None => {
                self.type_names.push(name.to_owned());
                TypeId(self.type_names.len() as u32 - 1)
            }
        }
    }

    pub fn entity_id(&self, key: &str) -> Option<EntityId> {
        self.key_index.get(key).copied()
    }

    pub fn entity_type_name(&self, id: EntityId) -> &str {
        &self.type_names[self.entity_types[id.index()].0 as usize]
    }

    /// Interns an entity. Re-adding an existing key returns its id; a
    /// conflicting type is reported by [`GraphBuilder::build`].
    pub fn add_entity(&mut self, key: &str, type_name: &str, display_name: &str) -> EntityId {
        let ty = self.type_id(type_name);
        if let Some(&id) = self.key_index.get(key) {
            if self.entity_types[id.index()] != ty {
                self.conflicts.push(format!(
                    "entity `{key}` declared as both `{}` and `{type_name}`",
                    self.type_names[self.entity_types[id.index()].0 as usize]
                ));
            }
            return id;
        }
        let id = EntityId(self.entity_keys.len() as u32);
        self.entity_keys.push(key.to_owned());
        self.entity_names.push(display_name.to_owned());
        self.entity_types.push(ty);
        self.key_index.insert(key.to_owned(), id);
        id
    }

    pub fn relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_index.get(name) {
            return id;
        }
        let id = RelationId(self.relation_names.len() as u32);
        self.relation_names.push(name.to_owned());
        self.relation_surfaces.push(name.to_owned());
        self.relation_index.insert(name.to_owned(), id);
        id
    }

    pub fn set_surface(&mut self, relation: RelationId, surface: &str) {
        self.relation_surfaces[relation.index()] = surface.to_owned();
    }

    pub fn add_triple(&mut self, head: EntityId, relation: &str, tail: EntityId) -> RelationId {
        let r = self.relation(relation);
        self.add_triple_ids(head, r, tail);
        r
    }

    pub fn add_triple_ids(&mut self, head: EntityId, relation: RelationId, tail: EntityId) {
        self.triples.push(Triple {
            head,
            relation,
            tail,
        });
    }

    pub fn build(self) -> Result<KnowledgeGraph> {
        if let Some(c) = self.conflicts.first() {
            return Err(Error::Dataset(c.clone()));
        }
        if self.user_type == self.product_type {
            return Err(Error::Dataset(format!(
                "user and product types must differ (both `{}`)",
                self.user_type
            )));
        }
        let n = self.entity_keys.len();
        let user_type = TypeId(self.type_names.iter().position(|t| *t == self.user_type).unwrap() as u32);
        let product_type = TypeId(self.type_names.iter().position(|t| *t == self.product_type).unwrap() as u32);
        let feedback = self.relation_index[&self.feedback];

        let mut triples = self.triples;
        triples.sort_unstable();
        triples.dedup();
        for t in &triples {
            if t.head.index() >= n || t.tail.index() >= n {
                return Err(Error::Dataset(format!("triple references unknown entity: {t:?}")));
            }
            if t.relation.index() >= self.relation_names.len() {
                return Err(Error::UnknownRelation(t.relation.0));
            }
            if t.head == t.tail {
                return Err(Error::Dataset(format!(
                    "self-loop on `{}`",
                    self.entity_keys[t.head.index()]
                )));
            }
            if t.relation == feedback
                && (self.entity_types[t.head.index()] != user_type
                    || self.entity_types[t.tail.index()] != product_type)
            {
                return Err(Error::Dataset(format!(
                    "feedback triple `{}` {} `{}` must link a user to a product",
                    self.entity_keys[t.head.index()],
                    self.feedback,
                    self.entity_keys[t.tail.index()]
                )));
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        for t in &triples {
            adjacency[t.head.index()].push(Edge {
                relation: t.relation,
                direction: Direction::Forward,
                neighbor: t.tail,
            });
            adjacency[t.tail.index()].push(Edge {
                relation: t.relation,
                direction: Direction::Backward,
                neighbor: t.head,
            });
        }
        for edges in &mut adjacency {
            edges.sort_unstable();
        }
        let triple_set = triples.iter().copied().collect();

        Ok(KnowledgeGraph {
            entity_keys: self.entity_keys,
            entity_names: self.entity_names,
            entity_types: self.entity_types,
            type_names: self.type_names,
            relation_names: self.relation_names,
            relation_surfaces: self.relation_surfaces,
            key_index: self.key_index,
            relation_index: self.relation_index,
            triples,
            triple_set,
            adjacency,
            user_type,
            product_type,
            feedback,
        })
    }
}

/// One step of a reasoning path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub relation: RelationId,
    pub direction: Direction,
    pub entity: EntityId,
}

/// A k-hop walk starting at `origin`.
///
/// The derived ordering compares origin then hops lexicographically and is
/// used as the deterministic path-id tie-break throughout the crate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub origin: EntityId,
    pub hops: Vec<Hop>,
}

/// A single edge of a path, `from -relation-> to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub from: EntityId,
    pub relation: RelationId,
    pub direction: Direction,
    pub to: EntityId,
}

/// The linking interaction, entity chain and recommendation of a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathParts {
    pub linking: PathStep,
    pub chain: Vec<PathStep>,
    pub recommendation: PathStep,
}

impl ReasoningPath {
    pub fn new(origin: EntityId, hops: Vec<Hop>) -> Self {
        ReasoningPath { origin, hops }
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    /// `e_0, e_1, ..., e_k`.
    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        std::iter::once(self.origin).chain(self.hops.iter().map(|h| h.entity))
    }

    pub fn entity_at(&self, i: usize) -> EntityId {
        if i == 0 {
            self.origin
        } else {
            self.hops[i - 1].entity
        }
    }

    pub fn terminal(&self) -> EntityId {
        self.hops.last().map_or(self.origin, |h| h.entity)
    }

    /// `e_1`, the product of the linking interaction.
    pub fn linked_entity(&self) -> Option<EntityId> {
        self.hops.first().map(|h| h.entity)
    }

    /// `e_{k-1}`, the entity shared by the linked and recommended products.
    pub fn shared_entity(&self) -> Option<EntityId> {
        let k = self.hops.len();
        (k >= 1).then(|| self.entity_at(k - 1))
    }

    /// The path type: the relation of the last hop.
    pub fn path_type(&self) -> Option<RelationId> {
        self.hops.last().map(|h| h.relation)
    }

    pub fn step(&self, i: usize) -> PathStep {
        let hop = self.hops[i];
        PathStep {
            from: self.entity_at(i),
            relation: hop.relation,
            direction: hop.direction,
            to: hop.entity,
        }
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        self.entities().any(|x| x == e)
    }

    pub fn contains_relation(&self, relation: RelationId, direction: Direction) -> bool {
        self.hops
            .iter()
            .any(|h| h.relation == relation && h.direction == direction)
    }

    pub fn extended(&self, hop: Hop) -> ReasoningPath {
        let mut hops = Vec::with_capacity(self.hops.len() + 1);
        hops.extend_from_slice(&self.hops);
        hops.push(hop);
        ReasoningPath {
            origin: self.origin,
            hops,
        }
    }

    /// Splits a user-to-product path of at least three hops into its
    /// linking interaction, entity chain and recommendation.
    pub fn parts(&self, graph: &KnowledgeGraph) -> Result<PathParts> {
        let k = self.hops.len();
        if k < 3 {
            return Err(Error::Structure(format!("expected a path of at least 3 hops, got {k}")));
        }
        if !graph.is_user(self.origin) {
            return Err(Error::Structure(format!(
                "origin `{}` is not a user",
                graph.entity_key(self.origin)
            )));
        }
        let linked = self.hops[0].entity;
        if !graph.is_product(linked) {
            return Err(Error::Structure(format!(
                "linked entity `{}` is not a product",
                graph.entity_key(linked)
            )));
        }
        if !graph.is_product(self.terminal()) {
            return Err(Error::Structure(format!(
                "terminal entity `{}` is not a product",
                graph.entity_key(self.terminal())
            )));
        }
        Ok(PathParts {
            linking: self.step(0),
            chain: (1..k - 1).map(|i| self.step(i)).collect(),
            recommendation: self.step(k - 1),
        })
    }
}

/// One logged user-product interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub product: EntityId,
    pub timestamp: i64,
}

/// Per-user interactions, each list sorted by timestamp ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    users: std::collections::BTreeMap<EntityId, Vec<Interaction>>,
}

impl InteractionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, user: EntityId, product: EntityId, timestamp: i64) {
        self.users.entry(user).or_default().push(Interaction { product, timestamp });
    }

    /// Restores per-user chronological order. The sort is stable, so equal
    /// timestamps keep insertion order.
    pub fn sort(&mut self) {
        for items in self.users.values_mut() {
            items.sort_by_key(|i| i.timestamp);
        }
    }

    pub fn from_lists(users: impl IntoIterator<Item = (EntityId, Vec<Interaction>)>) -> Self {
        let mut log = InteractionLog {
            users: users.into_iter().filter(|(_, v)| !v.is_empty()).collect(),
        };
        log.sort();
        log
    }

    pub fn get(&self, user: EntityId) -> &[Interaction] {
        self.users.get(&user).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityId, &Vec<Interaction>)> {
        self.users.iter()
    }

    pub fn users(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.users.keys().copied()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn len(&self) -> usize {
        self.users.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(EntityId, &Interaction) -> bool) {
        for (&u, items) in self.users.iter_mut() {
            items.retain(|i| keep(u, i));
        }
        self.users.retain(|_, v| !v.is_empty());
    }

    pub fn products_of(&self, user: EntityId) -> std::collections::HashSet<EntityId> {
        self.get(user).iter().map(|i| i.product).collect()
    }
}

/// Result of [`chronological_split`].
#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: InteractionLog,
    pub valid: InteractionLog,
    pub test: InteractionLog,
    /// Users with fewer than three interactions, kept entirely in `train`.
    pub flagged: Vec<EntityId>,
}

/// Per user, the oldest `floor(train_frac * m)` interactions go to train,
/// those up to `floor((train_frac + valid_frac) * m)` to validation and the
/// remainder, the most recent ones, to test.
pub fn chronological_split(log: &InteractionLog, train_frac: f64, valid_frac: f64) -> Result<Split> {
    if !(train_frac > 0.0 && valid_frac > 0.0 && train_frac + valid_frac < 1.0) {
        return Err(Error::Config(format!(
            "split fractions must be positive with sum < 1 (got {train_frac}, {valid_frac})"
        )));
    }
    let mut split = Split::default();
    for (&user, items) in log.iter() {
        let m = items.len();
        if m < 3 {
            split.train.users.insert(user, items.clone());
            split.flagged.push(user);
            continue;
        }
        let (n_train, n_valid) = split_sizes(m, train_frac, valid_frac);
        let (train, rest) = items.split_at(n_train);
        let (valid, test) = rest.split_at(n_valid);
        for (dst, part) in [
            (&mut split.train, train),
            (&mut split.valid, valid),
            (&mut split.test, test),
        ] {
            if !part.is_empty() {
                dst.users.insert(user, part.to_vec());
            }
        }
    }
    Ok(split)
}

fn split_sizes(m: usize, train_frac: f64, valid_frac: f64) -> (usize, usize) {
    // A small epsilon keeps exact products such as 0.7 * 10 from flooring to 6.
    let floor = |x: f64| (x + 1e-9).floor() as usize;
    let n_train = floor(train_frac * m as f64).min(m);
    let n_head = floor((train_frac + valid_frac) * m as f64).clamp(n_train, m);
    (n_train, n_head - n_train)
}
