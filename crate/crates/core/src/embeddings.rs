//! Translational entity/relation embeddings.
//!
//! A triple is scored as `<e_h + r, e_t> + b_t` and trained with a margin
//! ranking loss against tail-corrupted negatives. Relevance between two
//! entities is the dot product of their vectors plus the tail bias.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};

const CHECKPOINT_MAGIC: &str = "# pathrec-embeddings v1";
const MAX_NEGATIVE_DRAWS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub negatives: usize,
    pub margin: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 64,
            epochs: 20,
            lr: 0.01,
            negatives: 1,
            margin: 1.0,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
    bias: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl EmbeddingTable {
    /// Uniform initialisation in `[-6/sqrt(d), 6/sqrt(d)]` with zero biases.
    pub fn init(num_entities: usize, num_relations: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 6.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-bound..bound)).collect::<Vec<_>>();
        let entities = draw(num_entities * dim);
        let relations = draw(num_relations * dim);
        EmbeddingTable {
            dim,
            entities,
            relations,
            bias: vec![0.0; num_entities],
        }
    }

    /// Builds a table from explicit rows; mostly useful in tests.
    pub fn from_parts(dim: usize, entities: Vec<f64>, relations: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if dim == 0
            || !entities.len().is_multiple_of(dim)
            || !relations.len().is_multiple_of(dim)
            || entities.len() / dim != bias.len()
        {
            return Err(Error::Config("inconsistent embedding shapes".into()));
        }
        if entities.iter().chain(&relations).chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Config("embedding values must be finite".into()));
        }
        Ok(EmbeddingTable {
            dim,
            entities,
            relations,
            bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.bias.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.dim
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        &self.entities[e.index() * self.dim..(e.index() + 1) * self.dim]
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        &self.relations[r.index() * self.dim..(r.index() + 1) * self.dim]
    }

    pub fn bias(&self, e: EntityId) -> f64 {
        self.bias[e.index()]
    }

    /// Flat entity rows, row-major `E x d`.
    pub fn entities_mut(&mut self) -> &mut [f64] {
        &mut self.entities
    }

    /// Flat relation rows, row-major `R x d`.
    pub fn relations_mut(&mut self) -> &mut [f64] {
        &mut self.relations
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn check(&self, e: EntityId) -> Result<()> {
        if e.index() < self.num_entities() {
            Ok(())
        } else {
            Err(Error::UnknownEntity(e.0))
        }
    }

    /// `<e_head, e_tail> + b_tail`.
    pub fn relevance(&self, head: EntityId, tail: EntityId) -> Result<f64> {
        self.check(head)?;
        self.check(tail)?;
        Ok(self.relevance_unchecked(head, tail))
    }

    pub(crate) fn relevance_unchecked(&self, head: EntityId, tail: EntityId) -> f64 {
        dot(self.entity(head), self.entity(tail)) + self.bias(tail)
    }

    /// `<e_h + r, e_t> + b_t`.
    pub fn triple_score(&self, head: EntityId, relation: RelationId, tail: EntityId) -> f64 {
        let (h, r, t) = (self.entity(head), self.relation(relation), self.entity(tail));
        h.iter().zip(r).zip(t).map(|((h, r), t)| (h + r) * t).sum::<f64>() + self.bias(tail)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let err = |e| Error::io(path, e);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = BufWriter::new(fs::File::create(path).map_err(err)?);
        writeln!(w, "{CHECKPOINT_MAGIC}").map_err(err)?;
        writeln!(w, "{}\t{}\t{}", self.dim, self.num_entities(), self.num_relations()).map_err(err)?;
        let row = |w: &mut BufWriter<fs::File>, values: &[f64]| -> std::io::Result<()> {
            let line: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join("\t"))
        };
        for chunk in self.entities.chunks(self.dim) {
            row(&mut w, chunk).map_err(err)?;
        }
        for chunk in self.relations.chunks(self.dim) {
            row(&mut w, chunk).map_err(err)?;
        }
        row(&mut w, &self.bias).map_err(err)?;
        w.flush().map_err(err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::parse(path, line + 1, msg.to_owned());
        match lines.next() {
            Some((_, l)) if l == CHECKPOINT_MAGIC => {}
            _ => return Err(bad(0, "not an embedding checkpoint")),
        }
        let (i, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let dims: Vec<usize> = header
            .split('\t')
            .map(|s| s.parse().map_err(|_| bad(i, "bad header")))
            .collect::<Result<_>>()?;
        let [dim, n_ent, n_rel] = dims[..] else {
            return Err(bad(i, "header must hold dim, entities, relations"));
        };
        let mut read_row = |width: usize| -> Result<Vec<f64>> {
            let (i, l) = lines.next().ok_or_else(|| bad(usize::MAX - 1, "truncated checkpoint"))?;
            let row: Vec<f64> = if width == 0 {
                Vec::new()
            } else {
                l.split('\t')
                    .map(|s| s.parse().map_err(|_| bad(i, "bad number")))
                    .collect::<Result<_>>()?
            };
            if row.len() != width {
                return Err(bad(i, "wrong row width"));
            }
            Ok(row)
        };
        let mut entities = Vec::with_capacity(n_ent * dim);
        for _ in 0..n_ent {
            entities.extend(read_row(dim)?);
        }
        let mut relations = Vec::with_capacity(n_rel * dim);
        for _ in 0..n_rel {
            relations.extend(read_row(dim)?);
        }
        let bias = read_row(n_ent)?;
        EmbeddingTable::from_parts(dim, entities, relations, bias)
    }
}

/// One positive triple paired with a corrupted tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingPair {
    pub positive: Triple,
    pub negative_tail: EntityId,
}

/// Dense gradient with the same layout as [`EmbeddingTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Margin ranking loss with L2 regularisation on the touched rows:
///
/// `max(0, margin - s(h, r, t) + s(h, r, t')) + l2/2 (|h|^2 + |r|^2 + |t|^2 + |t'|^2)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginObjective {
    pub margin: f64,
    pub l2: f64,
}

struct PairGrad {
    head: Vec<f64>,
    relation: Vec<f64>,
    tail: Vec<f64>,
    negative: Vec<f64>,
    tail_bias: f64,
    negative_bias: f64,
}

impl MarginObjective {
    fn pair_loss(&self, t: &EmbeddingTable, p: &TrainingPair) -> f64 {
        let Triple { head, relation, tail } = p.positive;
        let neg = p.negative_tail;
        let hinge = (self.margin - t.triple_score(head, relation, tail) + t.triple_score(head, relation, neg)).max(0.0);
        let sq = |v: &[f64]| dot(v, v);
        hinge
            + 0.5 * self.l2 * (sq(t.entity(head)) + sq(t.relation(relation)) + sq(t.entity(tail)) + sq(t.entity(neg)))
    }

    fn pair_grad(&self, t: &EmbeddingTable, p: &TrainingPair) -> PairGrad {
        let Triple { head, relation, tail } = p.positive;
        let neg = p.negative_tail;
        let (h, r, pos, ng) = (t.entity(head), t.relation(relation), t.entity(tail), t.entity(neg));
        let active = self.margin - t.triple_score(head, relation, tail) + t.triple_score(head, relation, neg) > 0.0;
        let a = if active { 1.0 } else { 0.0 };
        let d = t.dim();
        let mut g = PairGrad {
            head: vec![0.0; d],
            relation: vec![0.0; d],
            tail: vec![0.0; d],
            negative: vec![0.0; d],
            tail_bias: -a,
            negative_bias: a,
        };
        for i in 0..d {
            // d/dh and d/dr of -<h+r, t> + <h+r, t'> are both t' - t
            let diff = ng[i] - pos[i];
            g.head[i] = a * diff + self.l2 * h[i];
            g.relation[i] = a * diff + self.l2 * r[i];
            g.tail[i] = -a * (h[i] + r[i]) + self.l2 * pos[i];
            g.negative[i] = a * (h[i] + r[i]) + self.l2 * ng[i];
        }
        g
    }

    pub fn loss(&self, table: &EmbeddingTable, pairs: &[TrainingPair]) -> f64 {
        pairs.iter().map(|p| self.pair_loss(table, p)).sum()
    }

    pub fn gradient(&self, table: &EmbeddingTable, pairs: &[TrainingPair]) -> Gradient {
        let d = table.dim();
        let mut g = Gradient {
            entities: vec![0.0; table.entities.len()],
            relations: vec![0.0; table.relations.len()],
            bias: vec![0.0; table.bias.len()],
        };
        for p in pairs {
            let pg = self.pair_grad(table, p);
            let add = |dst: &mut [f64], row: usize, src: &[f64]| {
                for (x, y) in dst[row * d..(row + 1) * d].iter_mut().zip(src) {
                    *x += y;
                }
            };
            add(&mut g.entities, p.positive.head.index(), &pg.head);
            add(&mut g.relations, p.positive.relation.index(), &pg.relation);
            add(&mut g.entities, p.positive.tail.index(), &pg.tail);
            add(&mut g.entities, p.negative_tail.index(), &pg.negative);
            g.bias[p.positive.tail.index()] += pg.tail_bias;
            g.bias[p.negative_tail.index()] += pg.negative_bias;
        }
        g
    }

    /// One SGD step on a single pair. All partial derivatives are taken at
    /// the current parameters before any row is updated.
    fn step(&self, t: &mut EmbeddingTable, p: &TrainingPair, lr: f64) {
        let g = self.pair_grad(t, p);
        let d = t.dim;
        let apply = |buf: &mut Vec<f64>, row: usize, grad: &[f64]| {
            for (x, y) in buf[row * d..(row + 1) * d].iter_mut().zip(grad) {
                *x -= lr * y;
            }
        };
        apply(&mut t.entities, p.positive.head.index(), &g.head);
        apply(&mut t.relations, p.positive.relation.index(), &g.relation);
        apply(&mut t.entities, p.positive.tail.index(), &g.tail);
        apply(&mut t.entities, p.negative_tail.index(), &g.negative);
        t.bias[p.positive.tail.index()] -= lr * g.tail_bias;
        t.bias[p.negative_tail.index()] -= lr * g.negative_bias;
    }
}

/// Draws a tail of the same type as `positive.tail` such that the corrupted
/// triple is not in the graph. Gives up after a bounded number of draws.
pub fn corrupt_tail(
    graph: &KnowledgeGraph,
    candidates: &[EntityId],
    positive: &Triple,
    rng: &mut impl Rng,
) -> Option<EntityId> {
    if candidates.len() < 2 {
        return None;
    }
    (0..MAX_NEGATIVE_DRAWS)
        .map(|_| *candidates.choose(rng).unwrap())
        .find(|&e| e != positive.tail && e != positive.head && !graph.contains_triple(positive.head, positive.relation, e))
}

/// Trains embeddings for every entity and relation of `graph`.
pub fn train_embeddings(graph: &KnowledgeGraph, cfg: &EmbeddingConfig) -> Result<EmbeddingTable> {
    if cfg.dim < 2 {
        return Err(Error::Config(format!("embedding dimension must be >= 2, got {}", cfg.dim)));
    }
    if graph.triples().is_empty() {
        return Err(Error::EmptyInput("train_embeddings"));
    }
    let mut table = EmbeddingTable::init(graph.num_entities(), graph.num_relations(), cfg.dim, cfg.seed);
    let objective = MarginObjective {
        margin: cfg.margin,
        l2: cfg.l2,
    };
    let mut by_type: Vec<Vec<EntityId>> = vec![Vec::new(); graph.num_types()];
    for e in graph.entities() {
        by_type[graph.entity_type(e).0 as usize].push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<Triple> = graph.triples().to_vec();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for pos in &order {
            let pool = &by_type[graph.entity_type(pos.tail).0 as usize];
            for _ in 0..cfg.negatives {
                if let Some(neg) = corrupt_tail(graph, pool, pos, &mut rng) {
                    let pair = TrainingPair {
                        positive: *pos,
                        negative_tail: neg,
                    };
                    objective.step(&mut table, &pair, cfg.lr);
                }
            }
        }
    }
    if table.entities.iter().chain(&table.relations).chain(&table.bias).any(|v| !v.is_finite()) {
        return Err(Error::Config("embedding training diverged; lower the learning rate".into()));
    }
    Ok(table)
}
