//! JSON-lines recommendation files.
//!
//! One record per user. Entities and relations are written by their
//! dataset keys and names so the files are readable without the graph:
//!
//! ```json
//! {"user":"u3","truncated":false,
//!  "recommendations":[{"rank":1,"product":"p9","prob":0.21,"relevance":3.4,
//!    "path":{"entities":["u3","p2","brand4","p9"],
//!            "relations":["interacted","produced_by","produced_by"],
//!            "directions":["forward","backward","forward"]},
//!    "explanation":"product_9 is recommended to you because ..."}],
//!  "candidates":[...]}
//! ```
//!
//! `candidates` holds every sampled path so the list can be re-ranked
//! later; `explanation` is present once the file went through `explain`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::UserRun;
use crate::graph::{Direction, EntityId, Hop, KnowledgeGraph, ReasoningPath};
use crate::sampler::{Candidate, CandidateSet, RankedList};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub directions: Vec<Direction>,
}

impl PathRecord {
    pub fn from_path(graph: &KnowledgeGraph, path: &ReasoningPath) -> Self {
        PathRecord {
            entities: path.entities().map(|e| graph.entity_key(e).to_owned()).collect(),
            relations: path.hops.iter().map(|h| graph.relation_name(h.relation).to_owned()).collect(),
            directions: path.hops.iter().map(|h| h.direction).collect(),
        }
    }

    pub fn to_path(&self, graph: &KnowledgeGraph) -> Result<ReasoningPath> {
        let k = self.relations.len();
        if self.entities.len() != k + 1 || self.directions.len() != k {
            return Err(Error::Structure(format!(
                "path record with {} entities, {} relations and {} directions",
                self.entities.len(),
                k,
                self.directions.len()
            )));
        }
        let entity = |key: &str| {
            graph
                .entity_by_key(key)
                .ok_or_else(|| Error::Structure(format!("unknown entity `{key}` in path record")))
        };
        let mut hops = Vec::with_capacity(k);
        for i in 0..k {
            let relation = graph
                .relation_by_name(&self.relations[i])
                .ok_or_else(|| Error::Structure(format!("unknown relation `{}` in path record", self.relations[i])))?;
            hops.push(Hop {
                relation,
                direction: self.directions[i],
                entity: entity(&self.entities[i + 1])?,
            });
        }
        Ok(ReasoningPath::new(entity(&self.entities[0])?, hops))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub product: String,
    pub prob: f64,
    pub relevance: f64,
    pub path: PathRecord,
}

impl CandidateRecord {
    pub fn from_candidate(graph: &KnowledgeGraph, c: &Candidate) -> Self {
        CandidateRecord {
            product: graph.entity_key(c.product()).to_owned(),
            prob: c.prob,
            relevance: c.relevance,
            path: PathRecord::from_path(graph, &c.path),
        }
    }

    pub fn to_candidate(&self, graph: &KnowledgeGraph) -> Result<Candidate> {
        let path = self.path.to_path(graph)?;
        if graph.entity_key(path.terminal()) != self.product {
            return Err(Error::Structure(format!(
                "record for `{}` has a path ending at `{}`",
                self.product,
                graph.entity_key(path.terminal())
            )));
        }
        Ok(Candidate {
            path,
            prob: self.prob,
            relevance: self.relevance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub rank: usize,
    #[serde(flatten)]
    pub item: CandidateRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user: String,
    pub truncated: bool,
    pub recommendations: Vec<ItemRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateRecord>,
}

impl UserRecord {
    pub fn new(graph: &KnowledgeGraph, list: &RankedList, cands: &CandidateSet) -> Self {
        UserRecord {
            user: graph.entity_key(cands.user).to_owned(),
            truncated: list.truncated,
            recommendations: list
                .items
                .iter()
                .enumerate()
                .map(|(i, c)| ItemRecord {
                    rank: i + 1,
                    item: CandidateRecord::from_candidate(graph, c),
                    explanation: None,
                })
                .collect(),
            candidates: cands
                .candidates
                .iter()
                .map(|c| CandidateRecord::from_candidate(graph, c))
                .collect(),
        }
    }

    pub fn user_id(&self, graph: &KnowledgeGraph) -> Result<EntityId> {
        graph
            .entity_by_key(&self.user)
            .ok_or_else(|| Error::Structure(format!("unknown user `{}`", self.user)))
    }

    pub fn candidate_set(&self, graph: &KnowledgeGraph) -> Result<CandidateSet> {
        Ok(CandidateSet {
            user: self.user_id(graph)?,
            candidates: self
                .candidates
                .iter()
                .map(|c| c.to_candidate(graph))
                .collect::<Result<_>>()?,
        })
    }

    pub fn ranked_list(&self, graph: &KnowledgeGraph) -> Result<RankedList> {
        Ok(RankedList {
            items: self
                .recommendations
                .iter()
                .map(|r| r.item.to_candidate(graph))
                .collect::<Result<_>>()?,
            truncated: self.truncated,
        })
    }

    /// Replaces the recommendations, keeping the candidates.
    pub fn with_list(&self, graph: &KnowledgeGraph, list: &RankedList) -> Self {
        let cands = CandidateSet {
            user: EntityId(0),
            candidates: Vec::new(),
        };
        let mut out = UserRecord::new(graph, list, &cands);
        out.user = self.user.clone();
        out.candidates = self.candidates.clone();
        out
    }

    pub fn user_run(&self, graph: &KnowledgeGraph) -> Result<UserRun> {
        let list = self.ranked_list(graph)?;
        Ok(UserRun {
            user: self.user_id(graph)?,
            products: list.products(),
            paths: list.paths(),
        })
    }
}

pub fn write_jsonl(path: &Path, records: &[UserRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<UserRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    #[test]
    fn path_round_trip_and_errors() {
        let mut b = GraphBuilder::new("user", "product", "bought");
        let u = b.add_entity("u", "user", "U");
        let p = b.add_entity("p", "product", "P");
        let q = b.add_entity("q", "product", "Q");
        let x = b.add_entity("x", "brand", "X");
        let bought = b.add_triple(u, "bought", p);
        let made = b.add_triple(x, "made", p);
        b.add_triple(x, "made", q);
        let g = b.build().unwrap();
        let path = ReasoningPath::new(
            u,
            vec![
                Hop { relation: bought, direction: Direction::Forward, entity: p },
                Hop { relation: made, direction: Direction::Backward, entity: x },
                Hop { relation: made, direction: Direction::Forward, entity: q },
            ],
        );
        let rec = PathRecord::from_path(&g, &path);
        assert_eq!(rec.entities, vec!["u", "p", "x", "q"]);
        assert_eq!(rec.to_path(&g).unwrap(), path);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"backward\""));

        let mut bad = rec.clone();
        bad.entities[2] = "nope".into();
        assert!(bad.to_path(&g).is_err());
        let mut bad = rec.clone();
        bad.relations.pop();
        assert!(bad.to_path(&g).is_err());

        let cand = Candidate { path: path.clone(), prob: 0.25, relevance: 1.5 };
        let set = CandidateSet { user: u, candidates: vec![cand.clone()] };
        let list = RankedList { items: vec![cand], truncated: true };
        let user = UserRecord::new(&g, &list, &set);
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("r.jsonl");
        write_jsonl(&file, std::slice::from_ref(&user)).unwrap();
        let back = read_jsonl(&file).unwrap();
        assert_eq!(back, vec![user.clone()]);
        assert_eq!(back[0].candidate_set(&g).unwrap(), set);
        assert_eq!(back[0].ranked_list(&g).unwrap(), list);
        assert_eq!(back[0].user_run(&g).unwrap().products, vec![q]);
        fs::write(&file, "{\"user\": 3}\n").unwrap();
        assert!(matches!(read_jsonl(&file), Err(Error::Parse { line: 1, .. })));
    }
}
