//! Template explanations for reasoning paths.
//!
//! A template is plain text with slots `{e_k}`, `{r_1}`, `{e_1}`, `{r_k}`
//! and `{e_k-1}`, filled from the recommended product, the linking
//! relation and product, the path-type relation and the shared entity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, ReasoningPath, RelationId};

pub const DEFAULT_TEMPLATE: &str = "{e_k} is recommended to you because you {r_1} {e_1} also {r_k} by {e_k-1}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Recommended,
    LinkingRelation,
    Linked,
    TypeRelation,
    Shared,
}

impl Slot {
    fn parse(name: &str) -> Option<Slot> {
        Some(match name {
            "e_k" => Slot::Recommended,
            "r_1" => Slot::LinkingRelation,
            "e_1" => Slot::Linked,
            "r_k" => Slot::TypeRelation,
            "e_k-1" => Slot::Shared,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ExplanationTemplate {
    source: String,
    pieces: Vec<Piece>,
}

impl ExplanationTemplate {
    pub fn parse(source: &str) -> Result<Self> {
        let mut pieces = Vec::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_owned()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| Error::Config(format!("unclosed slot in template `{source}`")))?;
            let name = &rest[open + 1..open + close];
            let slot = Slot::parse(name).ok_or_else(|| Error::Config(format!("unknown template slot `{{{name}}}`")))?;
            pieces.push(Piece::Slot(slot));
            rest = &rest[open + close + 1..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_owned()));
        }
        Ok(ExplanationTemplate {
            source: source.to_owned(),
            pieces,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(*s),
            Piece::Text(_) => None,
        })
    }
}

impl Default for ExplanationTemplate {
    fn default() -> Self {
        ExplanationTemplate::parse(DEFAULT_TEMPLATE).expect("default template parses")
    }
}

impl TryFrom<String> for ExplanationTemplate {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        ExplanationTemplate::parse(&s)
    }
}

impl From<ExplanationTemplate> for String {
    fn from(t: ExplanationTemplate) -> String {
        t.source
    }
}

/// Display names for entities and verb phrases for relations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceForms {
    pub entities: HashMap<EntityId, String>,
    pub relations: HashMap<RelationId, String>,
}

impl SurfaceForms {
    /// Entity display names and relation surfaces of `graph`; empty ones
    /// are left out.
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let entities = graph
            .entities()
            .filter(|&e| !graph.entity_name(e).is_empty())
            .map(|e| (e, graph.entity_name(e).to_owned()))
            .collect();
        let relations = graph
            .relations()
            .filter(|&r| !graph.relation_surface(r).is_empty())
            .map(|r| (r, graph.relation_surface(r).to_owned()))
            .collect();
        SurfaceForms { entities, relations }
    }

    fn entity(&self, e: EntityId) -> Result<&str> {
        self.entities
            .get(&e)
            .map(String::as_str)
            .ok_or_else(|| Error::MissingSurfaceForm(format!("entity {e}")))
    }

    fn relation(&self, r: RelationId) -> Result<&str> {
        self.relations
            .get(&r)
            .map(String::as_str)
            .ok_or_else(|| Error::MissingSurfaceForm(format!("relation {r}")))
    }
}

/// Fills `template` from `path`, which needs at least three hops.
pub fn render(path: &ReasoningPath, template: &ExplanationTemplate, names: &SurfaceForms) -> Result<String> {
    let k = path.len();
    if k < 3 {
        return Err(Error::Structure(format!("explanations need paths of at least 3 hops, got {k}")));
    }
    let mut out = String::new();
    for piece in &template.pieces {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(slot) => out.push_str(match slot {
                Slot::Recommended => names.entity(path.terminal())?,
                Slot::LinkingRelation => names.relation(path.hops[0].relation)?,
                Slot::Linked => names.entity(path.hops[0].entity)?,
                Slot::TypeRelation => names.relation(path.hops[k - 1].relation)?,
                Slot::Shared => names.entity(path.entity_at(k - 1))?,
            }),
        }
    }
    Ok(out)
}
