//! TSV ingestion and export.
//!
//! Formats (UTF-8, tab separated, one record per line, blank lines skipped):
//!
//! - entities: `entity_id  type_name  display_name`
//! - knowledge graph: `head_id  relation_name  tail_id`
//! - relation surface forms (optional): `relation_name  surface_form`
//! - interactions: `user_id  product_id  timestamp`

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, GraphBuilder, InteractionLog, KnowledgeGraph};

pub const ENTITIES_FILE: &str = "entities.tsv";
pub const KG_FILE: &str = "kg.tsv";
pub const RELATIONS_FILE: &str = "relations.tsv";
pub const INTERACTIONS_FILE: &str = "interactions.tsv";

/// Locations of the raw dataset files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub interactions: PathBuf,
    pub kg: PathBuf,
    pub entities: PathBuf,
    #[serde(default)]
    pub relations: Option<PathBuf>,
}

impl DatasetFiles {
    /// The conventional file names inside `dir`; the relation file is used
    /// only if present.
    pub fn in_dir(dir: &Path) -> Self {
        let relations = dir.join(RELATIONS_FILE);
        DatasetFiles {
            interactions: dir.join(INTERACTIONS_FILE),
            kg: dir.join(KG_FILE),
            entities: dir.join(ENTITIES_FILE),
            relations: relations.exists().then_some(relations),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub feedback_relation: String,
    pub user_type: String,
    pub product_type: String,
    pub min_relation_count: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            feedback_relation: "interacted".into(),
            user_type: "user".into(),
            product_type: "product".into(),
            min_relation_count: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: KnowledgeGraph,
    pub log: InteractionLog,
}

/// Summary of what [`load_dataset`] discarded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub dropped_interactions: usize,
    pub dropped_relations: Vec<String>,
    pub dropped_triples: usize,
    pub duplicate_triples: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn records<'a>(path: &'a Path, text: &'a str, columns: usize) -> impl Iterator<Item = Result<(usize, Vec<&'a str>)>> + 'a {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(move |(i, line)| {
            let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
            if fields.len() != columns {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {columns} tab-separated columns, found {}", fields.len()),
                ));
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err(Error::parse(path, i + 1, "empty column"));
            }
            Ok((i + 1, fields))
        })
}

/// Loads and filters a dataset.
///
/// Products that are not declared as product entities are dropped together
/// with their interactions, and non-feedback relations occurring fewer than
/// `min_relation_count` times are dropped with their triples. Users that
/// appear only in the interaction file are added as user entities.
pub fn load_dataset(files: &DatasetFiles, opts: &LoadOptions) -> Result<(Dataset, LoadReport)> {
    let mut b = GraphBuilder::new(&opts.user_type, &opts.product_type, &opts.feedback_relation);
    let mut report = LoadReport::default();

    let text = read(&files.entities)?;
    for rec in records(&files.entities, &text, 3) {
        let (line, f) = rec?;
        if let Some(id) = b.entity_id(f[0]) {
            if b.entity_type_name(id) != f[1] {
                return Err(Error::parse(
                    &files.entities,
                    line,
                    format!("entity `{}` redeclared with type `{}`", f[0], f[1]),
                ));
            }
        }
        b.add_entity(f[0], f[1], f[2]);
    }

    if let Some(path) = &files.relations {
        let text = read(path)?;
        for rec in records(path, &text, 2) {
            let (_, f) = rec?;
            let r = b.relation(f[0]);
            b.set_surface(r, f[1]);
        }
    }

    let text = read(&files.kg)?;
    let mut raw_triples = 0usize;
    for rec in records(&files.kg, &text, 3) {
        let (line, f) = rec?;
        let head = b
            .entity_id(f[0])
            .ok_or_else(|| Error::parse(&files.kg, line, format!("unknown head entity `{}`", f[0])))?;
        let tail = b
            .entity_id(f[2])
            .ok_or_else(|| Error::parse(&files.kg, line, format!("unknown tail entity `{}`", f[2])))?;
        if head == tail {
            return Err(Error::parse(&files.kg, line, "self-loop"));
        }
        b.add_triple(head, f[1], tail);
        raw_triples += 1;
    }

    let text = read(&files.interactions)?;
    let mut pending = Vec::new();
    for rec in records(&files.interactions, &text, 3) {
        let (line, f) = rec?;
        let timestamp: i64 = f[2]
            .parse()
            .map_err(|_| Error::parse(&files.interactions, line, format!("bad timestamp `{}`", f[2])))?;
        let product = match b.entity_id(f[1]) {
            Some(p) if b.entity_type_name(p) == opts.product_type => p,
            Some(_) => {
                return Err(Error::parse(
                    &files.interactions,
                    line,
                    format!("`{}` is not a product", f[1]),
                ))
            }
            None => {
                report.dropped_interactions += 1;
                continue;
            }
        };
        let user = match b.entity_id(f[0]) {
            Some(u) if b.entity_type_name(u) == opts.user_type => u,
            Some(_) => {
                return Err(Error::parse(
                    &files.interactions,
                    line,
                    format!("`{}` is not a user", f[0]),
                ))
            }
            None => b.add_entity(f[0], &opts.user_type, f[0]),
        };
        pending.push((user, product, timestamp));
    }

    let unfiltered = b.build()?;
    report.duplicate_triples = raw_triples - unfiltered.triples().len();
    let counts = unfiltered.relation_counts();
    report.dropped_relations = unfiltered
        .relations()
        .filter(|&r| r != unfiltered.feedback_relation() && counts[r.index()] < opts.min_relation_count)
        .map(|r| unfiltered.relation_name(r).to_owned())
        .collect();
    let graph = unfiltered.filter_relations(opts.min_relation_count)?;
    report.dropped_triples = unfiltered.triples().len() - graph.triples().len();

    let mut log = InteractionLog::new();
    for (u, p, t) in pending {
        log.push(u, p, t);
    }
    log.sort();

    if log.is_empty() {
        return Err(Error::Dataset("no interactions left after filtering".into()));
    }
    if graph.triples().is_empty() {
        return Err(Error::Dataset("no triples left after filtering".into()));
    }
    Ok((Dataset { graph, log }, report))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes an interaction log keyed by entity ids.
pub fn write_interactions(path: &Path, graph: &KnowledgeGraph, log: &InteractionLog) -> Result<()> {
    let mut w = create(path)?;
    for (&u, items) in log.iter() {
        for it in items {
            writeln!(w, "{}\t{}\t{}", graph.entity_key(u), graph.entity_key(it.product), it.timestamp)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    finish(path, w)
}

/// Reads an interaction log against an already loaded graph. Unknown
/// products are skipped, unknown users are an error.
pub fn read_interactions(path: &Path, graph: &KnowledgeGraph) -> Result<InteractionLog> {
    let text = read(path)?;
    let mut log = InteractionLog::new();
    for rec in records(path, &text, 3) {
        let (line, f) = rec?;
        let user = graph
            .entity_by_key(f[0])
            .filter(|&u| graph.is_user(u))
            .ok_or_else(|| Error::parse(path, line, format!("unknown user `{}`", f[0])))?;
        let Some(product) = graph.entity_by_key(f[1]).filter(|&p| graph.is_product(p)) else {
            continue;
        };
        let timestamp = f[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad timestamp `{}`", f[2])))?;
        log.push(user, product, timestamp);
    }
    log.sort();
    Ok(log)
}

/// Writes entities, triples, relation surface forms and the interaction log
/// into `dir` using the conventional file names.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetFiles> {
    let g = &dataset.graph;
    let files = DatasetFiles {
        interactions: dir.join(INTERACTIONS_FILE),
        kg: dir.join(KG_FILE),
        entities: dir.join(ENTITIES_FILE),
        relations: Some(dir.join(RELATIONS_FILE)),
    };

    let mut w = create(&files.entities)?;
    for e in g.entities() {
        writeln!(w, "{}\t{}\t{}", g.entity_key(e), g.type_name(g.entity_type(e)), g.entity_name(e))
            .map_err(|err| Error::io(&files.entities, err))?;
    }
    finish(&files.entities, w)?;

    let path = files.relations.as_ref().unwrap();
    let mut w = create(path)?;
    for r in g.relations() {
        writeln!(w, "{}\t{}", g.relation_name(r), g.relation_surface(r)).map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)?;

    let mut w = create(&files.kg)?;
    for t in g.triples() {
        writeln!(
            w,
            "{}\t{}\t{}",
            g.entity_key(t.head),
            g.relation_name(t.relation),
            g.entity_key(t.tail)
        )
        .map_err(|e| Error::io(&files.kg, e))?;
    }
    finish(&files.kg, w)?;

    write_interactions(&files.interactions, g, &dataset.log)?;
    Ok(files)
}

/// Products the user interacted with in `log`.
pub fn seen_products(log: &InteractionLog, user: EntityId) -> HashSet<EntityId> {
    log.products_of(user)
}
