//! Synthetic datasets with clustered preferences, skewed attribute
//! popularity, imbalanced relations and mixed recency profiles.
//!
//! Users and products are assigned to latent clusters. Every attribute
//! entity belongs to one cluster too; products mostly link to attributes
//! of their own cluster and users mostly interact with products of theirs,
//! so held-out interactions are predictable from the graph. Within a
//! cluster, attributes and products are drawn with Zipf weights.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ENTITIES_FILE, INTERACTIONS_FILE, KG_FILE, RELATIONS_FILE};
use crate::error::{Error, Result};

/// An attribute relation: triples run `attribute -> product`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub name: String,
    /// Verb phrase for explanations; defaults to the name.
    #[serde(default)]
    pub surface: Option<String>,
    pub entity_type: String,
    pub entities: usize,
    /// Mean number of links per product; the integer part is always drawn,
    /// the fraction with that probability.
    pub links: f64,
}

/// Time between consecutive interactions of a user, drawn per user from a
/// weighted mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecencyProfile {
    pub mean_gap_secs: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub users: usize,
    pub products: usize,
    pub clusters: usize,
    pub min_interactions: usize,
    pub max_interactions: usize,
    /// Probability that an interaction or attribute link stays in-cluster.
    pub cohesion: f64,
    /// Zipf exponent of attribute and product popularity.
    pub popularity_skew: f64,
    pub feedback_relation: String,
    pub feedback_surface: String,
    pub relations: Vec<RelationSpec>,
    pub recency: Vec<RecencyProfile>,
    /// Earliest timestamp, epoch seconds.
    pub start: i64,
}

const DAY: f64 = 86_400.0;

impl Default for SynthSpec {
    fn default() -> Self {
        let rel = |name: &str, surface: &str, ty: &str, entities, links| RelationSpec {
            name: name.into(),
            surface: Some(surface.into()),
            entity_type: ty.into(),
            entities,
            links,
        };
        SynthSpec {
            seed: 0,
            users: 240,
            products: 400,
            clusters: 8,
            min_interactions: 12,
            max_interactions: 30,
            cohesion: 0.85,
            popularity_skew: 1.0,
            feedback_relation: "interacted".into(),
            feedback_surface: "purchased".into(),
            relations: vec![
                rel("described_as", "described", "feature", 80, 3.0),
                rel("produced_by", "produced", "brand", 40, 1.0),
                rel("listed_in", "listed", "category", 16, 1.0),
                rel("designed_by", "designed", "designer", 30, 0.5),
                rel("made_of", "made", "material", 12, 0.6),
                rel("sold_by", "sold", "seller", 20, 0.4),
                rel("awarded", "awarded", "award", 8, 0.15),
            ],
            recency: vec![
                RecencyProfile { mean_gap_secs: 0.05 * DAY, weight: 1.0 },
                RecencyProfile { mean_gap_secs: 2.0 * DAY, weight: 2.0 },
                RecencyProfile { mean_gap_secs: 20.0 * DAY, weight: 2.0 },
                RecencyProfile { mean_gap_secs: 90.0 * DAY, weight: 1.0 },
            ],
            start: 1_500_000_000,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.users == 0 || self.products < 2 || self.clusters == 0 {
            return fail("needs users, at least two products and a cluster");
        }
        if self.min_interactions == 0 || self.min_interactions > self.max_interactions {
            return fail("interaction bounds must satisfy 1 <= min <= max");
        }
        if self.max_interactions > self.products {
            return fail("max_interactions exceeds the number of products");
        }
        if !(0.0..=1.0).contains(&self.cohesion) {
            return fail("cohesion must lie in [0, 1]");
        }
        if !(self.popularity_skew >= 0.0 && self.popularity_skew.is_finite()) {
            return fail("popularity_skew must be finite and >= 0");
        }
        if self.relations.is_empty() {
            return fail("needs at least one relation");
        }
        let mut names = HashSet::new();
        for r in &self.relations {
            if r.entities == 0 || !(r.links >= 0.0 && r.links.is_finite()) {
                return fail(&format!("relation `{}` needs entities and non-negative links", r.name));
            }
            if !names.insert(r.name.as_str()) || r.name == self.feedback_relation {
                return fail(&format!("duplicate relation `{}`", r.name));
            }
            if r.entity_type == "user" || r.entity_type == "product" {
                return fail("attribute types must differ from user and product");
            }
        }
        if self.recency.is_empty()
            || self
                .recency
                .iter()
                .any(|p| !(p.weight > 0.0 && p.mean_gap_secs >= 0.0 && p.mean_gap_secs.is_finite()))
        {
            return fail("recency profiles need positive weights and finite gaps");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// The generated dataset as rows ready for the TSV files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthData {
    /// `(id, type, display name)`.
    pub entities: Vec<(String, String, String)>,
    /// `(head, relation, tail)`.
    pub triples: Vec<(String, String, String)>,
    /// `(relation, surface)`.
    pub relations: Vec<(String, String)>,
    /// `(user, product, timestamp)`.
    pub interactions: Vec<(String, String, i64)>,
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| (r as f64).powf(-s))).expect("positive weights")
}

/// Members of each cluster, assigned round-robin.
fn by_cluster(n: usize, clusters: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); clusters];
    for i in 0..n {
        out[i % clusters].push(i);
    }
    out
}

/// Draws an index: in-cluster with probability `cohesion`, otherwise from
/// the whole population; Zipf-weighted either way.
struct ClusteredPicker {
    members: Vec<Vec<usize>>,
    local: Vec<Option<WeightedIndex<f64>>>,
    global: WeightedIndex<f64>,
    global_order: Vec<usize>,
    cohesion: f64,
}

impl ClusteredPicker {
    fn new(n: usize, clusters: usize, skew: f64, cohesion: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut members = by_cluster(n, clusters);
        // popularity rank within a cluster is random, not by id
        for m in &mut members {
            m.shuffle(rng);
        }
        let local = members
            .iter()
            .map(|m| (!m.is_empty()).then(|| zipf(m.len(), skew)))
            .collect();
        let mut global_order: Vec<usize> = (0..n).collect();
        global_order.shuffle(rng);
        ClusteredPicker {
            members,
            local,
            global: zipf(n, skew),
            global_order,
            cohesion,
        }
    }

    fn pick(&self, cluster: usize, rng: &mut ChaCha8Rng) -> usize {
        let c = cluster % self.members.len();
        match &self.local[c] {
            Some(w) if rng.gen::<f64>() < self.cohesion => self.members[c][w.sample(rng)],
            _ => self.global_order[self.global.sample(rng)],
        }
    }
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.clusters;
    let mut entities = Vec::new();
    for u in 0..spec.users {
        entities.push((format!("u{u}"), "user".to_owned(), format!("user_{u}")));
    }
    for p in 0..spec.products {
        entities.push((format!("p{p}"), "product".to_owned(), format!("product_{p}")));
    }
    let mut relations = vec![(spec.feedback_relation.clone(), spec.feedback_surface.clone())];
    let mut triples = Vec::new();
    for r in &spec.relations {
        for a in 0..r.entities {
            entities.push((
                format!("{}{a}", r.entity_type),
                r.entity_type.clone(),
                format!("{}_{a}", r.entity_type),
            ));
        }
        relations.push((r.name.clone(), r.surface.clone().unwrap_or_else(|| r.name.clone())));
        let picker = ClusteredPicker::new(r.entities, c, spec.popularity_skew, spec.cohesion, &mut rng);
        let whole = r.links.floor() as usize;
        let frac = r.links - r.links.floor();
        for p in 0..spec.products {
            let count = whole + usize::from(rng.gen::<f64>() < frac);
            let mut chosen = HashSet::new();
            for _ in 0..count {
                // a few redraws to avoid duplicate links; duplicates are dropped
                for _ in 0..8 {
                    let a = picker.pick(p % c, &mut rng);
                    if chosen.insert(a) {
                        break;
                    }
                }
            }
            let mut chosen: Vec<usize> = chosen.into_iter().collect();
            chosen.sort_unstable();
            for a in chosen {
                triples.push((format!("{}{a}", r.entity_type), r.name.clone(), format!("p{p}")));
            }
        }
    }

    let products = ClusteredPicker::new(spec.products, c, spec.popularity_skew, spec.cohesion, &mut rng);
    let profiles = WeightedIndex::new(spec.recency.iter().map(|p| p.weight)).expect("validated weights");
    let mut interactions = Vec::new();
    for u in 0..spec.users {
        let m = rng.gen_range(spec.min_interactions..=spec.max_interactions);
        let gap = spec.recency[profiles.sample(&mut rng)].mean_gap_secs;
        let mut t = spec.start as f64 + rng.gen::<f64>() * 365.0 * DAY;
        let mut seen = HashSet::new();
        let mut attempts = 0;
        while seen.len() < m && attempts < 50 * m {
            attempts += 1;
            let p = products.pick(u % c, &mut rng);
            if !seen.insert(p) {
                continue;
            }
            interactions.push((format!("u{u}"), format!("p{p}"), t.round() as i64));
            t += -gap * (1.0 - rng.gen::<f64>()).ln() + 1.0;
        }
    }
    Ok(SynthData {
        entities,
        triples,
        relations,
        interactions,
    })
}

fn write_rows<I, F>(path: &Path, rows: I, mut fmt: F) -> Result<()>
where
    I: IntoIterator,
    F: FnMut(&mut dyn Write, I::Item) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        fmt(&mut w, row).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the four dataset files into `dir`.
pub fn write_synthetic(dir: &Path, data: &SynthData) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rows(&dir.join(ENTITIES_FILE), &data.entities, |w, (id, ty, name)| {
        writeln!(w, "{id}\t{ty}\t{name}")
    })?;
    write_rows(&dir.join(KG_FILE), &data.triples, |w, (h, r, t)| writeln!(w, "{h}\t{r}\t{t}"))?;
    write_rows(&dir.join(RELATIONS_FILE), &data.relations, |w, (r, s)| writeln!(w, "{r}\t{s}"))?;
    write_rows(&dir.join(INTERACTIONS_FILE), &data.interactions, |w, (u, p, t)| {
        writeln!(w, "{u}\t{p}\t{t}")
    })
}
