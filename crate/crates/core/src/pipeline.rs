//! End-to-end stages and their on-disk artifacts.
//!
//! Layout under the configured output directory:
//!
//! ```text
//! dataset/            ingest     filtered entities, triples, relations, interactions
//! split/              split      train.tsv, valid.tsv, test.tsv
//! embeddings.tsv      train-embeddings
//! policy.bin          train-agent (plus train_log.json)
//! paths.jsonl         recommend
//! reranked.jsonl      rerank
//! explained.jsonl     explain
//! report.tsv/.json    evaluate
//! stats/              stats
//! ```
//!
//! Every artifact gets a `<file>.meta.json` sidecar with the stage name and
//! the resolved configuration.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{train_policy, Environment, PolicyModel, RewardConfig, TrainingLog};
use crate::config::Config;
use crate::dataset::{load_dataset, read_interactions, write_dataset, write_interactions, Dataset, DatasetFiles, LoadOptions, LoadReport};
use crate::embeddings::{train_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{dataset_stats, evaluate_run, DatasetStats, RunReport, UserRun};
use crate::explain::{render, SurfaceForms};
use crate::graph::{chronological_split, EntityId, KnowledgeGraph, Split};
use crate::metrics::{entity_popularity, MetricContext, PopularityTable, RecencyTable};
use crate::records::{read_jsonl, write_jsonl, UserRecord};
use crate::rerank::{rerank, RerankConfig};
use crate::sampler::{sample_candidates, select_best_paths, top_n, BeamWidths, CandidateSet, RankedList};

/// Artifact locations under an output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: &Path) -> Self {
        Artifacts { root: root.to_path_buf() }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn split_dir(&self) -> PathBuf {
        self.root.join("split")
    }

    pub fn train(&self) -> PathBuf {
        self.split_dir().join("train.tsv")
    }

    pub fn valid(&self) -> PathBuf {
        self.split_dir().join("valid.tsv")
    }

    pub fn test(&self) -> PathBuf {
        self.split_dir().join("test.tsv")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.tsv")
    }

    pub fn policy(&self) -> PathBuf {
        self.root.join("policy.bin")
    }

    pub fn train_log(&self) -> PathBuf {
        self.root.join("train_log.json")
    }

    pub fn paths(&self) -> PathBuf {
        self.root.join("paths.jsonl")
    }

    pub fn reranked(&self) -> PathBuf {
        self.root.join("reranked.jsonl")
    }

    pub fn explained(&self) -> PathBuf {
        self.root.join("explained.jsonl")
    }

    pub fn report_tsv(&self) -> PathBuf {
        self.root.join("report.tsv")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn stats_dir(&self) -> PathBuf {
        self.root.join("stats")
    }
}

/// Fails with an actionable message if `path` does not exist.
pub fn require(path: &Path, stage: &'static str, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            stage,
            path: path.to_path_buf(),
            hint: format!("run `pathrec {producer}` first"),
        })
    }
}

#[derive(Serialize)]
struct Meta<'a, T: Serialize> {
    stage: &'a str,
    version: &'a str,
    config: &'a Config,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<T>,
}

fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

/// Writes the `.meta.json` sidecar of `artifact`.
pub fn write_meta<T: Serialize>(artifact: &Path, stage: &str, cfg: &Config, details: Option<T>) -> Result<()> {
    let meta = Meta {
        stage,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        details,
    };
    let path = meta_path(artifact);
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Everything the model stages share: the dataset, its split, the
/// reasoning graph (knowledge graph plus training feedback) and the
/// recency and popularity tables.
#[derive(Debug, Clone)]
pub struct Context {
    pub dataset: Dataset,
    pub split: Split,
    pub graph: KnowledgeGraph,
    pub recency: RecencyTable,
    pub popularity: PopularityTable,
}

impl Context {
    pub fn new(dataset: Dataset, split: Split, cfg: &Config) -> Result<Self> {
        let graph = dataset.graph.with_feedback(&split.train)?;
        let recency = RecencyTable::from_log(&split.train, cfg.metrics.beta_ir)?;
        let popularity = entity_popularity(&graph, cfg.metrics.beta_ep)?;
        Ok(Context {
            dataset,
            split,
            graph,
            recency,
            popularity,
        })
    }

    /// Splits `dataset` chronologically as configured.
    pub fn from_dataset(dataset: Dataset, cfg: &Config) -> Result<Self> {
        let split = chronological_split(&dataset.log, cfg.data.train_frac, cfg.data.valid_frac)?;
        Context::new(dataset, split, cfg)
    }

    pub fn metric_context(&self) -> MetricContext<'_> {
        MetricContext {
            recency: &self.recency,
            popularity: &self.popularity,
            num_relations: self.graph.num_relations(),
        }
    }

    pub fn environment<'a>(&'a self, emb: &'a EmbeddingTable, reward: RewardConfig) -> Result<Environment<'a>> {
        Environment::new(&self.graph, emb, &self.recency, &self.popularity, reward)
    }

    /// Products the user already interacted with in train or validation.
    pub fn seen(&self, user: EntityId) -> HashSet<EntityId> {
        let mut s = self.split.train.products_of(user);
        s.extend(self.split.valid.products_of(user));
        s
    }

    /// Users with at least one training interaction, in id order.
    pub fn users(&self) -> Vec<EntityId> {
        self.split.train.users().collect()
    }

    /// Users with at least one test interaction, in id order.
    pub fn test_users(&self) -> Vec<EntityId> {
        self.split.test.users().collect()
    }
}

/// Samples candidates and the relevance top-`n` for each user, in parallel.
pub fn recommend_users(
    ctx: &Context,
    emb: &EmbeddingTable,
    policy: &PolicyModel,
    beam: &BeamWidths,
    users: &[EntityId],
    n: usize,
) -> Result<Vec<(CandidateSet, RankedList)>> {
    let env = ctx.environment(emb, policy.config().clone())?;
    users
        .par_iter()
        .map(|&u| {
            let cands = sample_candidates(&env, policy, u, beam)?;
            let list = top_n(&select_best_paths(&cands), n, &ctx.seen(u))?;
            Ok((cands, list))
        })
        .collect()
}

/// Re-ranks every candidate set; users without candidates keep an empty list.
pub fn rerank_users(ctx: &Context, cands: &[CandidateSet], cfg: &RerankConfig) -> Result<Vec<RankedList>> {
    let mctx = ctx.metric_context();
    cands
        .par_iter()
        .map(|c| {
            if c.is_empty() {
                return Ok(RankedList {
                    items: Vec::new(),
                    truncated: true,
                });
            }
            rerank(c, cfg, &mctx, &ctx.seen(c.user))
        })
        .collect()
}

/// Evaluates ranked lists of the given users against the test split.
pub fn evaluate_lists(ctx: &Context, users: &[EntityId], lists: &[RankedList], n: usize) -> Result<RunReport> {
    let runs: Vec<UserRun> = users
        .iter()
        .zip(lists)
        .map(|(&user, l)| UserRun {
            user,
            products: l.products(),
            paths: l.paths(),
        })
        .collect();
    evaluate_run(&runs, &ctx.split.test, &ctx.metric_context(), n)
}

// ---- on-disk stages ----

fn dataset_files(art: &Artifacts) -> DatasetFiles {
    DatasetFiles::in_dir(&art.dataset_dir())
}

/// Reads and filters the raw dataset and writes the normalised copy.
pub fn ingest(cfg: &Config) -> Result<LoadReport> {
    let art = Artifacts::new(&cfg.out);
    let files = cfg.data.files();
    for p in [&files.entities, &files.kg, &files.interactions] {
        if !p.exists() {
            return Err(Error::MissingArtifact {
                stage: "ingest",
                path: p.clone(),
                hint: "check `data.dir` in the config".into(),
            });
        }
    }
    let (dataset, report) = load_dataset(&files, &cfg.data.load_options())?;
    let out = write_dataset(&art.dataset_dir(), &dataset)?;
    write_meta(&out.kg, "ingest", cfg, Some(&report))?;
    Ok(report)
}

fn load_ingested(cfg: &Config, stage: &'static str) -> Result<Dataset> {
    let art = Artifacts::new(&cfg.out);
    let files = dataset_files(&art);
    require(&files.kg, stage, "ingest")?;
    let opts = LoadOptions {
        min_relation_count: 0,
        ..cfg.data.load_options()
    };
    Ok(load_dataset(&files, &opts)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SplitSummary {
    pub users: usize,
    pub flagged: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

pub fn split(cfg: &Config) -> Result<SplitSummary> {
    let art = Artifacts::new(&cfg.out);
    let dataset = load_ingested(cfg, "split")?;
    let s = chronological_split(&dataset.log, cfg.data.train_frac, cfg.data.valid_frac)?;
    let g = &dataset.graph;
    write_interactions(&art.train(), g, &s.train)?;
    write_interactions(&art.valid(), g, &s.valid)?;
    write_interactions(&art.test(), g, &s.test)?;
    let summary = SplitSummary {
        users: dataset.log.num_users(),
        flagged: s.flagged.len(),
        train: s.train.len(),
        valid: s.valid.len(),
        test: s.test.len(),
    };
    write_meta(&art.train(), "split", cfg, Some(summary))?;
    Ok(summary)
}

/// Rebuilds the shared context from the ingest and split artifacts.
pub fn load_context(cfg: &Config, stage: &'static str) -> Result<Context> {
    let art = Artifacts::new(&cfg.out);
    let dataset = load_ingested(cfg, stage)?;
    require(&art.train(), stage, "split")?;
    let g = &dataset.graph;
    let split = Split {
        train: read_interactions(&art.train(), g)?,
        valid: read_interactions(&art.valid(), g)?,
        test: read_interactions(&art.test(), g)?,
        flagged: Vec::new(),
    };
    Context::new(dataset, split, cfg)
}

pub fn train_embeddings_stage(cfg: &Config) -> Result<()> {
    let art = Artifacts::new(&cfg.out);
    let ctx = load_context(cfg, "train-embeddings")?;
    let table = train_embeddings(&ctx.graph, &cfg.embeddings)?;
    table.save(&art.embeddings())?;
    write_meta::<()>(&art.embeddings(), "train-embeddings", cfg, None)
}

fn load_embeddings(art: &Artifacts, stage: &'static str) -> Result<EmbeddingTable> {
    require(&art.embeddings(), stage, "train-embeddings")?;
    EmbeddingTable::load(&art.embeddings())
}

fn load_policy(art: &Artifacts, stage: &'static str) -> Result<PolicyModel> {
    require(&art.policy(), stage, "train-agent")?;
    PolicyModel::load(&art.policy())
}

pub fn train_agent_stage(cfg: &Config) -> Result<TrainingLog> {
    let art = Artifacts::new(&cfg.out);
    let ctx = load_context(cfg, "train-agent")?;
    let emb = load_embeddings(&art, "train-agent")?;
    let env = ctx.environment(&emb, cfg.agent.reward.clone())?;
    let (policy, log) = train_policy(&env, &cfg.agent.train)?;
    policy.save(&art.policy())?;
    write_text(&art.train_log(), &serde_json::to_string(&log)?)?;
    write_meta::<()>(&art.policy(), "train-agent", cfg, None)?;
    Ok(log)
}

/// Samples paths for `users` (all training users when empty) and writes
/// them to `out`.
pub fn recommend_stage(cfg: &Config, users: &[String], out: &Path) -> Result<usize> {
    let art = Artifacts::new(&cfg.out);
    let ctx = load_context(cfg, "recommend")?;
    let emb = load_embeddings(&art, "recommend")?;
    let policy = load_policy(&art, "recommend")?;
    let ids: Vec<EntityId> = if users.is_empty() {
        ctx.users()
    } else {
        users
            .iter()
            .map(|k| {
                ctx.graph
                    .entity_by_key(k)
                    .filter(|&u| ctx.graph.is_user(u))
                    .ok_or_else(|| Error::Config(format!("unknown user `{k}`")))
            })
            .collect::<Result<_>>()?
    };
    let results = recommend_users(&ctx, &emb, &policy, &cfg.sampler.beam, &ids, cfg.n)?;
    let records: Vec<UserRecord> = results
        .iter()
        .map(|(c, l)| UserRecord::new(&ctx.graph, l, c))
        .collect();
    write_jsonl(out, &records)?;
    write_meta::<()>(out, "recommend", cfg, None)?;
    Ok(records.len())
}

/// Re-ranks the candidates stored in `input` with `cfg.rerank`.
pub fn rerank_stage(cfg: &Config, input: &Path, out: &Path) -> Result<usize> {
    let ctx = load_context(cfg, "rerank")?;
    require(input, "rerank", "recommend")?;
    let records = read_jsonl(input)?;
    let cands: Vec<CandidateSet> = records
        .iter()
        .map(|r| r.candidate_set(&ctx.graph))
        .collect::<Result<_>>()?;
    let rcfg = RerankConfig {
        alpha: cfg.rerank.alpha,
        metrics: cfg.rerank.metrics.clone(),
        n: cfg.n,
    };
    let lists = rerank_users(&ctx, &cands, &rcfg)?;
    let out_records: Vec<UserRecord> = records
        .iter()
        .zip(&lists)
        .map(|(r, l)| r.with_list(&ctx.graph, l))
        .collect();
    write_jsonl(out, &out_records)?;
    write_meta::<()>(out, "rerank", cfg, None)?;
    Ok(out_records.len())
}

/// Adds an explanation to every recommendation in `input`.
pub fn explain_stage(cfg: &Config, input: &Path, out: &Path) -> Result<usize> {
    let dataset = load_ingested(cfg, "explain")?;
    require(input, "explain", "recommend")?;
    let names = SurfaceForms::from_graph(&dataset.graph);
    let mut records = read_jsonl(input)?;
    for r in &mut records {
        for item in &mut r.recommendations {
            let path = item.item.path.to_path(&dataset.graph)?;
            item.explanation = Some(render(&path, &cfg.explain.template, &names)?);
        }
    }
    write_jsonl(out, &records)?;
    write_meta::<()>(out, "explain", cfg, None)?;
    Ok(records.len())
}

/// Evaluates `run` against `test` (the split's test file by default).
pub fn evaluate_stage(cfg: &Config, run: &Path, test: Option<&Path>) -> Result<RunReport> {
    let art = Artifacts::new(&cfg.out);
    let ctx = load_context(cfg, "evaluate")?;
    require(run, "evaluate", "recommend")?;
    let records = read_jsonl(run)?;
    let runs: Vec<UserRun> = records
        .iter()
        .map(|r| r.user_run(&ctx.graph))
        .collect::<Result<_>>()?;
    let test_log = match test {
        Some(p) => read_interactions(p, &ctx.graph)?,
        None => ctx.split.test.clone(),
    };
    let report = evaluate_run(&runs, &test_log, &ctx.metric_context(), cfg.n)?;
    write_text(&art.report_tsv(), &report.to_tsv(&ctx.graph))?;
    write_text(&art.report_json(), &serde_json::to_string_pretty(&report)?)?;
    write_meta::<()>(&art.report_json(), "evaluate", cfg, None)?;
    Ok(report)
}

/// Distribution reports of the raw dataset plus the recency and
/// popularity tables, as TSV files under `out`.
pub fn stats_stage(cfg: &Config, out: &Path) -> Result<DatasetStats> {
    let (dataset, _) = load_dataset(&cfg.data.files(), &cfg.data.load_options())?;
    let stats = dataset_stats(&dataset.graph, &dataset.log)?;
    write_text(&out.join("recency_buckets.tsv"), &stats.buckets_tsv())?;
    write_text(&out.join("degrees.tsv"), &stats.degrees_tsv())?;
    write_text(&out.join("relations.tsv"), &stats.relations_tsv())?;

    let g = &dataset.graph;
    let recency = RecencyTable::from_log(&dataset.log, cfg.metrics.beta_ir)?;
    let mut text = String::from("user\tproduct\ttimestamp\tnormalized\n");
    for (u, p, t, s) in recency.rows() {
        text.push_str(&format!("{}\t{}\t{t}\t{s:.6}\n", g.entity_key(u), g.entity_key(p)));
    }
    write_text(&out.join("interaction_recency.tsv"), &text)?;

    let full = g.with_feedback(&dataset.log)?;
    let pop = entity_popularity(&full, cfg.metrics.beta_ep)?;
    let mut text = String::from("entity\ttype\tdegree\traw\tnormalized\n");
    for ty in pop.types() {
        for e in pop.entries(ty) {
            text.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\n",
                full.entity_key(e.entity),
                full.type_name(ty),
                e.degree,
                e.raw,
                e.normalized
            ));
        }
    }
    write_text(&out.join("entity_popularity.tsv"), &text)?;
    write_meta::<()>(&out.join("relations.tsv"), "stats", cfg, None)?;
    Ok(stats)
}

/// Runs every stage. Re-ranking runs when `rerank.alpha > 0`; the
/// evaluated and explained list is the re-ranked one in that case.
pub fn run_all(cfg: &Config) -> Result<RunReport> {
    let art = Artifacts::new(&cfg.out);
    ingest(cfg)?;
    split(cfg)?;
    train_embeddings_stage(cfg)?;
    train_agent_stage(cfg)?;
    recommend_stage(cfg, &[], &art.paths())?;
    let mut current = art.paths();
    if cfg.rerank.alpha > 0.0 {
        rerank_stage(cfg, &current, &art.reranked())?;
        current = art.reranked();
    }
    explain_stage(cfg, &current, &art.explained())?;
    stats_stage(cfg, &art.stats_dir())?;
    evaluate_stage(cfg, &art.explained(), None)
}
