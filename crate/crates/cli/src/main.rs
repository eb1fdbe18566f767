use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use pathrec::config::Config;
use pathrec::metrics::PathMetric;
use pathrec::pipeline::{self, Artifacts};
use pathrec::synth::{generate_synthetic, write_synthetic, SynthSpec};

#[derive(Parser)]
#[command(name = "pathrec", version, about = "Explainable path-reasoning recommendations over a knowledge graph")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "pathrec.toml")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read and filter the raw dataset into the output directory.
    Ingest,
    /// Chronological train/valid/test split of the interactions.
    Split,
    /// Train the entity and relation embeddings.
    TrainEmbeddings {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the path-finding policy.
    TrainAgent {
        /// Weight of the explanation-quality terms in the reward.
        #[arg(long)]
        alpha: Option<f64>,
        /// Comma separated, from lir, sep, ptd.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<PathMetric>>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample reasoning paths and rank products.
    Recommend {
        #[command(flatten)]
        who: Users,
        #[arg(long)]
        n: Option<usize>,
        /// Defaults to paths.jsonl in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-rank sampled candidates for explanation quality.
    Rerank {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        metric: Option<Vec<PathMetric>>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attach a textual explanation to every recommendation.
    Explain {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// NDCG, MRR and path-quality metrics of a recommendation file.
    Evaluate {
        #[arg(long)]
        run: Option<PathBuf>,
        /// Held-out interactions; defaults to the split's test file.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Distribution reports of a dataset.
    Stats {
        /// Dataset directory; defaults to `data.dir` of the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Defaults to stats/ in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    Synth {
        /// Generator spec (TOML); built-in defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage in order.
    Pipeline,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Users {
    /// User key; repeatable.
    #[arg(long)]
    user: Vec<String>,
    #[arg(long)]
    all: bool,
}

fn load_config(path: &Path) -> Result<Config> {
    if !path.exists() {
        bail!("config file {} not found (pass --config)", path.display());
    }
    Ok(Config::load(path)?)
}

fn set_n(cfg: &mut Config, n: Option<usize>) {
    if let Some(n) = n {
        cfg.n = n;
    }
}

/// Header and mean row of the evaluation report.
fn print_summary(art: &Artifacts) -> Result<()> {
    let path = art.report_tsv();
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let lines: Vec<&str> = text.lines().collect();
    if let (Some(head), Some(mean)) = (lines.first(), lines.last()) {
        println!("{head}\n{mean}");
    }
    println!("per-user report: {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Synth { spec, seed, out } = &cli.command {
        let mut spec = match spec {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                SynthSpec::from_toml(&text)?
            }
            None => SynthSpec::default(),
        };
        if let Some(s) = seed {
            spec.seed = *s;
        }
        let data = generate_synthetic(&spec)?;
        write_synthetic(out, &data)?;
        println!(
            "wrote {} entities, {} triples, {} interactions to {}",
            data.entities.len(),
            data.triples.len(),
            data.interactions.len(),
            out.display()
        );
        return Ok(());
    }

    let mut cfg = load_config(&cli.config)?;
    let art = Artifacts::new(&cfg.out);
    match cli.command {
        Command::Synth { .. } => unreachable!(),
        Command::Ingest => {
            let r = pipeline::ingest(&cfg)?;
            println!("{}", serde_json::to_string(&r)?);
        }
        Command::Split => {
            let s = pipeline::split(&cfg)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::TrainEmbeddings { dim, epochs, seed } => {
            if let Some(d) = dim {
                cfg.embeddings.dim = d;
            }
            if let Some(e) = epochs {
                cfg.embeddings.epochs = e;
            }
            if let Some(s) = seed {
                cfg.embeddings.seed = s;
            }
            cfg.validate()?;
            pipeline::train_embeddings_stage(&cfg)?;
            println!("wrote {}", art.embeddings().display());
        }
        Command::TrainAgent { alpha, metrics, episodes, seed } => {
            if let Some(a) = alpha {
                cfg.agent.reward.alpha = a;
            }
            if let Some(m) = metrics {
                cfg.agent.reward.metrics = m;
            }
            if let Some(e) = episodes {
                cfg.agent.train.episodes = e;
            }
            if let Some(s) = seed {
                cfg.agent.train.seed = s;
            }
            cfg.validate()?;
            let log = pipeline::train_agent_stage(&cfg)?;
            let tail = &log.batch_mean_reward[log.batch_mean_reward.len().saturating_sub(10)..];
            let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
            println!("wrote {} (final batch reward {mean:.4})", art.policy().display());
        }
        Command::Recommend { who, n, out } => {
            set_n(&mut cfg, n);
            cfg.validate()?;
            let out = out.unwrap_or_else(|| art.paths());
            let users = if who.all { Vec::new() } else { who.user };
            let count = pipeline::recommend_stage(&cfg, &users, &out)?;
            println!("wrote {count} users to {}", out.display());
        }
        Command::Rerank { alpha, metric, n, input, out } => {
            if let Some(a) = alpha {
                cfg.rerank.alpha = a;
            }
            if let Some(m) = metric {
                cfg.rerank.metrics = m;
            }
            set_n(&mut cfg, n);
            cfg.validate()?;
            let input = input.unwrap_or_else(|| art.paths());
            let out = out.unwrap_or_else(|| art.reranked());
            let count = pipeline::rerank_stage(&cfg, &input, &out)?;
            println!("wrote {count} users to {}", out.display());
        }
        Command::Explain { input, out } => {
            let input = input.unwrap_or_else(|| art.reranked());
            let out = out.unwrap_or_else(|| art.explained());
            let count = pipeline::explain_stage(&cfg, &input, &out)?;
            println!("wrote {count} users to {}", out.display());
        }
        Command::Evaluate { run, test, n } => {
            set_n(&mut cfg, n);
            cfg.validate()?;
            let run = run.unwrap_or_else(|| art.explained());
            pipeline::evaluate_stage(&cfg, &run, test.as_deref())?;
            print_summary(&art)?;
        }
        Command::Stats { dataset, out } => {
            if let Some(d) = dataset {
                cfg.data.dir = d;
            }
            let out = out.unwrap_or_else(|| art.stats_dir());
            let stats = pipeline::stats_stage(&cfg, &out)?;
            print!("{}", stats.buckets_tsv());
            println!("wrote reports to {}", out.display());
        }
        Command::Pipeline => {
            pipeline::run_all(&cfg)?;
            print_summary(&art)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
