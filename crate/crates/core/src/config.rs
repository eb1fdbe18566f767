//! Run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 7
//! n = 10
//! out = "runs/synth"
//!
//! [data]
//! dir = "data/synth"
//!
//! [metrics]
//! beta_ir = 0.3
//! beta_ep = 0.3
//!
//! [agent]
//! alpha = 0.3
//! metrics = ["lir"]
//! prune = [20, 10, 10]
//!
//! [rerank]
//! alpha = 0.2
//! metrics = ["lir"]
//! ```
//!
//! Relative paths are resolved against the directory of the file. The
//! top-level `seed` drives every random stage; it overrides any per-section
//! seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentTrainConfig, RewardConfig};
use crate::dataset::{DatasetFiles, LoadOptions};
use crate::embeddings::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::explain::ExplanationTemplate;
use crate::metrics::{PathMetric, DEFAULT_BETA};
use crate::sampler::BeamWidths;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `entities.tsv`, `kg.tsv`, `interactions.tsv` and
    /// optionally `relations.tsv`.
    pub dir: PathBuf,
    pub feedback_relation: String,
    pub user_type: String,
    pub product_type: String,
    pub min_relation_count: usize,
    pub train_frac: f64,
    pub valid_frac: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let load = LoadOptions::default();
        DataConfig {
            dir: PathBuf::from("data"),
            feedback_relation: load.feedback_relation,
            user_type: load.user_type,
            product_type: load.product_type,
            min_relation_count: load.min_relation_count,
            train_frac: 0.7,
            valid_frac: 0.1,
        }
    }
}

impl DataConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            feedback_relation: self.feedback_relation.clone(),
            user_type: self.user_type.clone(),
            product_type: self.product_type.clone(),
            min_relation_count: self.min_relation_count,
        }
    }

    pub fn files(&self) -> DatasetFiles {
        DatasetFiles::in_dir(&self.dir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub beta_ir: f64,
    pub beta_ep: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            beta_ir: DEFAULT_BETA,
            beta_ep: DEFAULT_BETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct AgentConfig {
    #[serde(flatten)]
    pub reward: RewardConfig,
    #[serde(flatten)]
    pub train: AgentTrainConfig,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub beam: BeamWidths,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            beam: BeamWidths(vec![20, 10, 1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostConfig {
    pub alpha: f64,
    pub metrics: Vec<PathMetric>,
}

impl Default for PostConfig {
    fn default() -> Self {
        PostConfig {
            alpha: 0.0,
            metrics: vec![PathMetric::Lir],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ExplainConfig {
    pub template: ExplanationTemplate,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Recommendation list size.
    pub n: usize,
    /// Directory receiving every artifact.
    pub out: PathBuf,
    pub data: DataConfig,
    pub metrics: MetricsConfig,
    pub embeddings: EmbeddingConfig,
    pub agent: AgentConfig,
    pub sampler: SamplerConfig,
    pub rerank: PostConfig,
    pub explain: ExplainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            n: 10,
            out: PathBuf::from("runs"),
            data: DataConfig::default(),
            metrics: MetricsConfig::default(),
            embeddings: EmbeddingConfig::default(),
            agent: AgentConfig::default(),
            sampler: SamplerConfig::default(),
            rerank: PostConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

fn check_unit(name: &str, v: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { (0.0..=1.0).contains(&v) } else { v > 0.0 && v <= 1.0 };
    if ok {
        Ok(())
    } else {
        let range = if allow_zero { "[0, 1]" } else { "(0, 1]" };
        Err(Error::Config(format!("{name} must lie in {range}, got {v}")))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        cfg.apply_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Config::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data.dir.is_relative() {
            cfg.data.dir = base.join(&cfg.data.dir);
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    /// Propagates the global seed into every stage.
    pub fn apply_seed(&mut self) {
        self.embeddings.seed = self.seed;
        self.agent.train.seed = self.seed.wrapping_add(1);
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        check_unit("metrics.beta_ir", self.metrics.beta_ir, false)?;
        check_unit("metrics.beta_ep", self.metrics.beta_ep, false)?;
        check_unit("data.train_frac", self.data.train_frac, true)?;
        check_unit("data.valid_frac", self.data.valid_frac, true)?;
        if self.data.train_frac + self.data.valid_frac > 1.0 + 1e-12 {
            return Err(Error::Config("data.train_frac + data.valid_frac must not exceed 1".into()));
        }
        if self.embeddings.dim < 2 {
            return Err(Error::Config(format!("embeddings.dim must be >= 2, got {}", self.embeddings.dim)));
        }
        self.agent.reward.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("agent: {m}")),
            other => other,
        })?;
        self.sampler.beam.validate(self.agent.reward.hops)?;
        check_unit("rerank.alpha", self.rerank.alpha, true)?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg.n, 10);
        assert_eq!(cfg.agent.reward.prune, vec![20, 10, 10]);
        assert_eq!(cfg.metrics.beta_ir, 0.3);
    }

    #[test]
    fn keys_are_read() {
        let cfg = Config::from_toml(
            r#"
            seed = 5
            n = 5
            [metrics]
            beta_ir = 0.5
            [agent]
            alpha = 0.4
            metrics = ["lir", "ptd"]
            episodes = 100
            [rerank]
            alpha = 0.25
            metrics = ["sep"]
            [explain]
            template = "{e_k} via {e_1}"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.agent.reward.alpha, 0.4);
        assert_eq!(cfg.agent.reward.metrics, vec![PathMetric::Lir, PathMetric::Ptd]);
        assert_eq!(cfg.agent.train.episodes, 100);
        assert_eq!(cfg.agent.train.seed, 6);
        assert_eq!(cfg.embeddings.seed, 5);
        assert_eq!(cfg.rerank.metrics, vec![PathMetric::Sep]);
        assert_eq!(cfg.explain.template.source(), "{e_k} via {e_1}");
        let again = Config::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for bad in [
            "[agent]\nalpha = 1.5",
            "[rerank]\nalpha = -0.1",
            "n = 0",
            "[metrics]\nbeta_ep = 0.0",
            "[agent]\nmetrics = [\"ptc\"]",
            "[sampler]\nbeam = [5, 5]",
            "[data]\ntrain_frac = 0.95\nvalid_frac = 0.1",
            "unknown_key = 3",
            "[agent]\nalpha = \"high\"",
        ] {
            assert!(matches!(Config::from_toml(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "out = \"o\"\n[data]\ndir = \"d\"\n").unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.out, dir.path().join("o"));
        assert_eq!(cfg.data.dir, dir.path().join("d"));
    }
}
