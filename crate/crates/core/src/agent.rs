//! Path-walking agent.
//!
//! A state is a user, the entity reached so far and the walked history. The
//! full action space is every outgoing edge that revisits neither an entity
//! nor a directed relation of the history. It is pruned to the `Z_i`
//! highest-scoring actions, where an action scores
//!
//! ```text
//! (1 - alpha) * relevance(e_i, e) + alpha * sum of the path-quality terms
//! ```
//!
//! and the policy network samples among the survivors. Training is
//! REINFORCE with a scalar moving-average baseline on the terminal reward.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{Direction, EntityId, Hop, KnowledgeGraph, ReasoningPath, RelationId};
use crate::metrics::{PathMetric, PopularityTable, RecencyTable};
use crate::nn::{Adam, Mlp};

/// An action is the next hop: a relation, the direction it is walked in
/// and the entity it reaches.
pub type Action = Hop;

/// Scoring and pruning knobs of the walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Weight of the path-quality terms against relevance.
    pub alpha: f64,
    /// Optimised metrics; a subset of LIR, SEP and PTD.
    pub metrics: Vec<PathMetric>,
    /// Path length `k`.
    pub hops: usize,
    /// Maximum action-space size per step, `Z_1..Z_k`.
    pub prune: Vec<usize>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha: 0.0,
            metrics: Vec::new(),
            hops: 3,
            prune: vec![20, 10, 10],
        }
    }
}

impl RewardConfig {
    /// No pruning at any of `hops` steps.
    pub fn unbounded(hops: usize) -> Self {
        RewardConfig {
            hops,
            prune: vec![usize::MAX; hops],
            ..RewardConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if let Some(m) = self
            .metrics
            .iter()
            .find(|m| !matches!(m, PathMetric::Lir | PathMetric::Sep | PathMetric::Ptd))
        {
            return Err(Error::Config(format!("{m} cannot be optimised during the walk; use lir, sep or ptd")));
        }
        if self.hops == 0 {
            return Err(Error::Config("path length must be at least 1".into()));
        }
        if self.prune.len() != self.hops {
            return Err(Error::Config(format!(
                "expected {} pruning sizes, got {}",
                self.hops,
                self.prune.len()
            )));
        }
        if self.prune.contains(&0) {
            return Err(Error::Config("pruning sizes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgentState {
    pub user: EntityId,
    pub current: EntityId,
    pub history: Vec<Hop>,
}

impl AgentState {
    pub fn step(&self) -> usize {
        self.history.len()
    }

    pub fn path(&self) -> ReasoningPath {
        ReasoningPath::new(self.user, self.history.clone())
    }

    pub fn advance(&self, action: Action) -> AgentState {
        let mut history = self.history.clone();
        history.push(action);
        AgentState {
            user: self.user,
            current: action.entity,
            history,
        }
    }

    fn visited(&self, e: EntityId) -> bool {
        e == self.user || self.history.iter().any(|h| h.entity == e)
    }

    fn used(&self, relation: RelationId, direction: Direction) -> bool {
        self.history
            .iter()
            .any(|h| h.relation == relation && h.direction == direction)
    }
}

/// An action with its pruning score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredAction {
    pub action: Action,
    pub score: f64,
}

/// Path types already produced per user; drives the PTD bonus.
pub type SeenTypes = HashSet<RelationId>;

/// The walk environment over an immutable graph and its score tables.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    pub graph: &'a KnowledgeGraph,
    pub embeddings: &'a EmbeddingTable,
    pub recency: &'a RecencyTable,
    pub popularity: &'a PopularityTable,
    config: RewardConfig,
}

impl<'a> Environment<'a> {
    pub fn new(
        graph: &'a KnowledgeGraph,
        embeddings: &'a EmbeddingTable,
        recency: &'a RecencyTable,
        popularity: &'a PopularityTable,
        config: RewardConfig,
    ) -> Result<Self> {
        config.validate()?;
        if embeddings.num_entities() != graph.num_entities() || embeddings.num_relations() != graph.num_relations() {
            return Err(Error::Config(format!(
                "embeddings cover {} entities / {} relations but the graph has {} / {}",
                embeddings.num_entities(),
                embeddings.num_relations(),
                graph.num_entities(),
                graph.num_relations()
            )));
        }
        Ok(Environment {
            graph,
            embeddings,
            recency,
            popularity,
            config,
        })
    }

    pub fn config(&self) -> &RewardConfig {
        &self.config
    }

    pub fn with_config(&self, config: RewardConfig) -> Result<Self> {
        Environment::new(self.graph, self.embeddings, self.recency, self.popularity, config)
    }

    pub fn initial_state(&self, user: EntityId) -> Result<AgentState> {
        if !self.graph.is_user(user) {
            return Err(Error::Config(format!("{user} is not a user entity")));
        }
        Ok(AgentState {
            user,
            current: user,
            history: Vec::new(),
        })
    }

    /// Every outgoing edge of the current entity that reaches an unvisited
    /// entity through a directed relation not used yet.
    pub fn action_space(&self, state: &AgentState) -> Vec<Action> {
        self.graph
            .edges(state.current)
            .iter()
            .filter(|e| !state.visited(e.neighbor) && !state.used(e.relation, e.direction))
            .map(|e| Hop {
                relation: e.relation,
                direction: e.direction,
                entity: e.neighbor,
            })
            .collect()
    }

    /// Sum of the selected path-quality terms computable on `path`.
    ///
    /// LIR needs the first hop; SEP and PTD need the shared entity, reached
    /// at hop `k-1`. The PTD term is 1 when the type of the (partial) path
    /// has not been seen for the user yet.
    pub fn quality_terms(&self, path: &ReasoningPath, seen: &SeenTypes) -> f64 {
        let k = self.config.hops;
        let len = path.len();
        let shared_known = k >= 2 && len >= k - 1 && len >= 1;
        let mut total = 0.0;
        for m in &self.config.metrics {
            total += match m {
                PathMetric::Lir if len >= 1 => self.recency.score(path.origin, path.hops[0].entity).unwrap_or(0.0),
                PathMetric::Sep if shared_known => self.popularity.score(path.entity_at(k - 1)).unwrap_or(0.0),
                PathMetric::Ptd if shared_known => {
                    let ty = path.hops[len - 1].relation;
                    if seen.contains(&ty) {
                        0.0
                    } else {
                        1.0
                    }
                }
                _ => 0.0,
            };
        }
        total
    }

    fn score_unchecked(&self, state: &AgentState, action: &Action, seen: &SeenTypes) -> f64 {
        let alpha = self.config.alpha;
        let relevance = self.embeddings.relevance_unchecked(state.current, action.entity);
        if alpha == 0.0 {
            return relevance;
        }
        let path = state.path().extended(*action);
        (1.0 - alpha) * relevance + alpha * self.quality_terms(&path, seen)
    }

    pub fn score_action(&self, state: &AgentState, action: &Action, seen: &SeenTypes) -> Result<f64> {
        if !self.action_space(state).contains(action) {
            return Err(Error::InvalidAction(format!(
                "{} -{}-> {}",
                state.current, action.relation, action.entity
            )));
        }
        Ok(self.score_unchecked(state, action, seen))
    }

    /// The `Z_i` best-scoring actions, best first; ties go to the smaller
    /// `(relation, direction, entity)`.
    pub fn prune_action_space(&self, state: &AgentState, seen: &SeenTypes) -> Vec<ScoredAction> {
        let limit = self.config.prune.get(state.step()).copied().unwrap_or(0);
        let mut scored: Vec<ScoredAction> = self
            .action_space(state)
            .into_iter()
            .map(|action| ScoredAction {
                score: self.score_unchecked(state, &action, seen),
                action,
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.action.cmp(&b.action)));
        scored.truncate(limit);
        scored
    }

    /// Terminal reward; zero unless the walk has `k` hops and ends on a product.
    pub fn reward(&self, state: &AgentState, seen: &SeenTypes) -> f64 {
        if state.step() != self.config.hops || !self.graph.is_product(state.current) {
            return 0.0;
        }
        let alpha = self.config.alpha;
        let relevance = self.embeddings.relevance_unchecked(state.user, state.current);
        if alpha == 0.0 {
            return relevance;
        }
        (1.0 - alpha) * relevance + alpha * self.quality_terms(&state.path(), seen)
    }
}

/// Reward signal used by [`train_policy_with`].
pub trait EpisodeReward: Sync {
    fn reward(&self, env: &Environment<'_>, state: &AgentState, seen: &SeenTypes) -> f64;
}

/// The environment's own terminal reward.
#[derive(Debug, Clone, Copy, Default)]
pub struct PathQualityReward;

impl EpisodeReward for PathQualityReward {
    fn reward(&self, env: &Environment<'_>, state: &AgentState, seen: &SeenTypes) -> f64 {
        env.reward(state, seen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentTrainConfig {
    pub episodes: usize,
    pub lr: f64,
    pub discount: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub entropy_weight: f64,
    pub baseline_decay: f64,
    pub seed: u64,
}

impl Default for AgentTrainConfig {
    fn default() -> Self {
        AgentTrainConfig {
            episodes: 20_000,
            lr: 1e-3,
            discount: 0.99,
            batch_size: 32,
            hidden: 128,
            entropy_weight: 1e-3,
            baseline_decay: 0.9,
            seed: 0,
        }
    }
}

/// Policy network over pruned action spaces.
///
/// The state is encoded as `[user; current; mean(history)]` from the entity
/// and relation embeddings, mapped by a two-hidden-layer ReLU network to a
/// query vector, and each action `[±relation; entity]` is scored by its dot
/// product with the query. Backward hops use the negated relation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    net: Mlp,
    dim: usize,
    config: RewardConfig,
}

const POLICY_MAGIC: &[u8; 8] = b"PRPOLICY";
const POLICY_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PolicyHeader {
    dim: usize,
    sizes: Vec<usize>,
    config: RewardConfig,
}

/// One decision recorded during a rollout.
#[derive(Debug, Clone)]
struct Decision {
    state: AgentState,
    actions: Vec<Action>,
    chosen: usize,
}

#[derive(Debug, Clone)]
struct Episode {
    user: EntityId,
    decisions: Vec<Decision>,
    final_state: AgentState,
    reward: f64,
}

/// Per-batch training statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingLog {
    pub batch_mean_reward: Vec<f64>,
}

impl PolicyModel {
    pub fn new(dim: usize, hidden: usize, config: RewardConfig, seed: u64) -> Self {
        PolicyModel {
            net: Mlp::new(&[3 * dim, hidden, hidden, 2 * dim], seed),
            dim,
            config,
        }
    }

    pub fn config(&self) -> &RewardConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    fn encode_state(&self, emb: &EmbeddingTable, state: &AgentState) -> Vec<f64> {
        let d = self.dim;
        let mut x = Vec::with_capacity(3 * d);
        x.extend_from_slice(emb.entity(state.user));
        x.extend_from_slice(emb.entity(state.current));
        let mut hist = vec![0.0; d];
        let mut count = 0usize;
        let n = state.history.len();
        for (i, h) in state.history.iter().enumerate() {
            let sign = if h.direction == Direction::Forward { 1.0 } else { -1.0 };
            for (acc, v) in hist.iter_mut().zip(emb.relation(h.relation)) {
                *acc += sign * v;
            }
            count += 1;
            if i + 1 < n {
                for (acc, v) in hist.iter_mut().zip(emb.entity(h.entity)) {
                    *acc += v;
                }
                count += 1;
            }
        }
        if count > 0 {
            for v in &mut hist {
                *v /= count as f64;
            }
        }
        x.extend(hist);
        x
    }

    fn encode_action(&self, emb: &EmbeddingTable, a: &Action) -> Vec<f64> {
        let sign = if a.direction == Direction::Forward { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = emb.relation(a.relation).iter().map(|x| sign * x).collect();
        v.extend_from_slice(emb.entity(a.entity));
        v
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    /// Probabilities over an explicit action list.
    pub fn probabilities(&self, emb: &EmbeddingTable, state: &AgentState, actions: &[Action]) -> Vec<f64> {
        if actions.is_empty() {
            return Vec::new();
        }
        let (q, _) = self.net.forward(&self.encode_state(emb, state));
        let logits: Vec<f64> = actions
            .iter()
            .map(|a| q.iter().zip(self.encode_action(emb, a)).map(|(x, y)| x * y).sum())
            .collect();
        Self::softmax(&logits)
    }

    /// Masked softmax over the pruned action space of `state`.
    pub fn action_distribution(&self, env: &Environment<'_>, state: &AgentState, seen: &SeenTypes) -> Vec<(Action, f64)> {
        let actions: Vec<Action> = env
            .prune_action_space(state, seen)
            .into_iter()
            .map(|s| s.action)
            .collect();
        let probs = self.probabilities(env.embeddings, state, &actions);
        actions.into_iter().zip(probs).collect()
    }

    /// Accumulates the gradient of `-advantage * log pi(chosen) - entropy_weight * H(pi)`.
    fn accumulate_gradient(
        &self,
        emb: &EmbeddingTable,
        decision: &Decision,
        advantage: f64,
        entropy_weight: f64,
        grad: &mut [f64],
    ) {
        let (q, trace) = self.net.forward(&self.encode_state(emb, &decision.state));
        let feats: Vec<Vec<f64>> = decision.actions.iter().map(|a| self.encode_action(emb, a)).collect();
        let logits: Vec<f64> = feats
            .iter()
            .map(|f| q.iter().zip(f).map(|(x, y)| x * y).sum())
            .collect();
        let probs = Self::softmax(&logits);
        let entropy: f64 = -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        let mut d_q = vec![0.0; q.len()];
        for (i, (f, &p)) in feats.iter().zip(&probs).enumerate() {
            let onehot = if i == decision.chosen { 1.0 } else { 0.0 };
            let log_p = if p > 0.0 { p.ln() } else { 0.0 };
            let d_logit = -advantage * (onehot - p) + entropy_weight * p * (log_p + entropy);
            for (g, x) in d_q.iter_mut().zip(f) {
                *g += d_logit * x;
            }
        }
        self.net.backward(&trace, &d_q, grad);
    }

    fn rollout<R: EpisodeReward>(
        &self,
        env: &Environment<'_>,
        reward: &R,
        user: EntityId,
        seen: &SeenTypes,
        rng: &mut ChaCha8Rng,
    ) -> Episode {
        let mut state = AgentState {
            user,
            current: user,
            history: Vec::new(),
        };
        let mut decisions = Vec::new();
        while state.step() < env.config.hops {
            let dist = self.action_distribution(env, &state, seen);
            if dist.is_empty() {
                return Episode {
                    user,
                    decisions,
                    final_state: state,
                    reward: 0.0,
                };
            }
            let r: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = dist.len() - 1;
            for (i, (_, p)) in dist.iter().enumerate() {
                acc += p;
                if r < acc {
                    chosen = i;
                    break;
                }
            }
            let action = dist[chosen].0;
            decisions.push(Decision {
                state: state.clone(),
                actions: dist.into_iter().map(|(a, _)| a).collect(),
                chosen,
            });
            state = state.advance(action);
        }
        let r = reward.reward(env, &state, seen);
        Episode {
            user,
            decisions,
            final_state: state,
            reward: r,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&PolicyHeader {
            dim: self.dim,
            sizes: self.net.sizes().to_vec(),
            config: self.config.clone(),
        })?;
        let mut buf = Vec::with_capacity(24 + header.len() + 8 * self.net.params().len());
        buf.extend_from_slice(POLICY_MAGIC);
        buf.extend_from_slice(&POLICY_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for p in self.net.params() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
        if buf.len() < 20 || &buf[..8] != POLICY_MAGIC {
            return Err(bad("not a policy checkpoint"));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
        if version != POLICY_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
        let body = buf.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: PolicyHeader = serde_json::from_slice(body)?;
        header.config.validate()?;
        let raw = &buf[20 + hlen..];
        if raw.len() % 8 != 0 {
            return Err(bad("truncated parameters"));
        }
        let params: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let net = Mlp::from_params(&header.sizes, params).ok_or_else(|| bad("parameter count mismatch"))?;
        Ok(PolicyModel {
            net,
            dim: header.dim,
            config: header.config,
        })
    }
}

fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64 + 1);
    rng
}

/// Trains a policy on the environment's own reward.
pub fn train_policy(env: &Environment<'_>, cfg: &AgentTrainConfig) -> Result<(PolicyModel, TrainingLog)> {
    train_policy_with(env, cfg, &PathQualityReward)
}

/// REINFORCE over uniformly sampled users with an arbitrary terminal reward.
///
/// Episodes are drawn in batches; each episode has its own RNG stream, so
/// results do not depend on thread scheduling. The PTD memory of seen path
/// types per user is reset every epoch, one epoch being as many episodes as
/// there are users with outgoing edges.
pub fn train_policy_with<R: EpisodeReward>(
    env: &Environment<'_>,
    cfg: &AgentTrainConfig,
    reward: &R,
) -> Result<(PolicyModel, TrainingLog)> {
    if cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(Error::Config("batch size and hidden width must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.discount) {
        return Err(Error::Config(format!("discount must lie in [0, 1], got {}", cfg.discount)));
    }
    let users: Vec<EntityId> = env
        .graph
        .users()
        .filter(|&u| !env.graph.edges(u).is_empty())
        .collect();
    if users.is_empty() {
        return Err(Error::EmptyInput("train_policy (no user has outgoing edges)"));
    }
    let mut policy = PolicyModel::new(env.embeddings.dim(), cfg.hidden, env.config.clone(), cfg.seed);
    let mut opt = Adam::new(policy.net.params().len(), cfg.lr);
    let mut baseline = 0.0;
    let mut baseline_ready = false;
    let mut seen: HashMap<EntityId, SeenTypes> = HashMap::new();
    let epoch_len = users.len();
    let mut epoch = 0;
    let mut log = TrainingLog::default();
    let empty = SeenTypes::new();

    let mut done = 0;
    while done < cfg.episodes {
        if done / epoch_len != epoch {
            epoch = done / epoch_len;
            seen.clear();
        }
        let batch = cfg.batch_size.min(cfg.episodes - done);
        let episodes: Vec<Episode> = (done..done + batch)
            .into_par_iter()
            .map(|ep| {
                let mut rng = episode_rng(cfg.seed, ep);
                let user = users[rng.gen_range(0..users.len())];
                let user_seen = seen.get(&user).unwrap_or(&empty);
                policy.rollout(env, reward, user, user_seen, &mut rng)
            })
            .collect();
        done += batch;

        let mean_reward = episodes.iter().map(|e| e.reward).sum::<f64>() / batch as f64;
        log.batch_mean_reward.push(mean_reward);
        if !baseline_ready {
            baseline = mean_reward;
            baseline_ready = true;
        }

        let grads: Vec<Vec<f64>> = episodes
            .par_iter()
            .map(|e| {
                let mut g = vec![0.0; policy.net.params().len()];
                let t_max = e.decisions.len();
                for (t, d) in e.decisions.iter().enumerate() {
                    let ret = cfg.discount.powi((t_max - 1 - t) as i32) * e.reward;
                    policy.accumulate_gradient(env.embeddings, d, ret - baseline, cfg.entropy_weight, &mut g);
                }
                g
            })
            .collect();
        let mut total = vec![0.0; policy.net.params().len()];
        for g in &grads {
            for (t, x) in total.iter_mut().zip(g) {
                *t += x;
            }
        }
        for t in &mut total {
            *t /= batch as f64;
        }
        opt.step(policy.net.params_mut(), &total);
        baseline = cfg.baseline_decay * baseline + (1.0 - cfg.baseline_decay) * mean_reward;

        for e in &episodes {
            if e.final_state.step() == env.config.hops && env.graph.is_product(e.final_state.current) {
                if let Some(ty) = e.final_state.history.last().map(|h| h.relation) {
                    seen.entry(e.user).or_default().insert(ty);
                }
            }
        }
    }
    Ok((policy, log))
}
