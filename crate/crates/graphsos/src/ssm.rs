//! Subgraph sampling: attention-guided random walks around a target node,
//! subgraph scoring, the squared-error sampling loss, scoring-data
//! construction, and a score-function policy-gradient training loop over the
//! attention projections.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    apply_update, multihead_grad, multihead_weights, AttentionParams, WeightVector,
};
use crate::backend::{ScoreResult, ScoringOracle};
use crate::encoder::{Embedding, Encoder};
use crate::error::{Error, Result};
use crate::graph::{
    induced_subgraph, k_hop_neighborhood, LabelAssignment, NodeId, TextGraph,
};
use crate::serialize::{
    default_kind, identity_ordering, random_ordering, serialize, SerializedGraph,
};

/// Walk configuration: node budget, hop radius of the attention
/// neighborhood, restart-at-target behavior, and the walk seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleConfig {
    pub n_max: usize,
    pub k: usize,
    pub restart: bool,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { n_max: 20, k: 2, restart: true, seed: 0 }
    }
}

/// One walk transition: the node the walk stood at, the neighbor it chose,
/// that neighbor's index into the attention weight vector, and the log of
/// the renormalized probability actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStep {
    pub from: NodeId,
    pub chosen: NodeId,
    pub weight_index: usize,
    pub log_prob: f64,
}

/// A sampled subgraph plus the transition log needed for gradient
/// estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub subgraph: TextGraph,
    pub steps: Vec<SampleStep>,
    /// The k-hop neighborhood of the target, sorted; aligns with
    /// `attention`.
    pub neighborhood: Vec<NodeId>,
    /// Attention weights over `neighborhood`, computed once against the
    /// target.
    pub attention: WeightVector,
    /// Set when the walk stopped because no candidate remained anywhere it
    /// could reach, rather than by filling `n_max`.
    pub exhausted: bool,
}

/// Attention-guided random walk around `v`.
///
/// The multi-head attention weights are computed once, target against its
/// k-hop neighborhood. The walk starts at `v` and repeatedly moves to an
/// unvisited in-neighborhood neighbor of the current node with probability
/// proportional to its attention weight (renormalized over the current
/// candidates); when stuck it restarts at `v` (if configured), and it stops
/// at `n_max` visited nodes or when no candidate is reachable. The returned
/// subgraph is induced on the visited set, so an isolated target yields the
/// singleton subgraph with the `exhausted` marker rather than an error.
pub fn sample_subgraph(
    graph: &TextGraph,
    v: NodeId,
    params: &AttentionParams,
    encoder: &dyn Encoder,
    cfg: &SampleConfig,
) -> Result<SampleTrace> {
    if !graph.contains_node(v) {
        return Err(Error::UnknownNode(v));
    }
    let neighborhood: Vec<NodeId> = k_hop_neighborhood(graph, v, cfg.k)?.into_iter().collect();
    let weight_index: BTreeMap<NodeId, usize> =
        neighborhood.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let attention = if neighborhood.is_empty() {
        Vec::new()
    } else {
        let target_emb = encoder.embed(graph.node_text(v))?;
        let neighbor_embs: Vec<Embedding> = neighborhood
            .iter()
            .map(|&id| encoder.embed(graph.node_text(id)))
            .collect::<Result<_>>()?;
        multihead_weights(params, &target_emb, &neighbor_embs)?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut visited: BTreeSet<NodeId> = BTreeSet::from([v]);
    let mut steps = Vec::new();
    let mut exhausted = false;
    let mut current = v;

    while visited.len() < cfg.n_max.max(1) {
        let candidates: Vec<usize> = graph
            .neighbors(current)
            .iter()
            .filter(|id| !visited.contains(id))
            .filter_map(|id| weight_index.get(id).copied())
            .collect();
        if candidates.is_empty() {
            if cfg.restart && current != v {
                current = v;
                continue;
            }
            exhausted = true;
            break;
        }
        let mass: f64 = candidates.iter().map(|&i| attention[i]).sum();
        let draw = rng.gen::<f64>() * mass;
        let mut acc = 0.0;
        let mut chosen_idx = *candidates.last().expect("non-empty");
        for &i in &candidates {
            acc += attention[i];
            if draw < acc {
                chosen_idx = i;
                break;
            }
        }
        let chosen = neighborhood[chosen_idx];
        let prob = attention[chosen_idx] / mass;
        steps.push(SampleStep {
            from: current,
            chosen,
            weight_index: chosen_idx,
            log_prob: prob.ln(),
        });
        visited.insert(chosen);
        current = chosen;
    }

    Ok(SampleTrace {
        subgraph: induced_subgraph(graph, &visited),
        steps,
        neighborhood,
        attention,
        exhausted,
    })
}

/// Sampling loss `(1/T) (1 - p1)^2`; monotonically decreasing in `p1`.
pub fn ssm_loss(p1: f64, temperature: f64) -> f64 {
    (1.0 - p1).powi(2) / temperature
}

/// Score a serialized subgraph through an oracle.
pub fn score_subgraph(
    serialized: &SerializedGraph,
    oracle: &dyn ScoringOracle,
) -> Result<ScoreResult> {
    oracle.score(&serialized.text)
}

/// Labeled scoring instances plus how far short each polarity fell of the
/// requested count.
#[derive(Debug, Clone)]
pub struct ScoringExampleSet {
    /// `(serialized subgraph, label)` with label 1 for homophilous
    /// instances, 0 for heterophilous ones.
    pub instances: Vec<(SerializedGraph, u8)>,
    pub positive_shortfall: usize,
    pub negative_shortfall: usize,
}

/// Default number of instances requested per polarity.
pub const DEFAULT_SCORING_INSTANCES: usize = 500;

const POSITIVE_THRESHOLD: f64 = 0.8;
const NEGATIVE_THRESHOLD: f64 = 0.2;
const GROWTH_CAP: usize = 16;

/// Build scoring-model training data: for random target nodes, grow a
/// subgraph inside the 2-hop context greedily preferring same-label
/// (positive) or cross-label (negative) neighbors until edge homophily
/// reaches 0.8 / falls to 0.2; targets where the threshold is unreachable
/// are skipped. Deterministic per seed.
pub fn build_scoring_examples(
    graphs: &[TextGraph],
    count: usize,
    seed: u64,
) -> Result<ScoringExampleSet> {
    if graphs.is_empty() {
        return Err(Error::InvalidParameter("no input graphs".into()));
    }
    let labels: Vec<LabelAssignment> = graphs
        .iter()
        .map(TextGraph::label_assignment)
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::new();
    let mut shortfalls = [0usize; 2];

    for (polarity, want_high) in [(1u8, true), (0u8, false)] {
        let mut got = 0;
        let mut attempts = 0;
        let budget = count.saturating_mul(50).max(200);
        while got < count && attempts < budget {
            attempts += 1;
            let gi = rng.gen_range(0..graphs.len());
            let graph = &graphs[gi];
            if graph.node_count() == 0 {
                continue;
            }
            let v = graph.nodes()[rng.gen_range(0..graph.node_count())].id;
            let Some(keep) = grow_polarized(graph, &labels[gi], v, want_high) else {
                continue;
            };
            let sub = induced_subgraph(graph, &keep);
            let ordering = random_ordering(&sub, rng.gen());
            let serialized = serialize(&sub, &ordering, default_kind(&sub))?;
            instances.push((serialized, polarity));
            got += 1;
        }
        shortfalls[polarity as usize] = count - got;
    }

    Ok(ScoringExampleSet {
        instances,
        positive_shortfall: shortfalls[1],
        negative_shortfall: shortfalls[0],
    })
}

/// Greedy growth inside the 2-hop context of `v`: repeatedly add the
/// candidate whose addition moves induced homophily furthest in the wanted
/// direction (ties broken by lowest id) until the threshold is met.
fn grow_polarized(
    graph: &TextGraph,
    labels: &LabelAssignment,
    v: NodeId,
    want_high: bool,
) -> Option<BTreeSet<NodeId>> {
    let context = k_hop_neighborhood(graph, v, 2).ok()?;
    let mut sub: BTreeSet<NodeId> = BTreeSet::from([v]);
    let mut same_edges = 0usize;
    let mut total_edges = 0usize;

    loop {
        if total_edges > 0 {
            let h = same_edges as f64 / total_edges as f64;
            if (want_high && h >= POSITIVE_THRESHOLD) || (!want_high && h <= NEGATIVE_THRESHOLD) {
                return Some(sub);
            }
        }
        if sub.len() >= GROWTH_CAP {
            return None;
        }

        let mut best: Option<(f64, NodeId, usize, usize)> = None;
        for &cand in &context {
            if sub.contains(&cand) {
                continue;
            }
            let cand_label = labels.get(cand)?;
            let mut add_same = 0;
            let mut add_total = 0;
            for nb in graph.neighbors(cand) {
                if sub.contains(nb) {
                    add_total += 1;
                    if labels.get(*nb) == Some(cand_label) {
                        add_same += 1;
                    }
                }
            }
            if add_total == 0 {
                continue;
            }
            let h = (same_edges + add_same) as f64 / (total_edges + add_total) as f64;
            let better = match &best {
                None => true,
                Some((best_h, ..)) => {
                    if want_high {
                        h > *best_h
                    } else {
                        h < *best_h
                    }
                }
            };
            if better {
                best = Some((h, cand, add_same, add_total));
            }
        }
        let (_, cand, add_same, add_total) = best?;
        sub.insert(cand);
        same_edges += add_same;
        total_edges += add_total;
    }
}

/// Training-loop configuration for [`train_ssm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsmTrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Loss temperature `T`.
    pub temperature: f64,
    /// Decay of the exponential moving-average reward baseline.
    pub baseline_decay: f64,
    pub n_max: usize,
    pub k: usize,
    pub restart: bool,
    pub seed: u64,
}

impl Default for SsmTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 25.0,
            temperature: 5.0,
            baseline_decay: 0.9,
            n_max: 20,
            k: 2,
            restart: true,
            seed: 0,
        }
    }
}

/// Trained parameters plus the per-step loss curve.
#[derive(Debug, Clone)]
pub struct SsmTrainReport {
    pub params: AttentionParams,
    pub losses: Vec<f64>,
    /// Steps skipped because the sampled trace had no transitions to take a
    /// gradient through.
    pub skipped: usize,
}

/// Memoizes encoder calls per distinct text; node texts repeat heavily
/// inside a training loop.
struct CachedEncoder<'a> {
    inner: &'a dyn Encoder,
    cache: RefCell<HashMap<String, Embedding>>,
}

impl<'a> CachedEncoder<'a> {
    fn new(inner: &'a dyn Encoder) -> Self {
        Self { inner, cache: RefCell::new(HashMap::new()) }
    }
}

impl Encoder for CachedEncoder<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        if let Some(hit) = self.cache.borrow().get(text) {
            return Ok(hit.clone());
        }
        let value = self.inner.embed(text)?;
        self.cache.borrow_mut().insert(text.to_string(), value.clone());
        Ok(value)
    }
}

/// Score-function (policy-gradient) training of the sampling attention.
///
/// Per step: sample a trace for a random target, score the serialized
/// subgraph, take reward `R = -ssm_loss(p1, T)`, and ascend
/// `(R - b) * grad(sum of step log-probabilities)` where `b` is an
/// exponential moving average of the reward. The gradient flows through the
/// per-step renormalization into the attention projections and is clipped
/// at global norm 1.
pub fn train_ssm(
    params: AttentionParams,
    graphs: &[TextGraph],
    oracle: &dyn ScoringOracle,
    encoder: &dyn Encoder,
    cfg: &SsmTrainConfig,
) -> Result<SsmTrainReport> {
    if cfg.steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    if cfg.lr < 0.0 {
        return Err(Error::InvalidParameter("learning rate must be non-negative".into()));
    }
    if graphs.is_empty() {
        return Err(Error::InvalidParameter("no input graphs".into()));
    }
    let encoder = CachedEncoder::new(encoder);
    let mut params = params;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut baseline: Option<f64> = None;
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut skipped = 0usize;

    for step in 0..cfg.steps {
        let graph = &graphs[rng.gen_range(0..graphs.len())];
        let v = graph.nodes()[rng.gen_range(0..graph.node_count())].id;
        let sample_cfg = SampleConfig {
            n_max: cfg.n_max,
            k: cfg.k,
            restart: cfg.restart,
            seed: rng.gen(),
        };
        let trace = sample_subgraph(graph, v, &params, &encoder, &sample_cfg)?;
        if trace.steps.is_empty() {
            skipped += 1;
            continue;
        }

        let serialized =
            serialize(&trace.subgraph, &identity_ordering(&trace.subgraph), default_kind(&trace.subgraph))?;
        let score = oracle.score(&serialized.text)?;
        let loss = ssm_loss(score.p1, cfg.temperature);
        let reward = -loss;
        let b = baseline.unwrap_or(reward);
        let advantage = reward - b;
        baseline = Some(cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * reward);
        losses.push(loss);

        // d(sum of log-probs)/d(weights), replaying each step's candidate set.
        let mut upstream = vec![0.0; trace.attention.len()];
        let index: BTreeMap<NodeId, usize> =
            trace.neighborhood.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut visited: BTreeSet<NodeId> = BTreeSet::from([v]);
        for s in &trace.steps {
            let candidates: Vec<usize> = graph
                .neighbors(s.from)
                .iter()
                .filter(|id| !visited.contains(id))
                .filter_map(|id| index.get(id).copied())
                .collect();
            let mass: f64 = candidates.iter().map(|&i| trace.attention[i]).sum();
            upstream[s.weight_index] += 1.0 / trace.attention[s.weight_index];
            for &i in &candidates {
                upstream[i] -= 1.0 / mass;
            }
            visited.insert(s.chosen);
        }

        let target_emb = encoder.embed(graph.node_text(v))?;
        let neighbor_embs: Vec<Embedding> = trace
            .neighborhood
            .iter()
            .map(|&id| encoder.embed(graph.node_text(id)))
            .collect::<Result<_>>()?;
        let mut grads = multihead_grad(&params, &target_emb, &neighbor_embs, &upstream)?;
        grads.scale(advantage);
        let norm = grads.norm();
        if !grads.is_finite() || !norm.is_finite() {
            return Err(Error::NonFinite(format!(
                "ssm gradient at step {step} (target {v}, advantage {advantage})"
            )));
        }
        if norm > 1.0 {
            grads.scale(1.0 / norm);
        }
        apply_update(&mut params, &grads, cfg.lr);
    }

    Ok(SsmTrainReport { params, losses, skipped })
}

/// Fraction of non-target subgraph nodes sharing the target's label; `None`
/// for a singleton subgraph or an unlabeled target.
pub fn same_class_proportion(
    subgraph: &TextGraph,
    v: NodeId,
    labels: &LabelAssignment,
) -> Option<f64> {
    let target_label = labels.get(v)?;
    let mut same = 0usize;
    let mut total = 0usize;
    for node in subgraph.nodes() {
        if node.id == v {
            continue;
        }
        total += 1;
        if labels.get(node.id) == Some(target_label) {
            same += 1;
        }
    }
    if total == 0 {
        None
    } else {
        Some(same as f64 / total as f64)
    }
}
