//! Sharded training and unlearning.
//!
//! [`train_all`] partitions the training graph, repairs and trains every
//! shard. Unlearning requests update the graph and the degree record, shrink
//! the affected shards and retrain them from their stored seeds; all other
//! shards are left untouched. The partition is fixed for the life of a state.

mod config;
mod metrics;
mod store;

pub use config::{EngineConfig, Partitioner, UnlearnMode};
pub use metrics::{classification_metrics, ClassificationMetrics};
pub use store::{append_audit, load_state, save_state, AuditEntry, FORMAT_VERSION};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{GuideError, Result};
use crate::graph::io::format_edges;
use crate::graph::{DegreeRecord, LabeledGraph, Partition};
use crate::kernel::{eigen_embedding, shard_kernels, EigenEmbedding, ShardWeights};
use crate::model::{aggregate_predictions, predict, train_shard, ModelParams, Prediction};
use crate::partition::{gpfb_fast, gpfb_sr, random_partition, GpfbConfig};
use crate::repair::{induced_subgraph, repair, shrink_after_unlearn, RepairedSubgraph};

/// One shard: its repaired subgraph, trained model and training seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardState {
    pub repaired: RepairedSubgraph,
    pub model: ModelParams,
    pub seed: u64,
}

/// Kernel values of every shard against one reference (test) graph.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelReference {
    pub embedding: EigenEmbedding,
    /// Hash of the reference graph's structure.
    pub fingerprint: String,
    pub weights: ShardWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub graph: LabeledGraph,
    pub partition: Partition,
    pub degree_record: DegreeRecord,
    pub shards: Vec<ShardState>,
    pub reference: Option<KernelReference>,
    pub config: EngineConfig,
    pub revision: u64,
    pub unlearned_nodes: BTreeSet<usize>,
    pub unlearned_edges: BTreeSet<(usize, usize)>,
    pub unlearned_features: BTreeSet<usize>,
}

impl EnsembleState {
    pub fn num_shards(&self) -> usize {
        self.shards.len()
    }

    /// Importance weights: normalized kernel values once a reference is set,
    /// uniform before.
    pub fn weights(&self) -> Vec<f64> {
        match &self.reference {
            Some(r) => r.weights.weights.clone(),
            None => uniform_weights(&self.shards),
        }
    }

    pub fn raw_kernels(&self) -> Option<&[f64]> {
        self.reference.as_ref().map(|r| r.weights.raw.as_slice())
    }
}

/// Seeds for each shard's model, drawn from the global seed.
pub fn shard_seeds(seed: u64, v: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_4152_4453_4545);
    (0..v).map(|_| rng.random()).collect()
}

/// Runs the configured partitioner.
pub fn partition_graph(g: &LabeledGraph, config: &EngineConfig) -> Result<Partition> {
    let gpfb = GpfbConfig {
        seed: config.seed,
        ..config.gpfb.clone()
    };
    match config.partitioner {
        Partitioner::Fast => gpfb_fast(g, config.num_shards, &gpfb),
        Partitioner::Sr => gpfb_sr(g, config.num_shards, &gpfb),
        Partitioner::Random => random_partition(g.node_count(), config.num_shards, config.seed),
    }
}

fn build_shard(
    p: &Partition,
    g: &LabeledGraph,
    rec: &DegreeRecord,
    config: &EngineConfig,
    shard: usize,
) -> Result<RepairedSubgraph> {
    match config.strategy {
        Some(s) => repair(p, g, rec, shard, s, config.tau, config.seed),
        None => induced_subgraph(p, g, shard),
    }
}

/// A shard emptied by unlearning keeps its untrained initial model; it has
/// zero kernel similarity to any graph and so carries no weight.
fn fit(rs: &RepairedSubgraph, g: &LabeledGraph, config: &EngineConfig, seed: u64) -> Result<ModelParams> {
    let init = ModelParams::init(config.model, g.feature_dim(), g.num_classes(), config.hyper, seed)?;
    if rs.real_count() == 0 {
        return Ok(init);
    }
    train_shard(rs, &init)
}

/// Uniform weights over the shards that still hold real nodes.
fn uniform_weights(shards: &[ShardState]) -> Vec<f64> {
    let live: Vec<bool> = shards.iter().map(|s| s.repaired.real_count() > 0).collect();
    let count = live.iter().filter(|&&l| l).count().max(1);
    live.iter().map(|&l| if l { 1.0 / count as f64 } else { 0.0 }).collect()
}

/// Repairs and trains every shard of a fixed partition.
pub fn train_with_partition(g: &LabeledGraph, partition: Partition, config: &EngineConfig) -> Result<EnsembleState> {
    config.validate()?;
    if partition.node_count() != g.node_count() || partition.num_shards() != config.num_shards {
        return Err(GuideError::Validation(format!(
            "partition covers {} nodes in {} shards, graph has {} nodes and the config asks for {} shards",
            partition.node_count(),
            partition.num_shards(),
            g.node_count(),
            config.num_shards
        )));
    }
    if let Some(s) = partition.first_empty_shard() {
        return Err(GuideError::Validation(format!("shard {s} is empty")));
    }
    let rec = DegreeRecord::from_graph(g);
    let seeds = shard_seeds(config.seed, config.num_shards);
    let shards = seeds
        .par_iter()
        .enumerate()
        .map(|(s, &seed)| {
            let repaired = build_shard(&partition, g, &rec, config, s)?;
            let model = fit(&repaired, g, config, seed)?;
            Ok(ShardState { repaired, model, seed })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleState {
        graph: g.clone(),
        partition,
        degree_record: rec,
        shards,
        reference: None,
        config: config.clone(),
        revision: 0,
        unlearned_nodes: BTreeSet::new(),
        unlearned_edges: BTreeSet::new(),
        unlearned_features: BTreeSet::new(),
    })
}

/// Partition, repair and train from scratch.
pub fn train_all(g: &LabeledGraph, config: &EngineConfig) -> Result<EnsembleState> {
    config.validate()?;
    let partition = partition_graph(g, config)?;
    train_with_partition(g, partition, config)
}

/// Re-partitions the current graph and retrains every shard from it.
/// Unlearned nodes stay detached. The result is not comparable
/// shard-by-shard with the previous state.
pub fn repartition(state: &EnsembleState) -> Result<EnsembleState> {
    let mut next = train_all(&state.graph, &state.config)?;
    next.unlearned_nodes = state.unlearned_nodes.clone();
    next.unlearned_edges = state.unlearned_edges.clone();
    next.unlearned_features = state.unlearned_features.clone();
    next.revision = state.revision + 1;
    if let Some(r) = &state.reference {
        let raw = shard_kernels(&r.embedding, &repaired_list(&next), next.config.shard_view, next.config.max_level)?;
        next.reference = Some(KernelReference {
            embedding: r.embedding.clone(),
            fingerprint: r.fingerprint.clone(),
            weights: ShardWeights::from_raw(raw),
        });
    }
    Ok(next)
}

fn repaired_list(state: &EnsembleState) -> Vec<RepairedSubgraph> {
    state.shards.iter().map(|s| s.repaired.clone()).collect()
}

/// Structural hash of a graph, used to recognize a cached reference.
pub fn graph_fingerprint(g: &LabeledGraph) -> String {
    let mut h = Sha256::new();
    h.update(g.node_count().to_le_bytes());
    h.update(format_edges(&g.adjacency().edges()).as_bytes());
    hex::encode(h.finalize())
}

/// Computes and stores every shard's kernel value against `test`. Bumps
/// the revision.
pub fn set_reference(state: &mut EnsembleState, test: &LabeledGraph) -> Result<()> {
    let embedding = eigen_embedding(test.adjacency(), state.config.d_emb)?;
    let raw = shard_kernels(&embedding, &repaired_list(state), state.config.shard_view, state.config.max_level)?;
    state.reference = Some(KernelReference {
        embedding,
        fingerprint: graph_fingerprint(test),
        weights: ShardWeights::from_raw(raw),
    });
    state.revision += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnlearnRequest {
    Node(usize),
    Edge(usize, usize),
    Feature(usize),
}

impl UnlearnRequest {
    pub fn kind(&self) -> &'static str {
        match self {
            UnlearnRequest::Node(_) => "node",
            UnlearnRequest::Edge(..) => "edge",
            UnlearnRequest::Feature(_) => "feature",
        }
    }

    pub fn ids(&self) -> Vec<usize> {
        match *self {
            UnlearnRequest::Node(u) | UnlearnRequest::Feature(u) => vec![u],
            UnlearnRequest::Edge(u, v) => vec![u.min(v), u.max(v)],
        }
    }
}

impl fmt::Display for UnlearnRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            UnlearnRequest::Node(u) => write!(f, "node {u}"),
            UnlearnRequest::Edge(u, v) => write!(f, "edge {u}-{v}"),
            UnlearnRequest::Feature(u) => write!(f, "feature {u}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlearnReport {
    pub revision: u64,
    pub retrained: Vec<usize>,
    pub elapsed: Duration,
}

fn check_node(state: &EnsembleState, u: usize) -> Result<()> {
    if u >= state.graph.node_count() {
        return Err(GuideError::Request(format!(
            "node {u} does not exist (graph has {} nodes)",
            state.graph.node_count()
        )));
    }
    if state.unlearned_nodes.contains(&u) {
        return Err(GuideError::Request(format!("node {u} is already unlearned")));
    }
    Ok(())
}

fn validate_request(state: &EnsembleState, req: &UnlearnRequest) -> Result<()> {
    match *req {
        UnlearnRequest::Node(u) => check_node(state, u),
        UnlearnRequest::Feature(u) => {
            check_node(state, u)?;
            if state.unlearned_features.contains(&u) {
                return Err(GuideError::Request(format!("features of node {u} are already unlearned")));
            }
            Ok(())
        }
        UnlearnRequest::Edge(u, v) => {
            check_node(state, u)?;
            check_node(state, v)?;
            let key = (u.min(v), u.max(v));
            if state.unlearned_edges.contains(&key) {
                return Err(GuideError::Request(format!("edge {u}-{v} is already unlearned")));
            }
            if !state.graph.has_edge(u, v) {
                return Err(GuideError::Request(format!("edge {u}-{v} does not exist")));
            }
            Ok(())
        }
    }
}

/// Requests in one batch that touch the same node or edge.
fn conflicts(requests: &[UnlearnRequest]) -> Vec<String> {
    let mut nodes: BTreeMap<usize, Vec<UnlearnRequest>> = BTreeMap::new();
    let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for r in requests {
        match *r {
            UnlearnRequest::Node(u) | UnlearnRequest::Feature(u) => nodes.entry(u).or_default().push(*r),
            UnlearnRequest::Edge(u, v) => *edges.entry((u.min(v), u.max(v))).or_default() += 1,
        }
    }
    let mut out = Vec::new();
    for (u, rs) in &nodes {
        if rs.len() > 1 {
            out.push(format!("node {u} appears in {} requests", rs.len()));
        }
    }
    for (&(u, v), &count) in &edges {
        if count > 1 {
            out.push(format!("edge {u}-{v} appears {count} times"));
        }
        for end in [u, v] {
            if nodes.get(&end).is_some_and(|rs| rs.contains(&UnlearnRequest::Node(end))) {
                out.push(format!("edge {u}-{v} touches node {end}, which the batch also removes"));
            }
        }
    }
    out
}

/// Applies one request to graph and record, returning the shards to rebuild.
fn apply_delta(state: &mut EnsembleState, req: UnlearnRequest) -> BTreeSet<usize> {
    let p = &state.partition;
    let mut affected = BTreeSet::new();
    match req {
        UnlearnRequest::Node(u) => {
            let home = p.shard_of(u);
            affected.insert(home);
            let neighbors: Vec<usize> = state.graph.neighbors(u).collect();
            for w in neighbors {
                let strict = state.config.mode == UnlearnMode::Strict;
                if strict || p.shard_of(w) == home {
                    let d = &mut state.degree_record.original_degree[w];
                    *d = d.saturating_sub(1);
                    affected.insert(p.shard_of(w));
                }
            }
            state.degree_record.original_degree[u] = 0;
            state.graph = state.graph.without_node(u);
            state.unlearned_nodes.insert(u);
        }
        UnlearnRequest::Edge(u, v) => {
            for w in [u, v] {
                let d = &mut state.degree_record.original_degree[w];
                *d = d.saturating_sub(1);
                affected.insert(p.shard_of(w));
            }
            state.graph = state.graph.without_edge(u, v);
            state.unlearned_edges.insert((u.min(v), u.max(v)));
        }
        UnlearnRequest::Feature(u) => {
            affected.insert(p.shard_of(u));
            state.graph = state.graph.without_features(u);
            state.unlearned_features.insert(u);
        }
    }
    affected
}

/// Services one request. Equivalent to a batch of one.
pub fn unlearn(state: &EnsembleState, req: UnlearnRequest) -> Result<(EnsembleState, UnlearnReport)> {
    batch_unlearn(state, &[req])
}

/// Applies every request's graph and degree changes first, then shrinks and
/// retrains each affected shard once.
pub fn batch_unlearn(
    state: &EnsembleState,
    requests: &[UnlearnRequest],
) -> Result<(EnsembleState, UnlearnReport)> {
    let start = Instant::now();
    if requests.is_empty() {
        return Err(GuideError::Request("empty unlearning batch".into()));
    }
    let clashes = conflicts(requests);
    if !clashes.is_empty() {
        return Err(GuideError::Request(format!("conflicting requests: {}", clashes.join("; "))));
    }
    for r in requests {
        validate_request(state, r)?;
    }
    let mut next = state.clone();
    let mut affected = BTreeSet::new();
    let mut removed = BTreeSet::new();
    for &r in requests {
        if let UnlearnRequest::Node(u) = r {
            removed.insert(u);
        }
        affected.extend(apply_delta(&mut next, r));
    }
    let affected: Vec<usize> = affected.into_iter().collect();
    let rebuilt = affected
        .par_iter()
        .map(|&s| {
            let old = &next.shards[s];
            let repaired = shrink_after_unlearn(&old.repaired, &removed, &next.degree_record, &next.graph)?;
            let model = fit(&repaired, &next.graph, &next.config, old.seed)?;
            Ok(ShardState { repaired, model, seed: old.seed })
        })
        .collect::<Result<Vec<_>>>()?;
    for (&s, shard) in affected.iter().zip(rebuilt) {
        next.shards[s] = shard;
    }
    if let Some(mut reference) = next.reference.take() {
        let subset: Vec<RepairedSubgraph> = affected.iter().map(|&s| next.shards[s].repaired.clone()).collect();
        let raw = shard_kernels(&reference.embedding, &subset, next.config.shard_view, next.config.max_level)?;
        for (&s, k) in affected.iter().zip(raw) {
            reference.weights.update_single_weight(s, k)?;
        }
        next.reference = Some(reference);
    }
    next.revision += 1;
    let report = UnlearnReport {
        revision: next.revision,
        retrained: affected,
        elapsed: start.elapsed(),
    };
    Ok((next, report))
}

/// How shard predictions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Kernel-similarity importance weights.
    #[default]
    Similarity,
    /// Uniform average over non-empty shards.
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: ClassificationMetrics,
    pub per_shard_accuracy: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Similarity weights for `test`: the cached ones when `test` is the stored
/// reference, freshly computed (and not stored) otherwise.
pub fn weights_for(state: &EnsembleState, test: &LabeledGraph) -> Result<Vec<f64>> {
    if let Some(r) = &state.reference {
        if r.fingerprint == graph_fingerprint(test) {
            return Ok(r.weights.weights.clone());
        }
    }
    let embedding = eigen_embedding(test.adjacency(), state.config.d_emb)?;
    let raw = shard_kernels(&embedding, &repaired_list(state), state.config.shard_view, state.config.max_level)?;
    Ok(ShardWeights::from_raw(raw).weights)
}

fn check_test_graph(state: &EnsembleState, test: &LabeledGraph) -> Result<()> {
    if test.feature_dim() != state.graph.feature_dim() {
        return Err(GuideError::Argument(format!(
            "test graph has {} features, training graph {}",
            test.feature_dim(),
            state.graph.feature_dim()
        )));
    }
    if test.num_classes() > state.graph.num_classes() {
        return Err(GuideError::Argument(format!(
            "test graph has {} classes, models know {}",
            test.num_classes(),
            state.graph.num_classes()
        )));
    }
    Ok(())
}

/// Per-shard predictions on `test`.
pub fn shard_predictions(state: &EnsembleState, test: &LabeledGraph) -> Result<Vec<Prediction>> {
    check_test_graph(state, test)?;
    state.shards.par_iter().map(|s| predict(&s.model, test)).collect()
}

/// Ensemble accuracy and macro-F1 on a labeled test graph. Does not modify
/// the state.
pub fn evaluate(state: &EnsembleState, test: &LabeledGraph) -> Result<Evaluation> {
    evaluate_with(state, test, Aggregation::Similarity)
}

pub fn evaluate_with(state: &EnsembleState, test: &LabeledGraph, aggregation: Aggregation) -> Result<Evaluation> {
    let preds = shard_predictions(state, test)?;
    let weights = match aggregation {
        Aggregation::Similarity => weights_for(state, test)?,
        Aggregation::Average => uniform_weights(&state.shards),
    };
    let combined = aggregate_predictions(&preds, &weights)?;
    let h = state.graph.num_classes();
    let metrics = classification_metrics(test.labels(), &combined.classes(), h);
    let per_shard_accuracy = preds
        .iter()
        .map(|p| classification_metrics(test.labels(), &p.classes(), h).accuracy)
        .collect();
    Ok(Evaluation {
        metrics,
        per_shard_accuracy,
        weights,
    })
}
