//! Per-shard classifiers: SGC (linear softmax on propagated features) and a
//! two-layer mean-aggregation message-passing network.

mod io;
mod net;

pub use io::{read_model, write_model};
pub use net::sgc_propagate;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GuideError, Result};
use crate::graph::{Adjacency, LabeledGraph};
use crate::repair::RepairedSubgraph;
use net::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sgc,
    MeanGnn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Sgc => "sgc",
            ModelKind::MeanGnn => "meangnn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = GuideError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgc" => Ok(ModelKind::Sgc),
            "meangnn" => Ok(ModelKind::MeanGnn),
            other => Err(GuideError::Argument(format!(
                "unknown model {other:?} (expected sgc or meangnn)"
            ))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    /// SGC propagation steps.
    pub k: usize,
    /// Hidden width of the mean-aggregation network.
    pub hidden: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            learning_rate: 0.01,
            epochs: 200,
            weight_decay: 5e-4,
            k: 2,
            hidden: 64,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GuideError::Argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(GuideError::Argument(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.k == 0 {
            return Err(GuideError::Argument("SGC needs at least one propagation step".into()));
        }
        if self.hidden == 0 {
            return Err(GuideError::Argument("hidden width must be positive".into()));
        }
        Ok(())
    }
}

/// Model parameters. Tensors are `[W, b]` for SGC and `[W1, b1, W2, b2]`
/// for the mean network, biases stored as `1 x out` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub seed: u64,
    pub hyper: Hyper,
    pub tensors: Vec<DMatrix<f64>>,
    /// Training loss after the last epoch; `None` when untrained.
    pub final_loss: Option<f64>,
}

impl ModelParams {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights and zero biases.
    pub fn init(
        kind: ModelKind,
        feature_dim: usize,
        num_classes: usize,
        hyper: Hyper,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if feature_dim == 0 || num_classes == 0 {
            return Err(GuideError::Argument(format!(
                "model needs positive feature and class counts, got {feature_dim} and {num_classes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weight = |rows: usize, cols: usize| {
            let bound = 1.0 / (rows as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
        };
        let tensors = match kind {
            ModelKind::Sgc => vec![weight(feature_dim, num_classes), DMatrix::zeros(1, num_classes)],
            ModelKind::MeanGnn => {
                let w1 = weight(2 * feature_dim, hyper.hidden);
                let w2 = weight(2 * hyper.hidden, num_classes);
                vec![w1, DMatrix::zeros(1, hyper.hidden), w2, DMatrix::zeros(1, num_classes)]
            }
        };
        Ok(ModelParams {
            kind,
            seed,
            hyper,
            tensors,
            final_loss: None,
        })
    }

    pub fn feature_dim(&self) -> usize {
        match self.kind {
            ModelKind::Sgc => self.tensors[0].nrows(),
            ModelKind::MeanGnn => self.tensors[0].nrows() / 2,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.tensors.last().map_or(0, |b| b.ncols())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Checks tensor shapes against the kind and each other.
    pub fn validate_shapes(&self) -> Result<()> {
        let shapes: Vec<(usize, usize)> = self.tensors.iter().map(|t| t.shape()).collect();
        let ok = match (self.kind, shapes.as_slice()) {
            (ModelKind::Sgc, [(d, h), (1, h2)]) => *d > 0 && h == h2,
            (ModelKind::MeanGnn, [(d2, hid), (1, hid1), (hid2, h), (1, h2)]) => {
                d2 % 2 == 0 && *d2 > 0 && hid == hid1 && *hid2 == 2 * hid && h == h2 && *hid == self.hyper.hidden
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(GuideError::Validation(format!(
                "inconsistent {} tensor shapes {shapes:?}",
                self.kind
            )))
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Row-stochastic class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: DMatrix<f64>,
}

impl Prediction {
    /// Arg-max class per row; ties go to the lowest class id.
    pub fn classes(&self) -> Vec<usize> {
        self.probs
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Model inputs for one graph: adjacency and features, SGC features already
/// propagated.
struct Prepared {
    adj: Adjacency,
    x: DMatrix<f64>,
}

impl Prepared {
    fn new(kind: ModelKind, hyper: &Hyper, adj: Adjacency, features: &DMatrix<f64>) -> Self {
        let x = match kind {
            ModelKind::Sgc => sgc_propagate(&adj, features, hyper.k),
            ModelKind::MeanGnn => features.clone(),
        };
        Prepared { adj, x }
    }

    fn batch(&self) -> Batch<'_> {
        Batch {
            adj: &self.adj,
            x: &self.x,
        }
    }
}

fn check_inputs(params: &ModelParams, rs: &RepairedSubgraph) -> Result<Vec<Option<usize>>> {
    params.validate_shapes()?;
    if rs.feature_dim() != params.feature_dim() {
        return Err(GuideError::Argument(format!(
            "shard {} has {} features, model expects {}",
            rs.shard_id,
            rs.feature_dim(),
            params.feature_dim()
        )));
    }
    let targets = rs.local_labels();
    let real: Vec<usize> = targets.iter().flatten().copied().collect();
    if real.is_empty() {
        return Err(GuideError::Argument(format!("shard {} has no real nodes", rs.shard_id)));
    }
    if let Some(&c) = real.iter().find(|&&c| c >= params.num_classes()) {
        return Err(GuideError::Argument(format!(
            "shard {} has label {c} but the model has {} classes",
            rs.shard_id,
            params.num_classes()
        )));
    }
    if real.iter().all(|&c| c == real[0]) {
        log::warn!(
            "shard {}: every real node has class {}; the model will learn a constant",
            rs.shard_id,
            real[0]
        );
    }
    Ok(targets)
}

/// Outcome of [`train_shard_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub params: ModelParams,
    /// Loss before each update step.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent on the masked loss. Synthetic nodes take part
/// in propagation but carry no target.
pub fn train_shard(rs: &RepairedSubgraph, params0: &ModelParams) -> Result<ModelParams> {
    Ok(train_shard_traced(rs, params0)?.params)
}

pub fn train_shard_traced(rs: &RepairedSubgraph, params0: &ModelParams) -> Result<TrainReport> {
    let targets = check_inputs(params0, rs)?;
    let prepared = Prepared::new(params0.kind, &params0.hyper, rs.adjacency(), &rs.features);
    let batch = prepared.batch();
    let mut params = params0.clone();
    let lr = params.hyper.learning_rate;
    let mut losses = Vec::with_capacity(params.hyper.epochs);
    for epoch in 0..params.hyper.epochs {
        let (value, grads) = net::loss_and_grad(&params, &batch, &targets);
        losses.push(value);
        for (t, g) in params.tensors.iter_mut().zip(&grads) {
            *t -= g * lr;
        }
        if !params.is_finite() {
            return Err(GuideError::Numerical(format!(
                "shard {} parameters became non-finite at epoch {epoch}",
                rs.shard_id
            )));
        }
    }
    params.final_loss = Some(net::loss(&params, &batch, &targets));
    Ok(TrainReport { params, losses })
}

/// Masked training loss of `params` on a shard.
pub fn shard_loss(rs: &RepairedSubgraph, params: &ModelParams) -> Result<f64> {
    let targets = check_inputs(params, rs)?;
    let prepared = Prepared::new(params.kind, &params.hyper, rs.adjacency(), &rs.features);
    Ok(net::loss(params, &prepared.batch(), &targets))
}

/// Largest relative error between the analytic gradient and central finite
/// differences, over at most 50 parameters picked with the model seed.
pub fn grad_check(params: &ModelParams, rs: &RepairedSubgraph, epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(GuideError::Argument(format!(
            "epsilon must lie in [1e-7, 1e-3], got {epsilon}"
        )));
    }
    let targets = check_inputs(params, rs)?;
    let prepared = Prepared::new(params.kind, &params.hyper, rs.adjacency(), &rs.features);
    let batch = prepared.batch();
    let (_, grads) = net::loss_and_grad(params, &batch, &targets);

    let total = params.parameter_count();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let picks = sample(&mut rng, total, total.min(50));
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for flat in picks.iter() {
        let (mut t, mut i) = (0, flat);
        while i >= probe.tensors[t].len() {
            i -= probe.tensors[t].len();
            t += 1;
        }
        let original = probe.tensors[t][i];
        probe.tensors[t][i] = original + epsilon;
        let plus = net::loss(&probe, &batch, &targets);
        probe.tensors[t][i] = original - epsilon;
        let minus = net::loss(&probe, &batch, &targets);
        probe.tensors[t][i] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = grads[t][i];
        let scale = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / scale);
    }
    Ok(worst)
}

/// Inference on an unseen graph with its own edges.
pub fn predict_on(params: &ModelParams, adj: &Adjacency, features: &DMatrix<f64>) -> Result<Prediction> {
    params.validate_shapes()?;
    if features.ncols() != params.feature_dim() || features.nrows() != adj.node_count() {
        return Err(GuideError::Argument(format!(
            "test features are {}x{}, model expects {} columns on {} nodes",
            features.nrows(),
            features.ncols(),
            params.feature_dim(),
            adj.node_count()
        )));
    }
    let prepared = Prepared::new(params.kind, &params.hyper, adj.clone(), features);
    Ok(Prediction {
        probs: net::softmax(&net::forward(params, &prepared.batch())),
    })
}

pub fn predict(params: &ModelParams, test: &LabeledGraph) -> Result<Prediction> {
    predict_on(params, test.adjacency(), test.features())
}

/// `sum_i w_i * preds_i`.
pub fn aggregate_predictions(preds: &[Prediction], weights: &[f64]) -> Result<Prediction> {
    let first = preds
        .first()
        .ok_or_else(|| GuideError::Argument("no predictions to aggregate".into()))?;
    if preds.len() != weights.len() {
        return Err(GuideError::Argument(format!(
            "{} predictions but {} weights",
            preds.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(GuideError::Argument(format!("weights must form a distribution, got {weights:?}")));
    }
    let shape = first.probs.shape();
    let mut probs = DMatrix::zeros(shape.0, shape.1);
    for (p, &w) in preds.iter().zip(weights) {
        if p.probs.shape() != shape {
            return Err(GuideError::Argument(format!(
                "prediction shapes differ: {:?} vs {shape:?}",
                p.probs.shape()
            )));
        }
        probs += &p.probs * w;
    }
    Ok(Prediction { probs })
}
