//! Graph representation and the matrices derived from labels and partitions.
//!
//! A [`LabeledGraph`] is undirected, weighted and stored sparse as sorted
//! adjacency lists. Node ids are stable for the lifetime of a graph: removing
//! a node (unlearning) detaches it and zeroes its features but keeps its slot,
//! so partitions and degree records stay indexable by the original ids.

pub(crate) mod io;
mod sbm;

pub use io::{load_graph, save_graph};
pub use sbm::{generate_sbm, sbm_blocks, SbmParams};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GuideError, Result};

/// Dense views are only materialized below this node count unless a caller
/// passes its own limit.
pub const DEFAULT_DENSE_LIMIT: usize = 5_000;

/// Symmetric sparse adjacency with sorted neighbor lists and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Builds a symmetric adjacency. Self-loops are dropped, the first
    /// occurrence of a duplicated pair (in either orientation) wins.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut adj = Adjacency::empty(n);
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(GuideError::Validation(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(GuideError::Validation(format!(
                    "edge ({u}, {v}) has non-positive or non-finite weight {w}"
                )));
            }
            if u == v {
                continue;
            }
            if adj.weight(u, v).is_none() {
                adj.insert_sorted(u, v, w);
                adj.insert_sorted(v, u, w);
            }
        }
        Ok(adj)
    }

    fn insert_sorted(&mut self, u: usize, v: usize, w: f64) {
        let list = &mut self.neighbors[u];
        match list.binary_search_by_key(&v, |&(x, _)| x) {
            Ok(pos) => list[pos].1 = w,
            Err(pos) => list.insert(pos, (v, w)),
        }
    }

    fn remove_pair(&mut self, u: usize, v: usize) -> bool {
        let mut removed = false;
        for (a, b) in [(u, v), (v, u)] {
            let list = &mut self.neighbors[a];
            if let Ok(pos) = list.binary_search_by_key(&b, |&(x, _)| x) {
                list.remove(pos);
                removed = true;
            }
        }
        removed
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.neighbors[u]
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let list = &self.neighbors[u];
        list.binary_search_by_key(&v, |&(x, _)| x)
            .ok()
            .map(|pos| list[pos].1)
    }

    /// Unweighted degree.
    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn weighted_degree(&self, u: usize) -> f64 {
        self.neighbors[u].iter().map(|&(_, w)| w).sum()
    }

    pub fn weighted_degrees(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.node_count(),
            (0..self.node_count()).map(|u| self.weighted_degree(u)),
        )
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Coordinate triplets `(u, v, w)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (u, list) in self.neighbors.iter().enumerate() {
            for &(v, w) in list {
                if u < v {
                    out.push((u, v, w));
                }
            }
        }
        out
    }

    /// `W * x` for a dense block `x` with one row per node.
    pub fn matmul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, k) = x.shape();
        debug_assert_eq!(n, self.node_count());
        let mut out = DMatrix::zeros(n, k);
        for c in 0..k {
            let col = x.column(c);
            for (u, list) in self.neighbors.iter().enumerate() {
                let mut acc = 0.0;
                for &(v, w) in list {
                    acc += w * col[v];
                }
                out[(u, c)] = acc;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut m = DMatrix::zeros(n, n);
        for (u, list) in self.neighbors.iter().enumerate() {
            for &(v, w) in list {
                m[(u, v)] = w;
            }
        }
        m
    }
}

/// Undirected weighted graph with node features and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    adjacency: Adjacency,
    features: DMatrix<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    removed: Vec<bool>,
}

impl LabeledGraph {
    /// Validates and builds a graph. When `num_classes` is `None` it becomes
    /// `max(label) + 1` and every class in that range must be present; an
    /// explicit count allows absent classes (test graphs, small shards).
    pub fn new<I>(
        edges: I,
        features: DMatrix<f64>,
        labels: Vec<usize>,
        num_classes: Option<usize>,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let n = features.nrows();
        if labels.len() != n {
            return Err(GuideError::Validation(format!(
                "{} labels for {} feature rows",
                labels.len(),
                n
            )));
        }
        if n == 0 {
            return Err(GuideError::Validation("graph has no nodes".into()));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(GuideError::Validation("non-finite feature value".into()));
        }
        let h = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        let mut seen = vec![false; h];
        for (i, &y) in labels.iter().enumerate() {
            if y >= h {
                return Err(GuideError::Validation(format!(
                    "label {y} of node {i} is outside 0..{h}"
                )));
            }
            seen[y] = true;
        }
        if let (None, Some(missing)) = (num_classes, seen.iter().position(|s| !s)) {
            return Err(GuideError::Validation(format!(
                "class {missing} has no nodes"
            )));
        }
        let adjacency = Adjacency::from_edges(n, edges)?;
        Ok(LabeledGraph {
            adjacency,
            features,
            labels,
            num_classes: h,
            removed: vec![false; n],
        })
    }

    /// Rebuilds a persisted graph, including detached nodes. Class coverage is
    /// not re-checked because unlearning may legitimately empty a class.
    pub(crate) fn from_parts(
        adjacency: Adjacency,
        features: DMatrix<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        removed: Vec<bool>,
    ) -> Result<Self> {
        let n = adjacency.node_count();
        if features.nrows() != n || labels.len() != n || removed.len() != n {
            return Err(GuideError::Validation(
                "graph parts disagree on node count".into(),
            ));
        }
        if labels.iter().any(|&y| y >= num_classes) {
            return Err(GuideError::Validation("label out of range".into()));
        }
        for (u, &r) in removed.iter().enumerate() {
            if r && adjacency.degree(u) > 0 {
                return Err(GuideError::Validation(format!(
                    "removed node {u} still has edges"
                )));
            }
        }
        Ok(LabeledGraph {
            adjacency,
            features,
            labels,
            num_classes,
            removed,
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_row(&self, u: usize) -> Vec<f64> {
        self.features.row(u).iter().copied().collect()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_removed(&self, u: usize) -> bool {
        self.removed[u]
    }

    pub fn removed_mask(&self) -> &[bool] {
        &self.removed
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency.degree(u)
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.neighbors(u).iter().map(|&(v, _)| v)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count() && v < self.node_count() && self.adjacency.weight(u, v).is_some()
    }

    /// Node counts per class, i.e. `|C_s|`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Dense adjacency, refused above `limit` nodes.
    pub fn dense_adjacency(&self, limit: usize) -> Result<DMatrix<f64>> {
        if self.node_count() > limit {
            return Err(GuideError::Argument(format!(
                "dense view of {} nodes exceeds the limit of {limit}",
                self.node_count()
            )));
        }
        Ok(self.adjacency.to_dense())
    }

    /// Copy with `u` detached: edges dropped, features zeroed, slot kept.
    pub fn without_node(&self, u: usize) -> LabeledGraph {
        let mut g = self.clone();
        let nbrs: Vec<usize> = g.neighbors(u).collect();
        for v in nbrs {
            g.adjacency.remove_pair(u, v);
        }
        g.features.row_mut(u).fill(0.0);
        g.removed[u] = true;
        g
    }

    pub fn without_edge(&self, u: usize, v: usize) -> LabeledGraph {
        let mut g = self.clone();
        g.adjacency.remove_pair(u, v);
        g
    }

    pub fn without_features(&self, u: usize) -> LabeledGraph {
        let mut g = self.clone();
        g.features.row_mut(u).fill(0.0);
        g
    }

    /// Subgraph on `nodes`, relabeled `0..nodes.len()` in the given order.
    /// Keeps the class count.
    pub fn induced(&self, nodes: &[usize]) -> Result<LabeledGraph> {
        let mut local = vec![usize::MAX; self.node_count()];
        for (i, &u) in nodes.iter().enumerate() {
            if u >= self.node_count() || local[u] != usize::MAX {
                return Err(GuideError::Argument(format!("invalid or repeated node {u}")));
            }
            local[u] = i;
        }
        let mut edges = Vec::new();
        for (i, &u) in nodes.iter().enumerate() {
            for &(w, weight) in self.adjacency.neighbors(u) {
                let j = local[w];
                if j != usize::MAX && i < j {
                    edges.push((i, j, weight));
                }
            }
        }
        let features = DMatrix::from_fn(nodes.len(), self.feature_dim(), |r, c| self.features[(nodes[r], c)]);
        let labels = nodes.iter().map(|&u| self.labels[u]).collect();
        LabeledGraph::new(edges, features, labels, Some(self.num_classes))
    }
}

/// Inductive split: a seeded `test_fraction` of the nodes forms the test
/// graph, the rest the training graph, and edges between the two are dropped.
pub fn inductive_split(g: &LabeledGraph, test_fraction: f64, seed: u64) -> Result<(LabeledGraph, LabeledGraph)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(GuideError::Argument(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = g.node_count();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(GuideError::Argument(format!("cannot split {n} nodes with fraction {test_fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = order.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((g.induced(&train)?, g.induced(&test)?))
}

/// Binary `n x h` label-membership matrix `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelIndicator {
    pub f: DMatrix<f64>,
}

impl LabelIndicator {
    pub fn column_sums(&self) -> Vec<f64> {
        self.f.column_iter().map(|c| c.sum()).collect()
    }
}

pub fn build_label_indicator(g: &LabeledGraph) -> LabelIndicator {
    let mut f = DMatrix::zeros(g.node_count(), g.num_classes());
    for (i, &y) in g.labels().iter().enumerate() {
        f[(i, y)] = 1.0;
    }
    LabelIndicator { f }
}

/// Targets of `F^T Y` and `F^T H` under a perfectly fair and balanced partition.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidedMatrices {
    /// `M[s][j] = |C_s| / v`
    pub m: DMatrix<f64>,
    /// `M~[s][j] = |C_s| / sqrt(n v)`
    pub m_tilde: DMatrix<f64>,
    pub v: usize,
}

pub fn guided_matrices(g: &LabeledGraph, v: usize) -> Result<GuidedMatrices> {
    guided_matrices_from_counts(&g.class_counts(), v)
}

pub fn guided_matrices_from_counts(class_counts: &[usize], v: usize) -> Result<GuidedMatrices> {
    if v < 2 {
        return Err(GuideError::Argument(format!(
            "shard count must be at least 2, got {v}"
        )));
    }
    let n: usize = class_counts.iter().sum();
    let h = class_counts.len();
    let vf = v as f64;
    let norm = (n as f64 * vf).sqrt();
    let m = DMatrix::from_fn(h, v, |s, _| class_counts[s] as f64 / vf);
    let m_tilde = DMatrix::from_fn(h, v, |s, _| class_counts[s] as f64 / norm);
    Ok(GuidedMatrices { m, m_tilde, v })
}

/// Degree matrix and the Laplacian in the `W - D` sign convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub degrees: DVector<f64>,
    /// `W - D`, negative semidefinite.
    pub l_paper: DMatrix<f64>,
}

impl Laplacian {
    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees)
    }

    /// The classical `D - W`.
    pub fn classical(&self) -> DMatrix<f64> {
        -&self.l_paper
    }
}

pub fn laplacian(g: &LabeledGraph) -> Result<Laplacian> {
    let w = g.dense_adjacency(DEFAULT_DENSE_LIMIT)?;
    let degrees = g.adjacency().weighted_degrees();
    let l_paper = w - DMatrix::from_diagonal(&degrees);
    Ok(Laplacian { degrees, l_paper })
}

/// `(W - D) x` without materializing either matrix.
pub fn apply_w_minus_d(adj: &Adjacency, degrees: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = adj.matmul(x);
    for (i, d) in degrees.iter().enumerate() {
        for c in 0..x.ncols() {
            out[(i, c)] -= d * x[(i, c)];
        }
    }
    out
}

/// Shard assignment of every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    v: usize,
}

impl Partition {
    pub fn new(assignment: Vec<usize>, v: usize) -> Result<Self> {
        if v == 0 {
            return Err(GuideError::Argument("shard count must be positive".into()));
        }
        if let Some((i, &s)) = assignment.iter().enumerate().find(|(_, &s)| s >= v) {
            return Err(GuideError::Validation(format!(
                "node {i} assigned to shard {s}, outside 0..{v}"
            )));
        }
        Ok(Partition { assignment, v })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn shard_of(&self, u: usize) -> usize {
        self.assignment[u]
    }

    pub fn num_shards(&self) -> usize {
        self.v
    }

    pub fn node_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.v];
        for &s in &self.assignment {
            sizes[s] += 1;
        }
        sizes
    }

    /// Nodes of `shard` in ascending id order.
    pub fn members(&self, shard: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == shard)
            .map(|(i, _)| i)
            .collect()
    }

    /// Same blocks with shards renumbered in order of first appearance, so
    /// two partitions that differ only in shard labels compare equal.
    pub fn canonical(&self) -> Partition {
        let mut map = vec![usize::MAX; self.v];
        let mut next = 0;
        let assignment = self
            .assignment
            .iter()
            .map(|&s| {
                if map[s] == usize::MAX {
                    map[s] = next;
                    next += 1;
                }
                map[s]
            })
            .collect();
        Partition { assignment, v: self.v }
    }

    pub fn first_empty_shard(&self) -> Option<usize> {
        self.sizes().iter().position(|&c| c == 0)
    }

    /// Binary indicator `Y`.
    pub fn indicator(&self) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.assignment.len(), self.v);
        for (i, &s) in self.assignment.iter().enumerate() {
            y[(i, s)] = 1.0;
        }
        y
    }

    /// Column-normalized indicator `H`; undefined when a shard is empty.
    pub fn normalized_indicator(&self) -> Result<DMatrix<f64>> {
        let sizes = self.sizes();
        if let Some(j) = sizes.iter().position(|&c| c == 0) {
            return Err(GuideError::Argument(format!("shard {j} is empty")));
        }
        let mut h = DMatrix::zeros(self.assignment.len(), self.v);
        for (i, &s) in self.assignment.iter().enumerate() {
            h[(i, s)] = 1.0 / (sizes[s] as f64).sqrt();
        }
        Ok(h)
    }
}

/// Unweighted degree of every node in the training graph as first observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeRecord {
    pub original_degree: Vec<usize>,
}

impl DegreeRecord {
    pub fn from_graph(g: &LabeledGraph) -> Self {
        DegreeRecord {
            original_degree: (0..g.node_count()).map(|u| g.degree(u)).collect(),
        }
    }

    pub fn degree(&self, u: usize) -> usize {
        self.original_degree[u]
    }
}
