//! Pyramid match graph kernel and shard importance weights.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GuideError, Result};
use crate::graph::io::{normalize_newlines, read_text};
use crate::graph::Adjacency;
use crate::linalg::{dense_top_eigenpairs, top_eigenpairs, Spectrum};
use crate::repair::RepairedSubgraph;

pub const DEFAULT_EMBEDDING_DIM: usize = 6;
pub const DEFAULT_LEVELS: usize = 4;
const DENSE_LIMIT: usize = 500;
const EMBEDDING_SEED: u64 = 0x5eed;

/// Node coordinates in the leading eigenspace of the adjacency, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenEmbedding {
    pub vectors: DMatrix<f64>,
}

impl EigenEmbedding {
    pub fn node_count(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Which version of a shard the kernel compares against the test graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShardView {
    /// The repaired subgraph, synthetic nodes included.
    #[default]
    Repaired,
    /// Real nodes and intra-shard edges only.
    Raw,
}

/// Eigenvectors for the `d_emb` largest `|lambda|`, sign-folded and clamped.
/// Columns past the numerical rank, or past `n`, are zero.
pub fn eigen_embedding(adj: &Adjacency, d_emb: usize) -> Result<EigenEmbedding> {
    let n = adj.node_count();
    let mut vectors = DMatrix::zeros(n, d_emb);
    let k = d_emb.min(n);
    if k == 0 || adj.edge_count() == 0 {
        return Ok(EigenEmbedding { vectors });
    }
    let pairs = if n <= DENSE_LIMIT {
        dense_top_eigenpairs(&adj.to_dense(), k, Spectrum::LargestMagnitude)
    } else {
        top_eigenpairs(|x| adj.matmul(x), n, k, Spectrum::LargestMagnitude, EMBEDDING_SEED)?
    };
    let scale = pairs.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (c, &lambda) in pairs.values.iter().enumerate() {
        if lambda.abs() <= 1e-10 * scale.max(1.0) {
            continue;
        }
        for r in 0..n {
            vectors[(r, c)] = pairs.vectors[(r, c)].abs().min(1.0);
        }
    }
    Ok(EigenEmbedding { vectors })
}

/// Per-level, per-dimension bin counts. Level `l` splits `[0, 1]` into
/// `2^l` half-open bins, the last one closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidHistogram {
    /// `levels[l][dim][bin]`
    pub levels: Vec<Vec<Vec<usize>>>,
}

impl PyramidHistogram {
    pub fn new(emb: &EigenEmbedding, max_level: usize) -> Self {
        let levels = (0..=max_level)
            .map(|l| {
                let bins = 1usize << l;
                (0..emb.dim())
                    .map(|d| {
                        let mut counts = vec![0; bins];
                        for x in emb.vectors.column(d).iter() {
                            let b = ((x * bins as f64).floor() as usize).min(bins - 1);
                            counts[b] += 1;
                        }
                        counts
                    })
                    .collect()
            })
            .collect();
        PyramidHistogram { levels }
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    fn intersection(&self, other: &Self, level: usize) -> usize {
        self.levels[level]
            .iter()
            .zip(&other.levels[level])
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.min(y)).sum::<usize>())
            .sum()
    }
}

/// Pyramid match kernel between two histograms built with the same depth.
pub fn pyramid_match_histograms(a: &PyramidHistogram, b: &PyramidHistogram) -> Result<f64> {
    if a.levels.len() != b.levels.len() || a.levels[0].len() != b.levels[0].len() {
        return Err(GuideError::Argument(
            "pyramid histograms differ in depth or dimension".into(),
        ));
    }
    let top = a.max_level();
    let inter: Vec<f64> = (0..=top).map(|l| a.intersection(b, l) as f64).collect();
    let mut k = inter[top];
    for l in 0..top {
        k += (inter[l] - inter[l + 1]) / (1u64 << (top - l)) as f64;
    }
    Ok(k)
}

pub fn pyramid_match(a: &EigenEmbedding, b: &EigenEmbedding, max_level: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(GuideError::Argument(format!(
            "embedding dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    pyramid_match_histograms(
        &PyramidHistogram::new(a, max_level),
        &PyramidHistogram::new(b, max_level),
    )
}

pub fn shard_adjacency(rs: &RepairedSubgraph, view: ShardView) -> Adjacency {
    match view {
        ShardView::Repaired => rs.adjacency(),
        ShardView::Raw => Adjacency::from_edges(rs.real_count(), rs.intra_edges.iter().copied())
            .expect("intra-shard edges are in range"),
    }
}

/// Kernel value between the test graph and every shard.
pub fn shard_kernels(
    test: &EigenEmbedding,
    shards: &[RepairedSubgraph],
    view: ShardView,
    max_level: usize,
) -> Result<Vec<f64>> {
    let reference = PyramidHistogram::new(test, max_level);
    shards
        .par_iter()
        .map(|rs| {
            let emb = eigen_embedding(&shard_adjacency(rs, view), test.dim())?;
            pyramid_match_histograms(&reference, &PyramidHistogram::new(&emb, max_level))
        })
        .collect()
}

/// Normalizes raw kernel values into a probability vector, uniform when
/// every value is zero.
pub fn normalize_weights(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if raw.is_empty() {
        return Vec::new();
    }
    if total <= 0.0 {
        return vec![1.0 / raw.len() as f64; raw.len()];
    }
    raw.iter().map(|k| k / total).collect()
}

/// Importance weight of each shard for the given test graph.
pub fn importance_weights(
    test: &Adjacency,
    shards: &[RepairedSubgraph],
    d_emb: usize,
    max_level: usize,
) -> Result<Vec<f64>> {
    if shards.is_empty() {
        return Err(GuideError::Argument("no shards to weight".into()));
    }
    let emb = eigen_embedding(test, d_emb)?;
    Ok(normalize_weights(&shard_kernels(&emb, shards, ShardView::Repaired, max_level)?))
}

/// Raw kernel values with their normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardWeights {
    pub raw: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ShardWeights {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let weights = normalize_weights(&raw);
        ShardWeights { raw, weights }
    }

    /// Replaces one shard's kernel value; the other raw values are kept.
    pub fn update_single_weight(&mut self, shard: usize, value: f64) -> Result<&[f64]> {
        if shard >= self.raw.len() {
            return Err(GuideError::Argument(format!(
                "shard {shard} out of range ({} shards)",
                self.raw.len()
            )));
        }
        self.raw[shard] = value;
        self.weights = normalize_weights(&self.raw);
        Ok(&self.weights)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, w) in self.weights.iter().enumerate() {
            let _ = writeln!(out, "{i} {w:.8}");
        }
        for (i, k) in self.raw.iter().enumerate() {
            let _ = writeln!(out, "raw {i} {k}");
        }
        out
    }

    /// Parses the text form. Weights are recomputed from the raw section,
    /// the printed weights only have to agree to their 8 decimals.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| GuideError::Parse {
            path: path.to_string(),
            line,
            msg: msg.to_string(),
        };
        let mut printed = Vec::new();
        let mut raw = Vec::new();
        for (i, line) in normalize_newlines(text).lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [] => {}
                ["raw", id, k] => {
                    let id: usize = id.parse().map_err(|_| err(i + 1, "bad shard id"))?;
                    if id != raw.len() {
                        return Err(err(i + 1, "raw entries must be in shard order"));
                    }
                    raw.push(k.parse::<f64>().map_err(|_| err(i + 1, "bad kernel value"))?);
                }
                [id, w] => {
                    let id: usize = id.parse().map_err(|_| err(i + 1, "bad shard id"))?;
                    if id != printed.len() {
                        return Err(err(i + 1, "weights must be in shard order"));
                    }
                    printed.push(w.parse::<f64>().map_err(|_| err(i + 1, "bad weight"))?);
                }
                _ => return Err(err(i + 1, "expected `shard weight` or `raw shard value`")),
            }
        }
        let sw = ShardWeights::from_raw(raw);
        if printed.len() != sw.weights.len()
            || printed.iter().zip(&sw.weights).any(|(p, w)| (p - w).abs() > 1e-8)
        {
            return Err(GuideError::Load(format!("{path}: weights disagree with raw kernel values")));
        }
        Ok(sw)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmParams};
    use approx::assert_abs_diff_eq;

    fn adj(n: usize, edges: &[(usize, usize)]) -> Adjacency {
        Adjacency::from_edges(n, edges.iter().map(|&(a, b)| (a, b, 1.0))).unwrap()
    }

    fn cycle(n: usize) -> Adjacency {
        adj(n, &(0..n).map(|i| (i, (i + 1) % n)).collect::<Vec<_>>())
    }

    #[test]
    fn degenerate_embeddings_are_zero() {
        assert_eq!(eigen_embedding(&adj(1, &[]), 6).unwrap().vectors, DMatrix::zeros(1, 6));
        assert_eq!(eigen_embedding(&adj(2, &[]), 6).unwrap().vectors, DMatrix::zeros(2, 6));
    }

    #[test]
    fn single_edge_embedding() {
        let e = eigen_embedding(&adj(2, &[(0, 1)]), 6).unwrap();
        for c in 0..2 {
            for r in 0..2 {
                assert_abs_diff_eq!(e.vectors[(r, c)], 0.5f64.sqrt(), epsilon = 1e-12);
            }
        }
        assert!(e.vectors.columns(2, 4).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn self_match_is_n_times_dim() {
        for g in [cycle(7), adj(3, &[(0, 1)]), adj(4, &[])] {
            let e = eigen_embedding(&g, 6).unwrap();
            assert_eq!(pyramid_match(&e, &e, 4).unwrap(), (g.node_count() * 6) as f64);
        }
    }

    #[test]
    fn only_coarsest_level_matches() {
        let a = EigenEmbedding { vectors: DMatrix::from_element(3, 2, 0.1) };
        let b = EigenEmbedding { vectors: DMatrix::from_element(5, 2, 0.9) };
        assert_eq!(pyramid_match(&a, &b, 4).unwrap(), 3.0 * 2.0 / 16.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = EigenEmbedding { vectors: DMatrix::zeros(2, 3) };
        let b = EigenEmbedding { vectors: DMatrix::zeros(2, 4) };
        assert!(pyramid_match(&a, &b, 2).is_err());
    }

    #[test]
    fn histogram_refines() {
        let g = generate_sbm(&SbmParams {
            n: 40,
            blocks: 2,
            classes: 2,
            p_in: 0.3,
            p_out: 0.05,
            feature_dim: 1,
            homophily: 0.0,
            seed: 1,
        })
        .unwrap();
        let h = PyramidHistogram::new(&eigen_embedding(g.adjacency(), 6).unwrap(), 4);
        for l in 1..=4 {
            for d in 0..6 {
                assert_eq!(h.levels[l][d].iter().sum::<usize>(), 40);
                for b in 0..(1 << (l - 1)) {
                    assert_eq!(h.levels[l - 1][d][b], h.levels[l][d][2 * b] + h.levels[l][d][2 * b + 1]);
                }
            }
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_weights(&[5.0]), vec![1.0]);
        assert_eq!(normalize_weights(&[1.0, 3.0]), vec![0.25, 0.75]);
        assert_eq!(normalize_weights(&[0.0, 0.0]), vec![0.5, 0.5]);
        let mut sw = ShardWeights::from_raw(vec![1.0, 1.0]);
        assert_eq!(sw.update_single_weight(0, 3.0).unwrap(), &[0.75, 0.25]);
        let before = sw.weights.clone();
        sw.update_single_weight(1, 1.0).unwrap();
        assert_eq!(sw.weights, before);
        assert!(sw.update_single_weight(2, 1.0).is_err());
    }

    #[test]
    fn weights_file_round_trip() {
        let sw = ShardWeights::from_raw(vec![12.5, 3.0, 0.125]);
        let text = sw.to_text();
        assert!(text.starts_with("0 0.80000000\n"));
        assert_eq!(ShardWeights::parse(&text, "w").unwrap(), sw);
        assert!(ShardWeights::parse("0 0.5\n1 0.5\nraw 0 1\nraw 1 3\n", "w").is_err());
    }
}
