use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GuideError, Result};
use crate::graph::{LabeledGraph, Partition};

/// Partition-quality summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionScores {
    pub balance: f64,
    pub fairness: f64,
    pub combined: f64,
    pub ratio_cut: f64,
}

impl fmt::Display for PartitionScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "balance={:.6}, fairness={:.6}, combined={:.6}, ratio_cut={:.6}",
            self.balance, self.fairness, self.combined, self.ratio_cut
        )
    }
}

/// `-(1/2) * sum_i | |V_i| - n/v | / n`, in `[-1, 0]`.
pub fn balance_score(p: &Partition) -> f64 {
    let n = p.node_count() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let target = n / p.num_shards() as f64;
    let spread: f64 = p.sizes().iter().map(|&s| (s as f64 - target).abs()).sum();
    // Subtracting from zero keeps a perfect score at +0.0 rather than -0.0.
    0.0 - 0.5 * spread / n
}

/// `-(1/(2v)) * sum_i sum_s | |C_s & V_i| / |V_i| - |C_s| / n |`, in `[-1, 0]`.
pub fn fairness_score(p: &Partition, labels: &[usize], h: usize) -> Result<f64> {
    if labels.len() != p.node_count() {
        return Err(GuideError::Argument(format!(
            "{} labels for a partition of {} nodes",
            labels.len(),
            p.node_count()
        )));
    }
    let v = p.num_shards();
    let sizes = p.sizes();
    if let Some(j) = sizes.iter().position(|&s| s == 0) {
        return Err(GuideError::Argument(format!("shard {j} is empty")));
    }
    let mut global = vec![0usize; h];
    let mut per_shard = vec![vec![0usize; h]; v];
    for (i, &y) in labels.iter().enumerate() {
        if y >= h {
            return Err(GuideError::Argument(format!("label {y} outside 0..{h}")));
        }
        global[y] += 1;
        per_shard[p.shard_of(i)][y] += 1;
    }
    let n = labels.len() as f64;
    let mut total = 0.0;
    for (j, counts) in per_shard.iter().enumerate() {
        for s in 0..h {
            total += (counts[s] as f64 / sizes[j] as f64 - global[s] as f64 / n).abs();
        }
    }
    Ok(0.0 - total / (2.0 * v as f64))
}

/// `Tr(H^T (D - W) H) = sum_j cut(V_j) / |V_j|`, the nonnegative RatioCut.
pub fn ratio_cut(p: &Partition, g: &LabeledGraph) -> Result<f64> {
    if p.node_count() != g.node_count() {
        return Err(GuideError::Argument("partition and graph sizes differ".into()));
    }
    let sizes = p.sizes();
    if let Some(j) = sizes.iter().position(|&s| s == 0) {
        return Err(GuideError::Argument(format!("shard {j} is empty")));
    }
    let mut cut = vec![0.0; p.num_shards()];
    for (u, v, w) in g.adjacency().edges() {
        let (a, b) = (p.shard_of(u), p.shard_of(v));
        if a != b {
            cut[a] += w;
            cut[b] += w;
        }
    }
    Ok(cut
        .iter()
        .zip(&sizes)
        .map(|(c, &s)| c / s as f64)
        .sum())
}

pub fn partition_scores(p: &Partition, g: &LabeledGraph) -> Result<PartitionScores> {
    let balance = balance_score(p);
    let fairness = fairness_score(p, g.labels(), g.num_classes())?;
    Ok(PartitionScores {
        balance,
        fairness,
        combined: balance + fairness,
        ratio_cut: ratio_cut(p, g)?,
    })
}

/// Writes `node_id shard_id` lines.
pub fn write_partition(path: &Path, p: &Partition) -> Result<()> {
    let mut out = String::with_capacity(p.node_count() * 8);
    for (i, s) in p.assignment().iter().enumerate() {
        out.push_str(&format!("{i} {s}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads `node_id shard_id` lines. Node ids must cover `0..n` exactly once.
/// The shard count defaults to the largest id seen plus one.
pub fn read_partition(path: &Path, num_shards: Option<usize>) -> Result<Partition> {
    let text = crate::graph::io::read_text(path)?;
    let name = path.display().to_string();
    let mut pairs = Vec::new();
    for (idx, raw) in crate::graph::io::normalize_newlines(&text).lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| GuideError::Parse {
            path: name.clone(),
            line: idx + 1,
            msg,
        };
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(err(format!("expected `node shard`, got `{line}`")));
        };
        let node = a.parse::<usize>().map_err(|e| err(format!("bad node `{a}`: {e}")))?;
        let shard = b.parse::<usize>().map_err(|e| err(format!("bad shard `{b}`: {e}")))?;
        pairs.push((node, shard));
    }
    let n = pairs.len();
    let mut assignment = vec![usize::MAX; n];
    for (node, shard) in pairs {
        if node >= n || assignment[node] != usize::MAX {
            return Err(GuideError::Validation(format!(
                "partition file lists node {node} out of range or twice"
            )));
        }
        assignment[node] = shard;
    }
    let v = num_shards.unwrap_or_else(|| assignment.iter().max().map_or(1, |m| m + 1));
    Partition::new(assignment, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn sizes_partition(sizes: &[usize]) -> Partition {
        let assignment = sizes
            .iter()
            .enumerate()
            .flat_map(|(j, &s)| std::iter::repeat_n(j, s))
            .collect();
        Partition::new(assignment, sizes.len()).unwrap()
    }

    #[test]
    fn balance_examples() {
        assert_eq!(balance_score(&sizes_partition(&[4, 4])), 0.0);
        assert_eq!(balance_score(&sizes_partition(&[6, 2])), -0.25);
        assert_eq!(balance_score(&sizes_partition(&[8, 0])), -0.5);
    }

    #[test]
    fn fairness_examples() {
        let labels = vec![0, 0, 1, 1, 0, 0, 1, 1];
        let fair = sizes_partition(&[4, 4]);
        assert_eq!(fairness_score(&fair, &labels, 2).unwrap(), 0.0);
        let segregated = Partition::new(vec![0, 0, 1, 1, 0, 0, 1, 1], 2).unwrap();
        assert_eq!(fairness_score(&segregated, &labels, 2).unwrap(), -0.5);
        let single = Partition::new(vec![0; 8], 1).unwrap();
        assert_eq!(fairness_score(&single, &labels, 2).unwrap(), 0.0);
        assert!(fairness_score(&sizes_partition(&[8, 0]), &labels, 2).is_err());
    }

    #[test]
    fn ratio_cut_examples() {
        let g = LabeledGraph::new([(0, 1, 1.0)], DMatrix::zeros(2, 1), vec![0, 0], None).unwrap();
        let p = Partition::new(vec![0, 1], 2).unwrap();
        assert_eq!(ratio_cut(&p, &g).unwrap(), 2.0);

        let edges = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)];
        let g = LabeledGraph::new(edges, DMatrix::zeros(6, 1), vec![0; 6], None).unwrap();
        let p = Partition::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(ratio_cut(&p, &g).unwrap(), 0.0);

        let g = LabeledGraph::new([], DMatrix::zeros(4, 1), vec![0; 4], None).unwrap();
        let p = Partition::new(vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(ratio_cut(&p, &g).unwrap(), 0.0);
    }

    #[test]
    fn ratio_cut_matches_trace_form() {
        let g = crate::graph::generate_sbm(&crate::graph::SbmParams {
            n: 30,
            blocks: 3,
            classes: 3,
            p_in: 0.4,
            p_out: 0.1,
            feature_dim: 1,
            homophily: 0.0,
            seed: 8,
        })
        .unwrap();
        let p = crate::partition::random_partition(30, 3, 4).unwrap();
        let h = p.normalized_indicator().unwrap();
        let lap = crate::graph::laplacian(&g).unwrap().classical();
        let trace = (h.transpose() * lap * &h).trace();
        assert!((trace - ratio_cut(&p, &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn partition_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        let p = Partition::new(vec![2, 0, 1, 1, 0], 3).unwrap();
        write_partition(&path, &p).unwrap();
        assert_eq!(read_partition(&path, Some(3)).unwrap(), p);
    }

    #[test]
    fn score_line_format() {
        let s = PartitionScores {
            balance: -0.25,
            fairness: 0.0,
            combined: -0.25,
            ratio_cut: 2.0,
        };
        assert_eq!(
            s.to_string(),
            "balance=-0.250000, fairness=0.000000, combined=-0.250000, ratio_cut=2.000000"
        );
    }
}
