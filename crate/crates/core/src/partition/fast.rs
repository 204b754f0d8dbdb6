use super::{check_shard_count, gpi_solve_h, kmeans_rows, spectral_init, EmbeddingMatrix, GpfbConfig};
use crate::error::{GuideError, Result};
use crate::graph::{build_label_indicator, guided_matrices, LabeledGraph, Partition};

#[derive(Debug, Clone)]
pub struct FastOutcome {
    pub partition: Partition,
    pub embedding: EmbeddingMatrix,
    pub objective_trace: Vec<f64>,
}

/// Fast fair-and-balanced partitioning: one embedding solve with
/// `B = alpha F M~`, then k-means on the embedding rows.
pub fn gpfb_fast(g: &LabeledGraph, v: usize, cfg: &GpfbConfig) -> Result<Partition> {
    Ok(gpfb_fast_detailed(g, v, cfg)?.partition)
}

pub fn gpfb_fast_detailed(g: &LabeledGraph, v: usize, cfg: &GpfbConfig) -> Result<FastOutcome> {
    cfg.validate()?;
    check_shard_count(g.node_count(), v)?;
    let f = build_label_indicator(g);
    let gm = guided_matrices(g, v)?;
    let b = &f.f * &gm.m_tilde * cfg.alpha;
    let h0 = spectral_init(g, v, cfg.seed);
    let solved = gpi_solve_h(g, &f, &b, cfg.alpha, &h0, cfg)?;
    let partition = kmeans_rows(solved.h.matrix(), v, cfg.seed)?;
    if let Some(j) = partition.first_empty_shard() {
        return Err(GuideError::Solver(format!("k-means left shard {j} empty")));
    }
    Ok(FastOutcome {
        partition,
        embedding: solved.h,
        objective_trace: solved.objective_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_scores;
    use nalgebra::DMatrix;

    pub(crate) fn two_cliques_with_bridge() -> LabeledGraph {
        let mut edges = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
        edges.push((3, 4, 1.0));
        LabeledGraph::new(edges, DMatrix::zeros(8, 1), vec![0, 0, 1, 1, 0, 1, 0, 1], None).unwrap()
    }

    #[test]
    fn separates_bridged_cliques() {
        let g = two_cliques_with_bridge();
        let p = gpfb_fast(&g, 2, &GpfbConfig::default()).unwrap();
        let a = p.shard_of(0);
        assert!((0..4).all(|i| p.shard_of(i) == a));
        assert!((4..8).all(|i| p.shard_of(i) != a));
        let s = partition_scores(&p, &g).unwrap();
        assert_eq!(s.combined, 0.0);
    }

    #[test]
    fn empty_graph_with_strong_penalty_is_fair() {
        let g = LabeledGraph::new([], DMatrix::zeros(4, 1), vec![0, 0, 1, 1], None).unwrap();
        let cfg = GpfbConfig { alpha: 10.0, ..GpfbConfig::default() };
        let p = gpfb_fast(&g, 2, &cfg).unwrap();
        let s = partition_scores(&p, &g).unwrap();
        assert_eq!(s.combined, 0.0, "{p:?}");
    }

    #[test]
    fn empty_graph_fair_for_every_seed() {
        let g = LabeledGraph::new([], DMatrix::zeros(4, 1), vec![0, 0, 1, 1], None).unwrap();
        for seed in 0..20 {
            let cfg = GpfbConfig { alpha: 10.0, seed, ..GpfbConfig::default() };
            let p = gpfb_fast(&g, 2, &cfg).unwrap();
            assert_eq!(partition_scores(&p, &g).unwrap().combined, 0.0, "seed {seed}");
        }
    }

    #[test]
    fn deterministic() {
        let g = two_cliques_with_bridge();
        let cfg = GpfbConfig { seed: 5, ..GpfbConfig::default() };
        assert_eq!(gpfb_fast(&g, 2, &cfg).unwrap(), gpfb_fast(&g, 2, &cfg).unwrap());
    }

    #[test]
    fn rejects_single_shard() {
        let g = two_cliques_with_bridge();
        assert!(gpfb_fast(&g, 1, &GpfbConfig::default()).is_err());
    }
}
