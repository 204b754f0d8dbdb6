use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabeledGraph;
use crate::error::{GuideError, Result};

/// Planted-partition generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n: usize,
    /// Number of planted communities; sizes differ by at most one.
    pub blocks: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Scale of the class-mean component of every feature vector.
    pub homophily: f64,
    pub seed: u64,
}

/// Samples a planted-partition graph whose labels are spread evenly over the
/// blocks, so that the block partition is itself fair and balanced whenever
/// the block size is a multiple of the class count.
///
/// Features are `homophily * mu_label + N(0, I)` with class means drawn from a
/// standard normal. Node ids are a seeded permutation of the construction
/// order so that ids carry no block or class information.
pub fn generate_sbm(params: &SbmParams) -> Result<LabeledGraph> {
    let SbmParams {
        n,
        blocks,
        classes,
        p_in,
        p_out,
        feature_dim,
        homophily,
        seed,
    } = *params;
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(GuideError::Argument(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if classes == 0 || n == 0 || n % classes != 0 {
        return Err(GuideError::Argument(format!(
            "node count {n} must be a positive multiple of the class count {classes}"
        )));
    }
    if blocks == 0 || blocks > n {
        return Err(GuideError::Argument(format!("invalid block count {blocks}")));
    }
    if feature_dim == 0 {
        return Err(GuideError::Argument("feature dimension must be positive".into()));
    }
    if !(0.0..=1.0).contains(&homophily) {
        return Err(GuideError::Argument(format!("homophily {homophily} outside [0, 1]")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);

    let block_of = |pos: usize| pos * blocks / n;
    let mut labels = vec![0usize; n];
    for pos in 0..n {
        labels[ids[pos]] = pos % classes;
    }

    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..feature_dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut features = DMatrix::zeros(n, feature_dim);
    for pos in 0..n {
        let id = ids[pos];
        let mu = &means[labels[id]];
        for j in 0..feature_dim {
            let noise: f64 = rng.sample(StandardNormal);
            features[(id, j)] = homophily * mu[j] + noise;
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block_of(i) == block_of(j) { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((ids[i], ids[j], 1.0));
            }
        }
    }
    LabeledGraph::new(edges, features, labels, Some(classes))
}

/// Block id of every node for a graph generated with `params`.
pub fn sbm_blocks(params: &SbmParams) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut ids: Vec<usize> = (0..params.n).collect();
    ids.shuffle(&mut rng);
    let mut blocks = vec![0; params.n];
    for pos in 0..params.n {
        blocks[ids[pos]] = pos * params.blocks / params.n;
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SbmParams {
        SbmParams {
            n: 200,
            blocks: 2,
            classes: 4,
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 3,
            homophily: 0.5,
            seed: 11,
        }
    }

    #[test]
    fn degenerate_probabilities_give_disjoint_cliques() {
        let p = SbmParams { n: 8, p_in: 1.0, p_out: 0.0, classes: 2, ..params() };
        let g = generate_sbm(&p).unwrap();
        let blocks = sbm_blocks(&p);
        assert_eq!(g.adjacency().edge_count(), 2 * 6);
        for (u, v, _) in g.adjacency().edges() {
            assert_eq!(blocks[u], blocks[v]);
        }
        for u in 0..8 {
            assert_eq!(g.degree(u), 3);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_sbm(&params()).unwrap(), generate_sbm(&params()).unwrap());
        let other = SbmParams { seed: 12, ..params() };
        assert_ne!(generate_sbm(&params()).unwrap(), generate_sbm(&other).unwrap());
    }

    #[test]
    fn class_counts_forced() {
        let g = generate_sbm(&params()).unwrap();
        assert_eq!(g.class_counts(), vec![50, 50, 50, 50]);
        let blocks = sbm_blocks(&params());
        for b in 0..2 {
            let mut counts = [0; 4];
            for u in 0..200 {
                if blocks[u] == b {
                    counts[g.labels()[u]] += 1;
                }
            }
            assert_eq!(counts, [25; 4]);
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        let p = SbmParams { p_in: 0.1, p_out: 0.2, ..params() };
        assert!(matches!(generate_sbm(&p), Err(GuideError::Argument(_))));
        let p = SbmParams { n: 201, ..params() };
        assert!(generate_sbm(&p).is_err());
    }
}
