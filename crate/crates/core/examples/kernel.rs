//! Pyramid-match similarity between shards and a test graph.

use guide::graph::{generate_sbm, inductive_split, DegreeRecord, SbmParams};
use guide::kernel::{eigen_embedding, importance_weights, pyramid_match, DEFAULT_EMBEDDING_DIM, DEFAULT_LEVELS};
use guide::partition::{gpfb_sr, GpfbConfig};
use guide::repair::{repair_all, RepairStrategy};

fn main() -> guide::Result<()> {
    let g = generate_sbm(&SbmParams {
        n: 300,
        blocks: 3,
        classes: 3,
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 8,
        homophily: 0.9,
        seed: 2,
    })?;
    let (train, test) = inductive_split(&g, 0.3, 2)?;

    let e_test = eigen_embedding(test.adjacency(), DEFAULT_EMBEDDING_DIM)?;
    let e_train = eigen_embedding(train.adjacency(), DEFAULT_EMBEDDING_DIM)?;
    println!("k(test, test)   = {:.1}", pyramid_match(&e_test, &e_test, DEFAULT_LEVELS)?);
    println!("k(train, train) = {:.1}", pyramid_match(&e_train, &e_train, DEFAULT_LEVELS)?);
    println!("k(train, test)  = {:.1}", pyramid_match(&e_train, &e_test, DEFAULT_LEVELS)?);

    let p = gpfb_sr(&train, 4, &GpfbConfig::default())?;
    let shards = repair_all(&p, &train, &DegreeRecord::from_graph(&train), Some(RepairStrategy::MixUp), 1.0, 0)?;
    let w = importance_weights(test.adjacency(), &shards, DEFAULT_EMBEDDING_DIM, DEFAULT_LEVELS)?;
    for (s, (rs, w)) in shards.iter().zip(&w).enumerate() {
        println!("shard {s}: {:>3} nodes ({:>3} synthetic), weight {w:.4}", rs.node_count(), rs.synthetic_nodes.len());
    }
    Ok(())
}
