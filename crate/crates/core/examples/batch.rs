//! Batch unlearning cost as the batch grows.

use std::time::Instant;

use guide::engine::{batch_unlearn, train_all, EngineConfig, Partitioner, UnlearnMode, UnlearnRequest};
use guide::graph::{generate_sbm, SbmParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> guide::Result<()> {
    let g = generate_sbm(&SbmParams {
        n: 600,
        blocks: 6,
        classes: 2,
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 8,
        homophily: 0.9,
        seed: 5,
    })?;
    let config = EngineConfig {
        num_shards: 6,
        partitioner: Partitioner::Random,
        mode: UnlearnMode::Lax,
        ..EngineConfig::default()
    };
    let state = train_all(&g, &config)?;

    let mut ids: Vec<usize> = (0..g.node_count()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    for b in [1, 2, 4, 8, 16, 32, 64] {
        let requests: Vec<UnlearnRequest> = ids[..b].iter().map(|&u| UnlearnRequest::Node(u)).collect();
        let t = Instant::now();
        let (_, report) = batch_unlearn(&state, &requests)?;
        println!("batch {b:>3}: {} shards retrained, {:.0?}", report.retrained.len(), t.elapsed());
    }
    Ok(())
}
