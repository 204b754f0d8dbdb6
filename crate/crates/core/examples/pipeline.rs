//! End to end: repair strategies and aggregation rules on one split.
//!
//! `cargo run --release --example pipeline -- [seed]`

use guide::engine::{evaluate_with, set_reference, train_all, Aggregation, EngineConfig};
use guide::graph::{generate_sbm, inductive_split, SbmParams};
use guide::repair::RepairStrategy;

fn main() -> guide::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("numeric seed"));
    let g = generate_sbm(&SbmParams {
        n: 600,
        blocks: 6,
        classes: 3,
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 8,
        homophily: 0.9,
        seed,
    })?;
    let (train, test) = inductive_split(&g, 0.5, seed)?;

    println!("{:<8} {:>10} {:>10} {:>9}", "repair", "similarity", "average", "macro_f1");
    let strategies = [None, Some(RepairStrategy::Zero), Some(RepairStrategy::Mirror), Some(RepairStrategy::MixUp)];
    for strategy in strategies {
        let config = EngineConfig { num_shards: 6, strategy, seed, ..EngineConfig::default() };
        let mut state = train_all(&train, &config)?;
        set_reference(&mut state, &test)?;
        let sim = evaluate_with(&state, &test, Aggregation::Similarity)?;
        let avg = evaluate_with(&state, &test, Aggregation::Average)?;
        let name = strategy.map_or("none".to_string(), |s| s.to_string());
        println!(
            "{name:<8} {:>10.3} {:>10.3} {:>9.3}",
            sim.metrics.accuracy, avg.metrics.accuracy, sim.metrics.macro_f1
        );
    }
    Ok(())
}
