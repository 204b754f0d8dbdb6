//! Unlearning a node, an edge and a feature vector one request at a time.

use guide::engine::{evaluate, set_reference, train_all, unlearn, EngineConfig, UnlearnRequest};
use guide::graph::{generate_sbm, inductive_split, SbmParams};

fn accuracy(state: &guide::engine::EnsembleState, test: &guide::graph::LabeledGraph) -> guide::Result<f64> {
    Ok(evaluate(state, test)?.metrics.accuracy)
}

fn main() -> guide::Result<()> {
    let g = generate_sbm(&SbmParams {
        n: 400,
        blocks: 4,
        classes: 2,
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 8,
        homophily: 0.9,
        seed: 4,
    })?;
    let (train, test) = inductive_split(&g, 0.25, 4)?;
    let config = EngineConfig { num_shards: 4, ..EngineConfig::default() };
    let mut state = train_all(&train, &config)?;
    set_reference(&mut state, &test)?;
    println!("revision {}: accuracy {:.3}, sizes {:?}", state.revision, accuracy(&state, &test)?, state.partition.sizes());

    let u = 10;
    let v = train.neighbors(u).next().expect("node 10 has a neighbour");
    let w = train.neighbors(v).find(|&w| w != u).expect("node has a second neighbour");
    for req in [UnlearnRequest::Node(u), UnlearnRequest::Edge(v, w), UnlearnRequest::Feature(20)] {
        let (next, report) = unlearn(&state, req)?;
        state = next;
        println!(
            "revision {}: {req}, retrained shards {:?} in {:.0?}, accuracy {:.3}",
            report.revision,
            report.retrained,
            report.elapsed,
            accuracy(&state, &test)?
        );
    }
    match unlearn(&state, UnlearnRequest::Node(u)) {
        Err(e) => println!("again: {e}"),
        Ok(_) => unreachable!("a node can only be unlearned once"),
    }
    Ok(())
}
