//! Fair and balanced partitioning of a planted-partition graph.
//!
//! `cargo run --release --example partition -- [n] [v] [seed]`

use guide::graph::{generate_sbm, SbmParams};
use guide::partition::{gpfb_fast, gpfb_sr, partition_scores, random_partition, GpfbConfig};

fn main() -> guide::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let n = args.first().copied().unwrap_or(400) as usize;
    let v = args.get(1).copied().unwrap_or(4) as usize;
    let seed = args.get(2).copied().unwrap_or(0);

    let g = generate_sbm(&SbmParams {
        n,
        blocks: v,
        classes: 4,
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 8,
        homophily: 0.9,
        seed,
    })?;
    println!("graph: {} nodes, {} edges, classes {:?}", g.node_count(), g.adjacency().edge_count(), g.class_counts());

    let cfg = GpfbConfig { seed, ..GpfbConfig::default() };
    let runs = [
        ("random", random_partition(n, v, seed)?),
        ("fast", gpfb_fast(&g, v, &cfg)?),
        ("sr", gpfb_sr(&g, v, &cfg)?),
        ("sr beta=5", gpfb_sr(&g, v, &GpfbConfig { beta: 5.0, ..cfg.clone() })?),
    ];
    println!("{:<10} {:>9} {:>9} {:>10}  sizes", "method", "balance", "fairness", "ratio_cut");
    for (name, p) in &runs {
        let s = partition_scores(p, &g)?;
        println!("{name:<10} {:>9.4} {:>9.4} {:>10.3}  {:?}", s.balance, s.fairness, s.ratio_cut, p.sizes());
    }
    Ok(())
}
