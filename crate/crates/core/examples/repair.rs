//! Restoring the neighbours a shard loses at partition time.

use guide::graph::{generate_sbm, DegreeRecord, SbmParams};
use guide::partition::{gpfb_sr, GpfbConfig};
use guide::repair::{induced_subgraph, repair, RepairStrategy};

fn main() -> guide::Result<()> {
    let g = generate_sbm(&SbmParams {
        n: 120,
        blocks: 3,
        classes: 3,
        p_in: 0.2,
        p_out: 0.03,
        feature_dim: 4,
        homophily: 0.9,
        seed: 1,
    })?;
    let p = gpfb_sr(&g, 3, &GpfbConfig::default())?;
    let rec = DegreeRecord::from_graph(&g);

    let raw = induced_subgraph(&p, &g, 0)?;
    let adj = raw.adjacency();
    let lost: usize = (0..raw.real_count()).map(|i| rec.degree(raw.real_nodes[i]) - adj.degree(i)).sum();
    println!(
        "shard 0: {} nodes, {} internal edges, {lost} edge endpoints cut away",
        raw.real_count(),
        raw.intra_edges.len()
    );

    let owner = raw.real_nodes[0];
    println!("node {owner} features {:.3?}", g.feature_row(owner));
    for strategy in [RepairStrategy::Zero, RepairStrategy::Mirror, RepairStrategy::MixUp] {
        let rs = repair(&p, &g, &rec, 0, strategy, 1.0, 7)?;
        let adj = rs.adjacency();
        let restored = (0..rs.real_count()).all(|i| adj.degree(i) == rec.degree(rs.real_nodes[i]));
        let first = rs.synthetic_nodes.iter().position(|s| s.owner == owner);
        println!(
            "{strategy:>6}: {} synthetic nodes, degrees restored {restored}, node {owner} gets {}, first {:.3?}",
            rs.synthetic_nodes.len(),
            rs.synthetic_count(owner),
            first.map(|i| rs.synthetic_feature(i)),
        );
    }
    Ok(())
}
