//! Shard subgraph repair.
//!
//! Partitioning cuts edges. Every real node of a shard gets synthetic
//! neighbors (stars attached to their owner) until its local degree matches
//! the recorded degree of the full training graph. Synthetic nodes never
//! enter the training loss.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GuideError, Result};
use crate::graph::io::{format_edges, format_features, normalize_newlines, parse_edges, parse_features, read_text};
use crate::graph::{Adjacency, DegreeRecord, LabeledGraph, Partition};

/// How synthetic neighbor features are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairStrategy {
    /// All-zero features.
    Zero,
    /// A copy of the owner's features.
    Mirror,
    /// The owner's features scaled by `lambda ~ U[0, tau]`.
    MixUp,
}

impl fmt::Display for RepairStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepairStrategy::Zero => "zero",
            RepairStrategy::Mirror => "mirror",
            RepairStrategy::MixUp => "mixup",
        })
    }
}

impl FromStr for RepairStrategy {
    type Err = GuideError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(RepairStrategy::Zero),
            "mirror" => Ok(RepairStrategy::Mirror),
            "mixup" => Ok(RepairStrategy::MixUp),
            other => Err(GuideError::Argument(format!(
                "unknown repair strategy {other:?} (expected zero, mirror or mixup)"
            ))),
        }
    }
}

/// The `ordinal`-th synthetic neighbor of `owner`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SyntheticNode {
    pub owner: usize,
    pub ordinal: usize,
}

/// A shard's subgraph in local ids: real nodes first (ascending global id),
/// then synthetic nodes ordered by `(owner, ordinal)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairedSubgraph {
    pub shard_id: usize,
    pub real_nodes: Vec<usize>,
    pub real_labels: Vec<usize>,
    pub synthetic_nodes: Vec<SyntheticNode>,
    /// Edges between real nodes, local ids, `a < b`.
    pub intra_edges: Vec<(usize, usize, f64)>,
    /// One row per local node.
    pub features: DMatrix<f64>,
    /// `None` for the unrepaired induced subgraph.
    pub strategy: Option<RepairStrategy>,
    pub tau: f64,
    pub rng_seed: u64,
}

impl RepairedSubgraph {
    pub fn node_count(&self) -> usize {
        self.real_nodes.len() + self.synthetic_nodes.len()
    }

    pub fn real_count(&self) -> usize {
        self.real_nodes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// True on real nodes only.
    pub fn loss_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.real_nodes.len()];
        mask.resize(self.node_count(), false);
        mask
    }

    /// Labels per local node, `None` on synthetic nodes.
    pub fn local_labels(&self) -> Vec<Option<usize>> {
        let mut out: Vec<Option<usize>> = self.real_labels.iter().map(|&l| Some(l)).collect();
        out.resize(self.node_count(), None);
        out
    }

    pub fn local_id(&self, global: usize) -> Option<usize> {
        self.real_nodes.binary_search(&global).ok()
    }

    /// Intra-shard edges followed by one unit-weight edge per synthetic node.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let base = self.real_nodes.len();
        let mut out = self.intra_edges.clone();
        for (i, s) in self.synthetic_nodes.iter().enumerate() {
            let owner = self.local_id(s.owner).expect("synthetic owner is a real node");
            out.push((owner, base + i, 1.0));
        }
        out
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::from_edges(self.node_count(), self.edges()).expect("local edges are in range")
    }

    /// Unweighted local degree of the real node `global`.
    pub fn local_degree(&self, global: usize) -> Option<usize> {
        let local = self.local_id(global)?;
        let intra = self
            .intra_edges
            .iter()
            .filter(|&&(a, b, _)| a == local || b == local)
            .count();
        let synthetic = self.synthetic_nodes.iter().filter(|s| s.owner == global).count();
        Some(intra + synthetic)
    }

    pub fn synthetic_feature(&self, i: usize) -> Vec<f64> {
        self.features.row(self.real_nodes.len() + i).iter().copied().collect()
    }

    pub fn synthetic_count(&self, owner: usize) -> usize {
        self.synthetic_nodes.iter().filter(|s| s.owner == owner).count()
    }
}

/// Live (non-removed) members of `shard`, ascending.
fn live_members(p: &Partition, g: &LabeledGraph, shard: usize) -> Vec<usize> {
    p.members(shard).into_iter().filter(|&u| !g.is_removed(u)).collect()
}

fn intra_edges(g: &LabeledGraph, real: &[usize]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (a, &u) in real.iter().enumerate() {
        for &(w, wt) in g.adjacency().neighbors(u) {
            if w > u {
                if let Ok(b) = real.binary_search(&w) {
                    out.push((a, b, wt));
                }
            }
        }
    }
    out
}

fn intra_degrees(real: &[usize], edges: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut deg = vec![0; real.len()];
    for &(a, b, _) in edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    deg
}

fn check_shard(p: &Partition, shard: usize) -> Result<()> {
    if shard >= p.num_shards() {
        return Err(GuideError::Argument(format!(
            "shard {shard} out of range (partition has {} shards)",
            p.num_shards()
        )));
    }
    Ok(())
}

fn check_sizes(p: &Partition, g: &LabeledGraph, rec: &DegreeRecord) -> Result<()> {
    if p.node_count() != g.node_count() || rec.original_degree.len() != g.node_count() {
        return Err(GuideError::Validation(format!(
            "graph has {} nodes, partition {}, degree record {}",
            g.node_count(),
            p.node_count(),
            rec.original_degree.len()
        )));
    }
    Ok(())
}

fn missing(rec: &DegreeRecord, u: usize, intra: usize) -> Result<usize> {
    rec.degree(u).checked_sub(intra).ok_or_else(|| {
        GuideError::Consistency(format!(
            "node {u} keeps {intra} neighbors in its shard but the degree record says {}",
            rec.degree(u)
        ))
    })
}

/// Number of synthetic neighbors each real node of `shard` needs, by global id.
pub fn missing_counts(
    p: &Partition,
    g: &LabeledGraph,
    rec: &DegreeRecord,
    shard: usize,
) -> Result<Vec<(usize, usize)>> {
    check_shard(p, shard)?;
    check_sizes(p, g, rec)?;
    let real = live_members(p, g, shard);
    let deg = intra_degrees(&real, &intra_edges(g, &real));
    real.iter()
        .zip(deg)
        .map(|(&u, d)| Ok((u, missing(rec, u, d)?)))
        .collect()
}

/// MixUp coefficient for one synthetic node, drawn from its own stream so
/// the value does not depend on which other nodes were repaired.
pub fn mixup_lambda(seed: u64, shard: usize, owner: usize, ordinal: usize, tau: f64) -> f64 {
    let mut key = [0u8; 32];
    for (i, part) in [seed, shard as u64, owner as u64, ordinal as u64].into_iter().enumerate() {
        key[i * 8..(i + 1) * 8].copy_from_slice(&part.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key).random_range(0.0..=tau)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(GuideError::Argument(format!("tau must lie in (0, 1], got {tau}")));
    }
    Ok(())
}

fn assemble(
    g: &LabeledGraph,
    shard: usize,
    real: Vec<usize>,
    edges: Vec<(usize, usize, f64)>,
    counts: &[usize],
    strategy: Option<RepairStrategy>,
    tau: f64,
    seed: u64,
) -> RepairedSubgraph {
    let synthetic: Vec<SyntheticNode> = real
        .iter()
        .zip(counts)
        .flat_map(|(&owner, &c)| (0..c).map(move |ordinal| SyntheticNode { owner, ordinal }))
        .collect();
    let dim = g.feature_dim();
    let mut features = DMatrix::zeros(real.len() + synthetic.len(), dim);
    for (i, &u) in real.iter().enumerate() {
        features.set_row(i, &g.features().row(u));
    }
    for (i, s) in synthetic.iter().enumerate() {
        let row = real.len() + i;
        match strategy {
            Some(RepairStrategy::Mirror) => features.set_row(row, &g.features().row(s.owner)),
            Some(RepairStrategy::MixUp) => {
                let lambda = mixup_lambda(seed, shard, s.owner, s.ordinal, tau);
                features.set_row(row, &(g.features().row(s.owner) * lambda));
            }
            Some(RepairStrategy::Zero) | None => {}
        }
    }
    RepairedSubgraph {
        shard_id: shard,
        real_labels: real.iter().map(|&u| g.labels()[u]).collect(),
        real_nodes: real,
        synthetic_nodes: synthetic,
        intra_edges: edges,
        features,
        strategy,
        tau,
        rng_seed: seed,
    }
}

/// Repairs one shard so every live member regains its recorded degree.
pub fn repair(
    p: &Partition,
    g: &LabeledGraph,
    rec: &DegreeRecord,
    shard: usize,
    strategy: RepairStrategy,
    tau: f64,
    seed: u64,
) -> Result<RepairedSubgraph> {
    check_tau(tau)?;
    check_shard(p, shard)?;
    check_sizes(p, g, rec)?;
    let real = live_members(p, g, shard);
    let edges = intra_edges(g, &real);
    let counts = intra_degrees(&real, &edges)
        .into_iter()
        .zip(&real)
        .map(|(d, &u)| missing(rec, u, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(g, shard, real, edges, &counts, Some(strategy), tau, seed))
}

/// The shard's induced subgraph with no synthetic nodes.
pub fn induced_subgraph(p: &Partition, g: &LabeledGraph, shard: usize) -> Result<RepairedSubgraph> {
    check_shard(p, shard)?;
    let real = live_members(p, g, shard);
    let edges = intra_edges(g, &real);
    let counts = vec![0; real.len()];
    Ok(assemble(g, shard, real, edges, &counts, None, 1.0, 0))
}

/// Repairs every shard, in parallel.
pub fn repair_all(
    p: &Partition,
    g: &LabeledGraph,
    rec: &DegreeRecord,
    strategy: Option<RepairStrategy>,
    tau: f64,
    seed: u64,
) -> Result<Vec<RepairedSubgraph>> {
    use rayon::prelude::*;
    (0..p.num_shards())
        .into_par_iter()
        .map(|s| match strategy {
            Some(st) => repair(p, g, rec, s, st, tau, seed),
            None => induced_subgraph(p, g, s),
        })
        .collect()
}

/// Updates a repaired shard after nodes, edges or features were unlearned.
///
/// Removed nodes leave with their edges and synthetic neighbors. Surviving
/// nodes whose recorded degree dropped lose their newest synthetic
/// neighbors. Features are re-read from `g_after`, so the result equals a
/// fresh repair of the same members on the updated graph.
pub fn shrink_after_unlearn(
    rs: &RepairedSubgraph,
    removed: &BTreeSet<usize>,
    new_rec: &DegreeRecord,
    g_after: &LabeledGraph,
) -> Result<RepairedSubgraph> {
    let real: Vec<usize> = rs
        .real_nodes
        .iter()
        .copied()
        .filter(|u| !removed.contains(u) && !g_after.is_removed(*u))
        .collect();
    let edges = intra_edges(g_after, &real);
    let deg = intra_degrees(&real, &edges);
    let mut counts = Vec::with_capacity(real.len());
    for (&u, d) in real.iter().zip(deg) {
        let need = match rs.strategy {
            Some(_) => missing(new_rec, u, d)?,
            None => 0,
        };
        let have = rs.synthetic_count(u);
        if need > have {
            return Err(GuideError::Consistency(format!(
                "node {u} in shard {} needs {need} synthetic neighbors after unlearning but has only {have}",
                rs.shard_id
            )));
        }
        counts.push(need);
    }
    Ok(assemble(
        g_after,
        rs.shard_id,
        real,
        edges,
        &counts,
        rs.strategy,
        rs.tau,
        rs.rng_seed,
    ))
}

const HEADER: &str = "GUIDE-SHARD 1";

/// Writes `edges.txt`, `features.csv`, `nodes.txt` and `mask.txt` into `dir`.
pub fn write_repaired(rs: &RepairedSubgraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("edges.txt"), format_edges(&rs.edges()))?;
    fs::write(dir.join("features.csv"), format_features(&rs.features))?;
    let mut nodes = format!(
        "{HEADER}\nshard {}\nstrategy {}\ntau {}\nseed {}\ndim {}\n",
        rs.shard_id,
        rs.strategy.map_or_else(|| "none".to_string(), |s| s.to_string()),
        rs.tau,
        rs.rng_seed,
        rs.feature_dim()
    );
    for (i, (&u, &l)) in rs.real_nodes.iter().zip(&rs.real_labels).enumerate() {
        nodes.push_str(&format!("{i} real {u} {l}\n"));
    }
    let base = rs.real_nodes.len();
    for (i, s) in rs.synthetic_nodes.iter().enumerate() {
        nodes.push_str(&format!("{} synthetic {} {}\n", base + i, s.owner, s.ordinal));
    }
    fs::write(dir.join("nodes.txt"), nodes)?;
    let mask: String = rs
        .loss_mask()
        .iter()
        .map(|&m| if m { "1\n" } else { "0\n" })
        .collect();
    fs::write(dir.join("mask.txt"), mask)?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GuideError {
    GuideError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn header_value<'a>(path: &Path, line: usize, text: Option<&'a str>, key: &str) -> Result<&'a str> {
    let text = text.ok_or_else(|| parse_err(path, line, format!("missing `{key}` line")))?;
    match text.split_once(' ') {
        Some((k, v)) if k == key => Ok(v.trim()),
        _ => Err(parse_err(path, line, format!("expected `{key} <value>`"))),
    }
}

fn parse_num<T: FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {s:?}")))
}

/// Reads a directory written by [`write_repaired`].
pub fn read_repaired(dir: &Path) -> Result<RepairedSubgraph> {
    let nodes_path = dir.join("nodes.txt");
    let text = normalize_newlines(&read_text(&nodes_path)?);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(HEADER) {
        return Err(parse_err(&nodes_path, 1, format!("expected header {HEADER:?}")));
    }
    let shard_id = parse_num(&nodes_path, 2, header_value(&nodes_path, 2, lines.next(), "shard")?)?;
    let strategy = match header_value(&nodes_path, 3, lines.next(), "strategy")? {
        "none" => None,
        s => Some(s.parse::<RepairStrategy>()?),
    };
    let tau = parse_num(&nodes_path, 4, header_value(&nodes_path, 4, lines.next(), "tau")?)?;
    let rng_seed = parse_num(&nodes_path, 5, header_value(&nodes_path, 5, lines.next(), "seed")?)?;
    let dim: usize = parse_num(&nodes_path, 6, header_value(&nodes_path, 6, lines.next(), "dim")?)?;

    let mut real_nodes = Vec::new();
    let mut real_labels = Vec::new();
    let mut synthetic_nodes = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 7;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let local: usize = parse_num(&nodes_path, lineno, parts[0])?;
        if local != real_nodes.len() + synthetic_nodes.len() {
            return Err(parse_err(&nodes_path, lineno, "local ids must be consecutive"));
        }
        match parts.as_slice() {
            [_, "real", u, l] if synthetic_nodes.is_empty() => {
                real_nodes.push(parse_num(&nodes_path, lineno, u)?);
                real_labels.push(parse_num(&nodes_path, lineno, l)?);
            }
            [_, "synthetic", o, k] => synthetic_nodes.push(SyntheticNode {
                owner: parse_num(&nodes_path, lineno, o)?,
                ordinal: parse_num(&nodes_path, lineno, k)?,
            }),
            _ => return Err(parse_err(&nodes_path, lineno, "malformed node line")),
        }
    }
    let n = real_nodes.len() + synthetic_nodes.len();

    let features_path = dir.join("features.csv");
    let features = if n == 0 {
        DMatrix::zeros(0, dim)
    } else {
        parse_features(&read_text(&features_path)?, &features_path.display().to_string())?
    };
    if features.nrows() != n || features.ncols() != dim {
        return Err(GuideError::Load(format!(
            "{}: {}x{} features for {n} nodes of dimension {dim}",
            features_path.display(),
            features.nrows(),
            features.ncols()
        )));
    }

    let edges_path = dir.join("edges.txt");
    let all_edges = parse_edges(&read_text(&edges_path)?, &edges_path.display().to_string())?;
    let base = real_nodes.len();
    let mut intra_edges = Vec::new();
    let mut star_edges = 0;
    for (a, b, w) in all_edges {
        let (a, b) = (a.min(b), a.max(b));
        if b >= n {
            return Err(GuideError::Load(format!("{}: edge ({a}, {b}) out of range", edges_path.display())));
        }
        if b < base {
            intra_edges.push((a, b, w));
        } else {
            star_edges += 1;
        }
    }
    let rs = RepairedSubgraph {
        shard_id,
        real_nodes,
        real_labels,
        synthetic_nodes,
        intra_edges,
        features,
        strategy,
        tau,
        rng_seed,
    };
    if star_edges != rs.synthetic_nodes.len() || rs.edges().len() != rs.intra_edges.len() + star_edges {
        return Err(GuideError::Load(format!(
            "{}: synthetic edges do not match the node manifest",
            edges_path.display()
        )));
    }
    let mask_path = dir.join("mask.txt");
    let mask: Vec<bool> = normalize_newlines(&read_text(&mask_path)?)
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim() == "1")
        .collect();
    if mask != rs.loss_mask() {
        return Err(GuideError::Load(format!("{}: mask disagrees with node manifest", mask_path.display())));
    }
    Ok(rs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cliques() -> LabeledGraph {
        let mut edges = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
        edges.push((3, 4, 1.0));
        let x = DMatrix::from_fn(8, 3, |r, c| (r * 3 + c + 1) as f64);
        LabeledGraph::new(edges, x, vec![0, 1, 0, 1, 0, 1, 0, 1], None).unwrap()
    }

    fn split() -> Partition {
        Partition::new(vec![0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap()
    }

    #[test]
    fn counts_follow_cut_edges() {
        let g = two_cliques();
        let rec = DegreeRecord::from_graph(&g);
        let c = missing_counts(&split(), &g, &rec, 0).unwrap();
        assert_eq!(c, vec![(0, 0), (1, 0), (2, 0), (3, 1)]);
        let whole = Partition::new(vec![0; 8], 2).unwrap();
        assert!(missing_counts(&whole, &g, &rec, 0).unwrap().iter().all(|&(_, k)| k == 0));
    }

    #[test]
    fn node_with_one_intra_neighbor() {
        let g = LabeledGraph::new(
            [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)],
            DMatrix::zeros(4, 1),
            vec![0, 0, 1, 1],
            None,
        )
        .unwrap();
        let p = Partition::new(vec![0, 0, 1, 1], 2).unwrap();
        let c = missing_counts(&p, &g, &DegreeRecord::from_graph(&g), 0).unwrap();
        assert_eq!(c[0], (0, 2));
    }

    #[test]
    fn stale_record_is_a_consistency_error() {
        let g = two_cliques();
        let mut rec = DegreeRecord::from_graph(&g);
        rec.original_degree[0] = 0;
        assert!(matches!(
            missing_counts(&split(), &g, &rec, 0),
            Err(GuideError::Consistency(_))
        ));
    }

    #[test]
    fn strategies_set_features() {
        let g = LabeledGraph::new(
            [(0, 1, 1.0), (0, 2, 1.0)],
            DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 0.0, 0.0, 1.0, 4.0, 4.0, 4.0]),
            vec![0, 1, 1],
            None,
        )
        .unwrap();
        let p = Partition::new(vec![0, 1, 1], 2).unwrap();
        let rec = DegreeRecord::from_graph(&g);
        let zero = repair(&p, &g, &rec, 0, RepairStrategy::Zero, 1.0, 0).unwrap();
        assert_eq!(zero.synthetic_nodes.len(), 2);
        assert!((0..2).all(|i| zero.synthetic_feature(i) == vec![0.0; 3]));
        assert_eq!(zero.loss_mask(), vec![true, false, false]);
        assert_eq!(zero.local_degree(0), Some(2));

        let mirror = repair(&p, &g, &rec, 0, RepairStrategy::Mirror, 1.0, 0).unwrap();
        assert_eq!(mirror.synthetic_feature(0), vec![1.0, 2.0, 3.0]);

        let mix = repair(&p, &g, &rec, 0, RepairStrategy::MixUp, 0.3, 9).unwrap();
        for i in 0..2 {
            let lambda = mixup_lambda(9, 0, 0, i, 0.3);
            assert!((0.0..=0.3).contains(&lambda));
            let expect: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|x| x * lambda).collect();
            assert_eq!(mix.synthetic_feature(i), expect);
        }
        assert!(repair(&p, &g, &rec, 0, RepairStrategy::MixUp, 0.0, 9).is_err());
        assert!(repair(&p, &g, &rec, 0, RepairStrategy::MixUp, 1.5, 9).is_err());
    }

    #[test]
    fn mixup_endpoints_are_zero_and_mirror() {
        let x = [1.5, -2.0];
        let scaled = |l: f64| x.iter().map(|v| v * l).collect::<Vec<_>>();
        assert_eq!(scaled(0.0), vec![0.0, -0.0]);
        assert_eq!(scaled(1.0), x.to_vec());
    }

    #[test]
    fn every_real_node_regains_its_degree() {
        let g = two_cliques();
        let rec = DegreeRecord::from_graph(&g);
        for rs in repair_all(&split(), &g, &rec, Some(RepairStrategy::Mirror), 1.0, 0).unwrap() {
            for &u in &rs.real_nodes {
                assert_eq!(rs.local_degree(u), Some(rec.degree(u)));
            }
        }
    }

    #[test]
    fn cross_shard_removal_drops_a_synthetic_neighbor() {
        let g = two_cliques();
        let rec = DegreeRecord::from_graph(&g);
        let p = split();
        let rs = repair(&p, &g, &rec, 1, RepairStrategy::MixUp, 1.0, 4).unwrap();
        assert_eq!(rs.synthetic_count(4), 1);
        let after = g.without_node(3);
        let new_rec = DegreeRecord::from_graph(&after);
        let shrunk = shrink_after_unlearn(&rs, &BTreeSet::from([3]), &new_rec, &after).unwrap();
        assert_eq!(shrunk.synthetic_count(4), 0);
        assert_eq!(shrunk, repair(&p, &after, &new_rec, 1, RepairStrategy::MixUp, 1.0, 4).unwrap());
    }

    #[test]
    fn isolated_removal_leaves_shard_unchanged() {
        let g = LabeledGraph::new([(0, 1, 1.0)], DMatrix::zeros(3, 1), vec![0, 1, 0], None).unwrap();
        let p = Partition::new(vec![0, 0, 1], 2).unwrap();
        let rec = DegreeRecord::from_graph(&g);
        let rs = repair(&p, &g, &rec, 0, RepairStrategy::Zero, 1.0, 0).unwrap();
        let after = g.without_node(2);
        let shrunk = shrink_after_unlearn(&rs, &BTreeSet::from([2]), &DegreeRecord::from_graph(&after), &after).unwrap();
        assert_eq!(shrunk, rs);
    }

    #[test]
    fn growth_is_rejected() {
        let g = two_cliques();
        let rec = DegreeRecord::from_graph(&g);
        let rs = repair(&split(), &g, &rec, 0, RepairStrategy::Zero, 1.0, 0).unwrap();
        let mut bigger = rec.clone();
        bigger.original_degree[0] += 1;
        assert!(matches!(
            shrink_after_unlearn(&rs, &BTreeSet::new(), &bigger, &g),
            Err(GuideError::Consistency(_))
        ));
    }

    #[test]
    fn directory_round_trip() {
        let g = two_cliques();
        let rec = DegreeRecord::from_graph(&g);
        let dir = tempfile::tempdir().unwrap();
        for strategy in [Some(RepairStrategy::MixUp), None] {
            let rs = match strategy {
                Some(s) => repair(&split(), &g, &rec, 1, s, 0.5, 11).unwrap(),
                None => induced_subgraph(&split(), &g, 1).unwrap(),
            };
            write_repaired(&rs, dir.path()).unwrap();
            assert_eq!(read_repaired(dir.path()).unwrap(), rs);
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [RepairStrategy::Zero, RepairStrategy::Mirror, RepairStrategy::MixUp] {
            assert_eq!(s.to_string().parse::<RepairStrategy>().unwrap(), s);
        }
        assert!("median".parse::<RepairStrategy>().is_err());
    }
}
