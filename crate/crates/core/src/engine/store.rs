//! State directory persistence and the unlearning audit log.
//!
//! ```text
//! manifest.json            version, revision, seeds, config, checksums
//! graph/                   edges.txt features.csv labels.txt removed.txt
//! partition.txt            node shard
//! degree_record.txt        node degree
//! shards/shard_000/        edges.txt features.csv nodes.txt mask.txt model.txt kernel.txt
//! weights.txt              only with a reference graph
//! reference_embedding.csv  only with a reference graph
//! audit.log                append-only, not checksummed
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EngineConfig, EnsembleState, KernelReference, ShardState};
use crate::error::{GuideError, Result};
use crate::graph::io::{
    format_edges, format_features, format_labels, normalize_newlines, parse_edges, parse_features, parse_labels,
    read_text,
};
use crate::graph::{Adjacency, DegreeRecord, LabeledGraph};
use crate::kernel::{EigenEmbedding, ShardWeights};
use crate::model::{read_model, write_model};
use crate::partition::{read_partition, write_partition};
use crate::repair::{read_repaired, write_repaired};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Unlearned {
    nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
    features: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    revision: u64,
    seed: u64,
    shard_seeds: Vec<u64>,
    num_classes: usize,
    config: EngineConfig,
    unlearned: Unlearned,
    reference_fingerprint: Option<String>,
    checksums: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn shard_dir(i: usize) -> String {
    format!("shards/shard_{i:03}")
}

/// Collects written files and their checksums.
struct Writer<'a> {
    root: &'a Path,
    sums: BTreeMap<String, String>,
}

impl Writer<'_> {
    fn put(&mut self, rel: &str, body: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, body)?;
        self.sums.insert(rel.to_string(), sha256_hex(body));
        Ok(())
    }

    /// Records files some other routine already wrote.
    fn adopt(&mut self, rel: &str) -> Result<()> {
        let body = fs::read(self.root.join(rel))?;
        self.sums.insert(rel.to_string(), sha256_hex(&body));
        Ok(())
    }
}

fn format_ids(ids: impl IntoIterator<Item = usize>) -> String {
    ids.into_iter().map(|u| format!("{u}\n")).collect()
}

/// Writes the state. The manifest goes last, so a reader never sees a
/// manifest whose checksums describe files that are not there yet.
pub fn save_state(state: &EnsembleState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = Writer {
        root: dir,
        sums: BTreeMap::new(),
    };
    let g = &state.graph;
    w.put("graph/edges.txt", format_edges(&g.adjacency().edges()).as_bytes())?;
    w.put("graph/features.csv", format_features(g.features()).as_bytes())?;
    w.put("graph/labels.txt", format_labels(g.labels()).as_bytes())?;
    let removed = (0..g.node_count()).filter(|&u| g.is_removed(u));
    w.put("graph/removed.txt", format_ids(removed).as_bytes())?;

    write_partition(&dir.join("partition.txt"), &state.partition)?;
    w.adopt("partition.txt")?;
    let rec: String = state
        .degree_record
        .original_degree
        .iter()
        .enumerate()
        .map(|(u, d)| format!("{u} {d}\n"))
        .collect();
    w.put("degree_record.txt", rec.as_bytes())?;

    for (i, shard) in state.shards.iter().enumerate() {
        let rel = shard_dir(i);
        let path = dir.join(&rel);
        write_repaired(&shard.repaired, &path)?;
        for f in ["edges.txt", "features.csv", "nodes.txt", "mask.txt"] {
            w.adopt(&format!("{rel}/{f}"))?;
        }
        write_model(&shard.model, &path.join("model.txt"))?;
        w.adopt(&format!("{rel}/model.txt"))?;
        let kernel = match state.raw_kernels() {
            Some(raw) => format!("{}\n", raw[i]),
            None => "none\n".to_string(),
        };
        w.put(&format!("{rel}/kernel.txt"), kernel.as_bytes())?;
    }

    match &state.reference {
        Some(r) => {
            w.put("weights.txt", r.weights.to_text().as_bytes())?;
            w.put("reference_embedding.csv", format_features(&r.embedding.vectors).as_bytes())?;
        }
        None => {
            for stale in ["weights.txt", "reference_embedding.csv"] {
                let p = dir.join(stale);
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
        }
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        revision: state.revision,
        seed: state.config.seed,
        shard_seeds: state.shards.iter().map(|s| s.seed).collect(),
        num_classes: g.num_classes(),
        config: state.config.clone(),
        unlearned: Unlearned {
            nodes: state.unlearned_nodes.iter().copied().collect(),
            edges: state.unlearned_edges.iter().copied().collect(),
            features: state.unlearned_features.iter().copied().collect(),
        },
        reference_fingerprint: state.reference.as_ref().map(|r| r.fingerprint.clone()),
        checksums: w.sums,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| GuideError::Consistency(format!("cannot serialize manifest: {e}")))?;
    let tmp = dir.join("manifest.json.tmp");
    fs::write(&tmp, json)?;
    fs::rename(tmp, dir.join("manifest.json"))?;
    Ok(())
}

fn load_err(msg: impl Into<String>) -> GuideError {
    GuideError::Load(msg.into())
}

fn text(dir: &Path, rel: &str) -> Result<(String, String)> {
    let path: PathBuf = dir.join(rel);
    Ok((read_text(&path)?, path.display().to_string()))
}

fn parse_ids(body: &str, path: &str) -> Result<Vec<usize>> {
    parse_labels(body, path)
}

fn parse_degree_record(body: &str, path: &str, n: usize) -> Result<DegreeRecord> {
    let mut degrees = Vec::with_capacity(n);
    for (i, line) in normalize_newlines(body).lines().enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [u, d] => u.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
            _ => None,
        };
        match parsed {
            Some((u, d)) if u == degrees.len() => degrees.push(d),
            _ => {
                return Err(GuideError::Parse {
                    path: path.to_string(),
                    line: i + 1,
                    msg: "expected `node degree` in node order".into(),
                })
            }
        }
    }
    if degrees.len() != n {
        return Err(load_err(format!("{path}: {} entries for {n} nodes", degrees.len())));
    }
    Ok(DegreeRecord {
        original_degree: degrees,
    })
}

/// Reads a state directory, verifying its format version and every checksum.
pub fn load_state(dir: &Path) -> Result<EnsembleState> {
    let manifest_path = dir.join("manifest.json");
    let raw = read_text(&manifest_path)?;
    let value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| load_err(format!("{}: {e}", manifest_path.display())))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| load_err(format!("{}: missing format_version", manifest_path.display())))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(GuideError::Version {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    let m: Manifest = serde_json::from_value(value)
        .map_err(|e| load_err(format!("{}: {e}", manifest_path.display())))?;

    for (rel, expected) in &m.checksums {
        let body = fs::read(dir.join(rel)).map_err(|e| load_err(format!("{rel}: {e}")))?;
        if &sha256_hex(&body) != expected {
            return Err(load_err(format!("checksum mismatch in {rel}")));
        }
    }
    let v = m.shard_seeds.len();
    for i in 0..v {
        for f in ["edges.txt", "features.csv", "nodes.txt", "mask.txt", "model.txt", "kernel.txt"] {
            let rel = format!("{}/{f}", shard_dir(i));
            if !m.checksums.contains_key(&rel) {
                return Err(load_err(format!("manifest has no checksum for {rel}")));
            }
        }
    }

    let (body, path) = text(dir, "graph/features.csv")?;
    let features = parse_features(&body, &path)?;
    let n = features.nrows();
    let (body, path) = text(dir, "graph/labels.txt")?;
    let labels = parse_labels(&body, &path)?;
    let (body, path) = text(dir, "graph/edges.txt")?;
    let adjacency = Adjacency::from_edges(n, parse_edges(&body, &path)?)?;
    let (body, path) = text(dir, "graph/removed.txt")?;
    let mut removed = vec![false; n];
    for u in parse_ids(&body, &path)? {
        *removed
            .get_mut(u)
            .ok_or_else(|| load_err(format!("{path}: node {u} out of range")))? = true;
    }
    let graph = LabeledGraph::from_parts(adjacency, features, labels, m.num_classes, removed)?;

    let partition = read_partition(&dir.join("partition.txt"), Some(v))?;
    let (body, path) = text(dir, "degree_record.txt")?;
    let degree_record = parse_degree_record(&body, &path, n)?;

    let mut shards = Vec::with_capacity(v);
    let mut raw = Vec::with_capacity(v);
    for (i, &seed) in m.shard_seeds.iter().enumerate() {
        let rel = shard_dir(i);
        let path = dir.join(&rel);
        let repaired = read_repaired(&path).map_err(|e| load_err(format!("shard {i}: {e}")))?;
        let model = read_model(&path.join("model.txt")).map_err(|e| match e {
            GuideError::Version { .. } => e,
            other => load_err(format!("shard {i}: {other}")),
        })?;
        let (body, kpath) = text(dir, &format!("{rel}/kernel.txt"))?;
        match body.trim() {
            "none" => {}
            k => raw.push(
                k.parse::<f64>()
                    .map_err(|_| load_err(format!("{kpath}: bad kernel value {k:?}")))?,
            ),
        }
        shards.push(ShardState { repaired, model, seed });
    }

    let reference = match &m.reference_fingerprint {
        None => {
            if !raw.is_empty() {
                return Err(load_err("shard kernel values present without a reference graph"));
            }
            None
        }
        Some(fingerprint) => {
            let weights = ShardWeights::read(&dir.join("weights.txt"))?;
            if weights.raw != raw {
                return Err(load_err("weights.txt disagrees with the shard kernel values"));
            }
            let (body, path) = text(dir, "reference_embedding.csv")?;
            Some(KernelReference {
                embedding: EigenEmbedding {
                    vectors: parse_features(&body, &path)?,
                },
                fingerprint: fingerprint.clone(),
                weights,
            })
        }
    };

    Ok(EnsembleState {
        graph,
        partition,
        degree_record,
        shards,
        reference,
        config: m.config,
        revision: m.revision,
        unlearned_nodes: m.unlearned.nodes.into_iter().collect::<BTreeSet<_>>(),
        unlearned_edges: m.unlearned.edges.into_iter().collect(),
        unlearned_features: m.unlearned.features.into_iter().collect(),
    })
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub revision: u64,
    pub kind: String,
    pub ids: Vec<usize>,
    pub retrained: Vec<usize>,
    pub wall: Duration,
}

fn join(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Appends one line to `audit.log` in `dir`.
pub fn append_audit(dir: &Path, entry: &AuditEntry) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("audit.log"))?;
    writeln!(
        f,
        "revision={} kind={} ids={} retrained={} wall_ms={:.3}",
        entry.revision,
        entry.kind,
        join(&entry.ids),
        join(&entry.retrained),
        entry.wall.as_secs_f64() * 1e3
    )?;
    Ok(())
}
