//! The `guide` command line.
//!
//! Every subcommand reads its inputs, calls one library entry point, writes
//! its artifact into the state directory and prints one summary record per
//! line, either as `key=value` text or as a JSON object.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::engine::{
    append_audit, batch_unlearn, evaluate_with, load_state, partition_graph, repartition, save_state,
    set_reference, train_all, train_with_partition, Aggregation, AuditEntry, EngineConfig, EnsembleState,
    Partitioner, UnlearnRequest,
};
use crate::error::{GuideError, Result};
use crate::graph::io::{normalize_newlines, parse_edges, parse_features, parse_labels};
use crate::graph::{load_graph, DegreeRecord, LabeledGraph, Partition};
use crate::partition::{partition_scores, read_partition, write_partition};
use crate::repair::{repair_all, write_repaired};

const FIXTURE_TRAIN: [&str; 3] = [
    include_str!("../data/sbm/train/edges.txt"),
    include_str!("../data/sbm/train/features.csv"),
    include_str!("../data/sbm/train/labels.txt"),
];
const FIXTURE_TEST: [&str; 3] = [
    include_str!("../data/sbm/test/edges.txt"),
    include_str!("../data/sbm/test/features.csv"),
    include_str!("../data/sbm/test/labels.txt"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    #[value(alias = "json-lines")]
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggregationArg {
    Similarity,
    Average,
}

#[derive(Parser, Debug)]
#[command(name = "guide", version, about = "Inductive graph unlearning with fair and balanced shards")]
struct Cli {
    /// Directory holding partitions, shards, models and the audit log.
    #[arg(long, global = true, env = "GUIDE_STATE_DIR", default_value = "guide-state")]
    state_dir: PathBuf,
    /// `key=value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Partition the training graph and score the partition.
    Partition {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Repair every shard of the stored partition.
    Repair {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Repair and train every shard of the stored partition.
    Train {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Score the ensemble on a labeled test graph.
    Evaluate {
        #[command(flatten)]
        test: TestArgs,
        #[arg(long, value_enum, default_value_t = AggregationArg::Similarity)]
        aggregation: AggregationArg,
        /// Cache the test graph's kernel values as the state's weights.
        #[arg(long)]
        store_reference: bool,
    },
    /// Unlearn nodes, edges or node features; several requests form one batch.
    Unlearn {
        #[arg(long = "node", value_name = "ID")]
        nodes: Vec<usize>,
        #[arg(long = "edge", value_name = "U,V", value_parser = parse_edge_arg)]
        edges: Vec<(usize, usize)>,
        #[arg(long = "feature", value_name = "ID")]
        features: Vec<usize>,
    },
    /// Partition, repair, train, weight and evaluate in one go.
    Pipeline {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        test: TestArgs,
        #[command(flatten)]
        params: Params,
    },
    /// Recompute the partition of the current graph and retrain all shards.
    /// Breaks shard-by-shard comparability with earlier revisions.
    Repartition,
    /// Time the partitioners and batch unlearning.
    Bench {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        params: Params,
        /// Batch sizes to time.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32, 64])]
        batch_sizes: Vec<usize>,
    },
}

/// Training graph files; the shipped SBM fixture when omitted.
#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long, requires_all = ["features", "labels"])]
    edges: Option<PathBuf>,
    #[arg(long, requires_all = ["edges", "labels"])]
    features: Option<PathBuf>,
    #[arg(long, requires_all = ["edges", "features"])]
    labels: Option<PathBuf>,
}

/// Test graph files; the shipped SBM fixture's test split when omitted.
#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long, requires_all = ["test_features", "test_labels"])]
    test_edges: Option<PathBuf>,
    #[arg(long, requires_all = ["test_edges", "test_labels"])]
    test_features: Option<PathBuf>,
    #[arg(long, requires_all = ["test_edges", "test_features"])]
    test_labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Params {
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    partitioner: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    /// zero, mirror, mixup or none.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    /// sgc or meangnn.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    d_emb: Option<String>,
    #[arg(long)]
    l_max: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    /// strict or lax.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl Params {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        [
            ("v", &self.v),
            ("partitioner", &self.partitioner),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("strategy", &self.strategy),
            ("tau", &self.tau),
            ("model", &self.model),
            ("d_emb", &self.d_emb),
            ("l_max", &self.l_max),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("mode", &self.mode),
            ("seed", &self.seed),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }
}

fn parse_edge_arg(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once([',', '-'])
        .ok_or_else(|| format!("expected U,V, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad node id {t:?}"));
    Ok((parse(a)?, parse(b)?))
}

/// One output line: ordered fields, printed as text or JSON.
struct Record {
    fields: Vec<(&'static str, Value)>,
}

impl Record {
    fn new(command: &str) -> Self {
        Record {
            fields: vec![("command", json!(command))],
        }
    }

    fn put(mut self, key: &'static str, value: impl Into<Value>) -> Self {
        self.fields.push((key, value.into()));
        self
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let map: serde_json::Map<String, Value> =
                    self.fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
                Value::Object(map).to_string()
            }
            Format::Text => self
                .fields
                .iter()
                .map(|(k, v)| format!("{k}={}", text_value(v)))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

fn text_value(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => format!("{:.6}", n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(text_value).collect::<Vec<_>>().join(","),
        Value::Null => "none".into(),
        other => other.to_string(),
    }
}

fn parse_graph(texts: [&str; 3], origin: &str) -> Result<LabeledGraph> {
    let edges = parse_edges(&normalize_newlines(texts[0]), &format!("{origin}/edges.txt"))?;
    let features = parse_features(&normalize_newlines(texts[1]), &format!("{origin}/features.csv"))?;
    let labels = parse_labels(&normalize_newlines(texts[2]), &format!("{origin}/labels.txt"))?;
    LabeledGraph::new(edges, features, labels, None)
}

fn check_exists(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(GuideError::Validation(format!("{} does not exist", p.display())));
        }
    }
    Ok(())
}

impl GraphArgs {
    fn load(&self) -> Result<LabeledGraph> {
        match (&self.edges, &self.features, &self.labels) {
            (Some(e), Some(f), Some(l)) => {
                check_exists(&[e, f, l])?;
                load_graph(e, f, l)
            }
            _ => parse_graph(FIXTURE_TRAIN, "fixture/train"),
        }
    }
}

impl TestArgs {
    fn load(&self) -> Result<LabeledGraph> {
        match (&self.test_edges, &self.test_features, &self.test_labels) {
            (Some(e), Some(f), Some(l)) => {
                check_exists(&[e, f, l])?;
                load_graph(e, f, l)
            }
            _ => parse_graph(FIXTURE_TEST, "fixture/test"),
        }
    }
}

struct Context {
    state_dir: PathBuf,
    config_file: Option<PathBuf>,
    set: Vec<String>,
    format: Format,
}

impl Context {
    /// Defaults, then the config file, then `--set`, then flags.
    fn config(&self, params: &Params) -> Result<EngineConfig> {
        let mut c = EngineConfig::default();
        if let Some(path) = &self.config_file {
            check_exists(&[path])?;
            let text = fs::read_to_string(path)?;
            c.apply_text(&text, &path.display().to_string())?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| GuideError::Argument(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.set(k, v)?;
        }
        for (k, v) in params.pairs() {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn load_state(&self) -> Result<EnsembleState> {
        if !self.state_dir.join("manifest.json").exists() {
            return Err(GuideError::Validation(format!(
                "no trained state in {} (run `train` or `pipeline` first)",
                self.state_dir.display()
            )));
        }
        load_state(&self.state_dir)
    }

    fn partition_path(&self) -> PathBuf {
        self.state_dir.join("partition.txt")
    }
}

fn scores_record(mut r: Record, p: &Partition, g: &LabeledGraph) -> Result<Record> {
    let s = partition_scores(p, g)?;
    r = r
        .put("sizes", p.sizes())
        .put("balance", s.balance)
        .put("fairness", s.fairness)
        .put("ratio_cut", s.ratio_cut);
    Ok(r)
}

fn stored_partition(ctx: &Context, g: &LabeledGraph, config: &EngineConfig) -> Result<Partition> {
    let path = ctx.partition_path();
    if !path.exists() {
        return Err(GuideError::Validation(format!(
            "{} does not exist (run `partition` first)",
            path.display()
        )));
    }
    let p = read_partition(&path, Some(config.num_shards))?;
    if p.node_count() != g.node_count() {
        return Err(GuideError::Validation(format!(
            "stored partition covers {} nodes, graph has {}",
            p.node_count(),
            g.node_count()
        )));
    }
    Ok(p)
}

fn cmd_partition(ctx: &Context, graph: &GraphArgs, params: &Params) -> Result<Vec<Record>> {
    let g = graph.load()?;
    let config = ctx.config(params)?;
    let start = Instant::now();
    let p = partition_graph(&g, &config)?;
    let elapsed = start.elapsed();
    fs::create_dir_all(&ctx.state_dir)?;
    write_partition(&ctx.partition_path(), &p)?;
    let s = partition_scores(&p, &g)?;
    fs::write(
        ctx.state_dir.join("scores.txt"),
        format!(
            "balance={:.6} fairness={:.6} ratio_cut={:.6}\n",
            s.balance, s.fairness, s.ratio_cut
        ),
    )?;
    let r = Record::new("partition")
        .put("partitioner", config.partitioner.to_string())
        .put("v", config.num_shards)
        .put("nodes", g.node_count());
    let r = scores_record(r, &p, &g)?.put("seconds", elapsed.as_secs_f64());
    Ok(vec![r])
}

fn cmd_repair(ctx: &Context, graph: &GraphArgs, params: &Params) -> Result<Vec<Record>> {
    let g = graph.load()?;
    let config = ctx.config(params)?;
    let p = stored_partition(ctx, &g, &config)?;
    let rec = DegreeRecord::from_graph(&g);
    let shards = repair_all(&p, &g, &rec, config.strategy, config.tau, config.seed)?;
    for rs in &shards {
        write_repaired(rs, &ctx.state_dir.join(format!("shards/shard_{:03}", rs.shard_id)))?;
    }
    let strategy = config.strategy.map_or("none".to_string(), |s| s.to_string());
    Ok(vec![Record::new("repair")
        .put("strategy", strategy)
        .put("shards", shards.len())
        .put("real", shards.iter().map(|s| s.real_count()).collect::<Vec<_>>())
        .put("synthetic", shards.iter().map(|s| s.synthetic_nodes.len()).collect::<Vec<_>>())])
}

fn train_record(command: &str, state: &EnsembleState) -> Record {
    let losses: Vec<Value> = state
        .shards
        .iter()
        .map(|s| s.model.final_loss.map_or(Value::Null, |l| json!(l)))
        .collect();
    Record::new(command)
        .put("shards", state.num_shards())
        .put("revision", state.revision)
        .put("model", state.config.model.to_string())
        .put("final_loss", losses)
}

fn cmd_train(ctx: &Context, graph: &GraphArgs, params: &Params) -> Result<Vec<Record>> {
    let g = graph.load()?;
    let config = ctx.config(params)?;
    let p = stored_partition(ctx, &g, &config)?;
    let state = train_with_partition(&g, p, &config)?;
    save_state(&state, &ctx.state_dir)?;
    Ok(vec![train_record("train", &state)])
}

fn evaluation_record(command: &str, state: &EnsembleState, test: &LabeledGraph, agg: Aggregation) -> Result<Record> {
    let e = evaluate_with(state, test, agg)?;
    Ok(Record::new(command)
        .put("accuracy", e.metrics.accuracy)
        .put("macro_f1", e.metrics.macro_f1)
        .put("weights", e.weights)
        .put("shard_accuracy", e.per_shard_accuracy))
}

fn cmd_evaluate(ctx: &Context, test: &TestArgs, agg: AggregationArg, store: bool) -> Result<Vec<Record>> {
    let mut state = ctx.load_state()?;
    let test = test.load()?;
    if store {
        set_reference(&mut state, &test)?;
        save_state(&state, &ctx.state_dir)?;
    }
    let agg = match agg {
        AggregationArg::Similarity => Aggregation::Similarity,
        AggregationArg::Average => Aggregation::Average,
    };
    let r = evaluation_record("evaluate", &state, &test, agg)?.put("revision", state.revision);
    Ok(vec![r])
}

fn cmd_unlearn(ctx: &Context, nodes: &[usize], edges: &[(usize, usize)], features: &[usize]) -> Result<Vec<Record>> {
    let mut requests: Vec<UnlearnRequest> = nodes.iter().map(|&u| UnlearnRequest::Node(u)).collect();
    requests.extend(edges.iter().map(|&(u, v)| UnlearnRequest::Edge(u, v)));
    requests.extend(features.iter().map(|&u| UnlearnRequest::Feature(u)));
    if requests.is_empty() {
        return Err(GuideError::Argument("give at least one --node, --edge or --feature".into()));
    }
    let state = ctx.load_state()?;
    let (next, report) = batch_unlearn(&state, &requests)?;
    save_state(&next, &ctx.state_dir)?;
    for req in &requests {
        append_audit(
            &ctx.state_dir,
            &AuditEntry {
                revision: report.revision,
                kind: req.kind().to_string(),
                ids: req.ids(),
                retrained: report.retrained.clone(),
                wall: report.elapsed,
            },
        )?;
    }
    Ok(vec![Record::new("unlearn")
        .put("requests", requests.iter().map(|r| r.to_string()).collect::<Vec<_>>())
        .put("retrained", report.retrained)
        .put("revision", report.revision)
        .put("seconds", report.elapsed.as_secs_f64())])
}

fn cmd_pipeline(ctx: &Context, graph: &GraphArgs, test: &TestArgs, params: &Params) -> Result<Vec<Record>> {
    let g = graph.load()?;
    let test = test.load()?;
    let config = ctx.config(params)?;
    let start = Instant::now();
    let mut state = train_all(&g, &config)?;
    set_reference(&mut state, &test)?;
    let elapsed = start.elapsed();
    save_state(&state, &ctx.state_dir)?;
    let e = evaluate_with(&state, &test, Aggregation::Similarity)?;
    let r = Record::new("pipeline")
        .put("partitioner", config.partitioner.to_string())
        .put("v", config.num_shards);
    let r = scores_record(r, &state.partition, &g)?
        .put("accuracy", e.metrics.accuracy)
        .put("macro_f1", e.metrics.macro_f1)
        .put("weights", e.weights)
        .put("revision", state.revision)
        .put("seconds", elapsed.as_secs_f64());
    Ok(vec![r])
}

fn cmd_repartition(ctx: &Context) -> Result<Vec<Record>> {
    let state = ctx.load_state()?;
    let next = repartition(&state)?;
    save_state(&next, &ctx.state_dir)?;
    let r = Record::new("repartition").put("revision", next.revision);
    Ok(vec![scores_record(r, &next.partition, &next.graph)?])
}

fn cmd_bench(ctx: &Context, graph: &GraphArgs, params: &Params, batch_sizes: &[usize]) -> Result<Vec<Record>> {
    let g = graph.load()?;
    let config = ctx.config(params)?;
    let mut out = Vec::new();
    for partitioner in [Partitioner::Fast, Partitioner::Sr, Partitioner::Random] {
        let c = EngineConfig { partitioner, ..config.clone() };
        let start = Instant::now();
        let p = partition_graph(&g, &c)?;
        let seconds = start.elapsed().as_secs_f64();
        let r = Record::new("bench")
            .put("stage", "partition")
            .put("partitioner", partitioner.to_string());
        out.push(scores_record(r, &p, &g)?.put("seconds", seconds));
    }
    let start = Instant::now();
    let state = train_all(&g, &config)?;
    out.push(
        Record::new("bench")
            .put("stage", "train")
            .put("shards", state.num_shards())
            .put("seconds", start.elapsed().as_secs_f64()),
    );
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    for &k in batch_sizes {
        if k == 0 || k > order.len() {
            return Err(GuideError::Argument(format!(
                "batch size {k} outside 1..={}",
                order.len()
            )));
        }
        let reqs: Vec<UnlearnRequest> = order[..k].iter().map(|&u| UnlearnRequest::Node(u)).collect();
        let (_, report) = batch_unlearn(&state, &reqs)?;
        out.push(
            Record::new("bench")
                .put("stage", "unlearn")
                .put("batch", k)
                .put("retrained", report.retrained.len())
                .put("seconds", report.elapsed.as_secs_f64()),
        );
    }
    Ok(out)
}

fn dispatch(ctx: &Context, command: &Command) -> Result<Vec<Record>> {
    match command {
        Command::Partition { graph, params } => cmd_partition(ctx, graph, params),
        Command::Repair { graph, params } => cmd_repair(ctx, graph, params),
        Command::Train { graph, params } => cmd_train(ctx, graph, params),
        Command::Evaluate {
            test,
            aggregation,
            store_reference,
        } => cmd_evaluate(ctx, test, *aggregation, *store_reference),
        Command::Unlearn { nodes, edges, features } => cmd_unlearn(ctx, nodes, edges, features),
        Command::Pipeline { graph, test, params } => cmd_pipeline(ctx, graph, test, params),
        Command::Repartition => cmd_repartition(ctx),
        Command::Bench {
            graph,
            params,
            batch_sizes,
        } => cmd_bench(ctx, graph, params, batch_sizes),
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code:
/// 0 on success, 1 for a rejected unlearning request, 2 for invalid input and
/// 3 for numerical failures.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    return 0;
                }
                _ => 2,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    let ctx = Context {
        state_dir: cli.state_dir.clone(),
        config_file: cli.config.clone(),
        set: cli.set.clone(),
        format: cli.format,
    };
    match dispatch(&ctx, &cli.command) {
        Ok(records) => {
            for r in records {
                let _ = writeln!(out, "{}", r.render(ctx.format));
            }
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
