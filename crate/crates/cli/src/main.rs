use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypertree::checkpoint::{self, Checkpoint};
use hypertree::evaluation::{self, IllnessCounts, IllnessReport, MetricsReport};
use hypertree::{EmbeddingTable, ErrorKind, HierarchyGraph, TrainConfig};

mod manifest;
mod svg;

use manifest::Manifest;

const SEED_ENV: &str = "HYPERTREE_SEED";

#[derive(Parser)]
#[command(name = "hypertree", version, about = "Poincaré-ball embeddings of hierarchies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a balanced tree as a child<TAB>parent edge list.
    GenTree {
        #[arg(long)]
        branching: usize,
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an embedding and write checkpoint, trace and manifest.
    Train(TrainArgs),
    /// Reconstruction metrics and illness counts as JSON.
    Eval {
        #[command(flatten)]
        inputs: EvalInputs,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Illness counts as JSON plus one CSV row per misinferred edge.
    Diagnose {
        #[command(flatten)]
        inputs: EvalInputs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cases: PathBuf,
    },
    /// Render a 2-D checkpoint as SVG, illness edges in red.
    Plot {
        #[command(flatten)]
        inputs: EvalInputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the transitive-closure edges (node to non-parent ancestor).
    Closure {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvalInputs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Tree used for ancestry queries when `--edges` is not itself a tree.
    #[arg(long)]
    backbone: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    edges: PathBuf,
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint path; trace, sidecar and manifest are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Train once per seed; outputs get a `.seed<N>` infix.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    eta_tc: Option<f64>,
    #[arg(long)]
    n_tc: Option<usize>,
    #[arg(long)]
    burn_in_epochs: Option<usize>,
    #[arg(long)]
    burn_in_lr_divisor: Option<f64>,
    #[arg(long)]
    no_dilation: bool,
    #[arg(long)]
    dilation_k: Option<f64>,
    #[arg(long)]
    dilation_start_epoch: Option<usize>,
    #[arg(long)]
    dilation_cooldown: Option<usize>,
    #[arg(long)]
    init_radius: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; above 1 trades determinism for throughput.
    #[arg(long)]
    threads: Option<usize>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// A failed command: message plus exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<hypertree::Error> for Failure {
    fn from(e: hypertree::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Input => 1,
            ErrorKind::Validation => 2,
            ErrorKind::Training => 3,
        };
        Self { code, message: e.to_string() }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn io_failure(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::input(format!("{}: {e}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CmdResult {
    fs::write(path, bytes).map_err(io_failure(path))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::GenTree { branching, levels, out } => {
            let g = HierarchyGraph::balanced_tree(branching, levels)?;
            let mut buf = Vec::new();
            g.write_edge_list(&mut buf).map_err(io_failure(&out))?;
            write_bytes(&out, &buf)
        }
        Command::Train(args) => cmd_train(args),
        Command::Eval { inputs, out } => {
            let report = metrics(&inputs)?;
            let json = report.to_json();
            match out {
                Some(p) => write_bytes(&p, format!("{json}\n").as_bytes()),
                None => {
                    println!("{json}");
                    Ok(())
                }
            }
        }
        Command::Diagnose { inputs, out, cases } => cmd_diagnose(&inputs, &out, &cases),
        Command::Plot { inputs, out } => cmd_plot(&inputs, &out),
        Command::Closure { edges, out } => {
            let g = HierarchyGraph::load_edge_list(&edges)?;
            let pairs = g.transitive_closure()?;
            let mut buf = Vec::new();
            g.write_pairs(&mut buf, &pairs).map_err(io_failure(&out))?;
            write_bytes(&out, &buf)
        }
    }
}

fn build_config(args: &TrainArgs) -> CmdResult<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Failure::input(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
    }
    macro_rules! apply {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field {
                cfg.$field = v;
            }
        )*};
    }
    apply!(
        dim,
        lr,
        epochs,
        batch_size,
        negatives,
        eta_tc,
        n_tc,
        burn_in_epochs,
        burn_in_lr_divisor,
        dilation_k,
        dilation_start_epoch,
        dilation_cooldown,
        init_radius,
        eps,
        seed,
        threads
    );
    if args.no_dilation {
        cfg.dilation_enabled = false;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `dir/name.tsv` → `dir/name<infix><ext>`.
fn sibling(path: &Path, infix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{infix}{ext}"))
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let base = build_config(&args)?;
    let g = HierarchyGraph::load_edge_list(&args.edges)?;
    let runs: Vec<(TrainConfig, PathBuf)> = if args.seeds.is_empty() {
        vec![(base.clone(), args.out.clone())]
    } else {
        let ext = args
            .out
            .extension()
            .map(|e| format!(".{}", e.to_string_lossy()))
            .unwrap_or_default();
        args.seeds
            .iter()
            .map(|&s| {
                let cfg = TrainConfig { seed: s, ..base.clone() };
                (cfg, sibling(&args.out, &format!(".seed{s}"), &ext))
            })
            .collect()
    };

    for (cfg, out) in runs {
        let trace_path = sibling(&out, ".trace", ".csv");
        let manifest_path = sibling(&out, ".manifest", ".json");
        let mut manifest = Manifest::start("train", &cfg);
        manifest.add_input(&args.edges)?;
        if let Some(c) = &args.config {
            manifest.add_input(c)?;
        }
        manifest.add_output("checkpoint", &out);
        manifest.add_output("meta", &checkpoint::meta_path(&out));
        manifest.add_output("trace", &trace_path);
        manifest.write(&manifest_path)?;

        let outcome = hypertree::train(&g, &cfg);
        let (table, trace) = match outcome {
            Ok(v) => v,
            Err(e) => {
                manifest.finish("failed");
                manifest.write(&manifest_path)?;
                return Err(e.into());
            }
        };
        checkpoint::write_checkpoint(&out, &g, &table)?;
        checkpoint::write_meta(&out, &cfg, trace.records.len())?;
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).map_err(io_failure(&trace_path))?;
        write_bytes(&trace_path, &csv)?;
        manifest.finish("ok");
        manifest.write(&manifest_path)?;
        eprintln!(
            "seed {}: {} epochs, final loss {}, {} dilations -> {}",
            cfg.seed,
            trace.records.len(),
            trace.records.last().map_or("-".into(), |r| format!("{:.6}", r.mean_loss)),
            trace.dilations(),
            out.display()
        );
    }
    Ok(())
}

struct Loaded {
    graph: HierarchyGraph,
    table: EmbeddingTable,
    checkpoint: Checkpoint,
    backbone: Option<HierarchyGraph>,
}

fn load(inputs: &EvalInputs) -> CmdResult<Loaded> {
    let graph = HierarchyGraph::load_edge_list(&inputs.edges)?;
    let checkpoint = checkpoint::read_checkpoint(&inputs.checkpoint)?;
    let table = checkpoint.align(&graph)?;
    let backbone = inputs
        .backbone
        .as_ref()
        .map(HierarchyGraph::load_edge_list)
        .transpose()?;
    Ok(Loaded { graph, table, checkpoint, backbone })
}

fn illness(l: &Loaded) -> CmdResult<(IllnessReport, &HierarchyGraph)> {
    match &l.backbone {
        Some(bb) => {
            let table = l.checkpoint.align(bb)?;
            Ok((evaluation::classify_illness(&table, bb)?, bb))
        }
        None => Ok((evaluation::classify_illness(&l.table, &l.graph)?, &l.graph)),
    }
}

fn metrics(inputs: &EvalInputs) -> CmdResult<MetricsReport> {
    let l = load(inputs)?;
    let (map, mr_paper, mr_conventional) = evaluation::reconstruction(&l.table, &l.graph)?;
    let (report, _) = illness(&l)?;
    Ok(MetricsReport {
        map,
        mr_paper,
        mr_conventional,
        illness: report.counts,
    })
}

fn cmd_diagnose(inputs: &EvalInputs, out: &Path, cases_path: &Path) -> CmdResult {
    let l = load(inputs)?;
    let (report, tree) = illness(&l)?;
    let counts: &IllnessCounts = &report.counts;
    let json = serde_json::to_string_pretty(counts).map_err(|e| Failure::input(e.to_string()))?;
    write_bytes(out, format!("{json}\n").as_bytes())?;

    let csv = cases_csv(&report, tree).map_err(io_failure(cases_path))?;
    write_bytes(cases_path, &csv)
}

fn cases_csv(report: &IllnessReport, tree: &HierarchyGraph) -> io::Result<Vec<u8>> {
    let mut w = Vec::new();
    writeln!(w, "source,target,inferred,common_ancestor,category")?;
    for c in &report.cases {
        writeln!(
            w,
            "{},{},{},{},{}",
            csv_field(tree.label(c.source)),
            csv_field(tree.label(c.target)),
            csv_field(tree.label(c.inferred)),
            csv_field(tree.label(c.common_ancestor)),
            c.category.as_str()
        )?;
    }
    Ok(w)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn cmd_plot(inputs: &EvalInputs, out: &Path) -> CmdResult {
    let l = load(inputs)?;
    if l.table.dim() != 2 {
        return Err(Failure::input(format!(
            "plot needs a 2-dimensional checkpoint, got dimension {}",
            l.table.dim()
        )));
    }
    let ill_sources: Vec<String> = match illness(&l) {
        Ok((report, tree)) => report.cases.iter().map(|c| tree.label(c.source).to_owned()).collect(),
        Err(f) => {
            eprintln!("warning: {}; edges drawn without illness highlighting", f.message);
            Vec::new()
        }
    };
    let doc = svg::render(&l.graph, &l.table, |child| ill_sources.iter().any(|s| s == l.graph.label(child)));
    write_bytes(out, doc.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypertree::NodeId;

    #[test]
    fn exit_codes_follow_error_kind() {
        let training = hypertree::Error::NonFiniteGradient { source_node: NodeId(1), target: NodeId(0) };
        assert_eq!(Failure::from(training).code, 3);
        let validation = hypertree::Error::Validation(hypertree::TreeError::NoRoot);
        assert_eq!(Failure::from(validation).code, 2);
        let input = hypertree::Error::UnknownNode(NodeId(9));
        assert_eq!(Failure::from(input).code, 1);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/emb.tsv"), ".trace", ".csv"), PathBuf::from("out/emb.trace.csv"));
        assert_eq!(sibling(Path::new("emb"), ".seed3", ""), PathBuf::from("emb.seed3"));
    }
}
