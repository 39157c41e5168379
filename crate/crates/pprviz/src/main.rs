use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pprviz::bench::{run_bench, to_csv};
use pprviz::server::{bind, serve, AppState};
use pprviz_core::graph::load_edge_list;
use pprviz_core::layout::{render_svg, LayoutFile, SvgNode};
use pprviz_core::metrics::layout_metrics;
use pprviz_core::pipeline::{
    preprocess, visualize_single_level, PreprocessConfig, PreprocessOutcome, VisualizationResponse,
    VisualizeOptions, Workspace, DEFAULT_SINGLE_LEVEL_LIMIT,
};
use pprviz_core::ppr::{Engine, GateMode, PprParams};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "pprviz", version, about = "Multi-level graph layouts from PPR distances")]
struct Cli {
    /// Worker threads for the push engines (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build hierarchy, DPR index and backward-push cache for an edge list.
    Preprocess(PreprocessArgs),
    /// Lay out the children of a supernode, or a whole small graph.
    Layout(LayoutArgs),
    /// Time random zoom-in paths per level and engine; prints CSV.
    Bench(BenchArgs),
    /// ND and ULCV of a layout file or of a live visualization.
    Metrics(MetricsArgs),
    /// Serve the HTTP API over a workspace.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long, default_value_t = 25)]
    k: usize,
    #[arg(short, long)]
    out: PathBuf,
    /// Add the reverse of every edge.
    #[arg(long)]
    symmetrize: bool,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Json,
    Svg,
    Csv,
}

#[derive(Args)]
struct ViewArgs {
    #[arg(short, long, env = "PPRVIZ_WORKSPACE")]
    workspace: Option<PathBuf>,
    /// Supernode id or `root`.
    #[arg(long, default_value = "root")]
    node: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "taupush")]
    engine: Engine,
    #[arg(long, value_enum, default_value = "mean")]
    gate: Gate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gate {
    Mean,
    Max,
}

#[derive(Args)]
struct LayoutArgs {
    #[command(flatten)]
    view: ViewArgs,
    /// Edge list for --single-level.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Lay out every node of the input graph without a hierarchy.
    #[arg(long)]
    single_level: bool,
    #[arg(long)]
    symmetrize: bool,
    #[arg(long, default_value_t = DEFAULT_SINGLE_LEVEL_LIMIT)]
    max_nodes: usize,
    #[arg(long, value_enum, default_value = "json")]
    emit: Emit,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Include per-stage milliseconds in JSON output.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(short, long, env = "PPRVIZ_WORKSPACE")]
    workspace: PathBuf,
    #[arg(long, default_value_t = 100)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated engines.
    #[arg(long, value_delimiter = ',', default_value = "taupush")]
    engines: Vec<Engine>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// JSON layout file `{"ids": [...], "xy": [[x, y], ...], "edges": [[i, j], ...]}`.
    #[arg(long)]
    layout: Option<PathBuf>,
    #[command(flatten)]
    view: ViewArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(short, long, env = "PPRVIZ_WORKSPACE")]
    workspace: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Cached layout responses; 0 disables the cache.
    #[arg(long, default_value_t = 256)]
    cache: usize,
}

#[derive(Deserialize)]
struct MetricsInput {
    #[serde(flatten)]
    layout: LayoutFile,
    #[serde(default)]
    edges: Vec<[usize; 2]>,
}

fn parse_node(ws: &Workspace, raw: &str) -> Result<u32> {
    if raw == "root" {
        return Ok(ws.hierarchy().root());
    }
    raw.parse()
        .with_context(|| format!("invalid node id {raw:?} (expected a number or `root`)"))
}

fn open_workspace(path: Option<&Path>) -> Result<Workspace> {
    let Some(path) = path else {
        bail!("no workspace given (use -w or set PPRVIZ_WORKSPACE)");
    };
    Ok(Workspace::open(path)?)
}

fn visualize_options(view: &ViewArgs, timing: bool) -> VisualizeOptions {
    VisualizeOptions {
        seed: view.seed,
        engine: view.engine,
        gate: match view.gate {
            Gate::Mean => GateMode::Mean,
            Gate::Max => GateMode::Max,
        },
        timing,
        ..VisualizeOptions::default()
    }
}

fn write_output(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn apply_params(mut p: PprParams, args: &ParamArgs) -> Result<PprParams> {
    if let Some(a) = args.alpha {
        p.alpha = a;
    }
    if let Some(e) = args.epsilon {
        p.epsilon = e;
    }
    if let Some(d) = args.delta {
        p.delta = d;
    }
    p.validate()?;
    Ok(p)
}

fn render(response: &VisualizationResponse, emit: Emit) -> String {
    match emit {
        Emit::Json => response.to_json(),
        Emit::Svg => {
            let nodes: Vec<SvgNode> = response
                .children
                .iter()
                .zip(&response.coords)
                .map(|(c, &xy)| SvgNode {
                    id: c.id,
                    xy,
                    leaf_count: c.leaf_count,
                })
                .collect();
            render_svg(&nodes, &response.edge_indices())
        }
        Emit::Csv => {
            let mut s = String::from("id,label,leaf_count,x,y\n");
            for (c, p) in response.children.iter().zip(&response.coords) {
                s.push_str(&format!("{},{},{},{:.17e},{:.17e}\n", c.id, c.label, c.leaf_count, p[0], p[1]));
            }
            s
        }
    }
}

fn cmd_preprocess(args: &PreprocessArgs) -> Result<()> {
    let cfg = PreprocessConfig {
        k: args.k,
        alpha: args.params.alpha,
        epsilon: args.params.epsilon,
        delta: args.params.delta,
        symmetrize: args.symmetrize,
    };
    let (ws, outcome) = preprocess(&args.input, &args.out, &cfg)?;
    let m = ws.manifest();
    let status = match outcome {
        PreprocessOutcome::Built => "built",
        PreprocessOutcome::UpToDate => "up-to-date",
    };
    println!(
        "{status}: n={} m={} k={} levels={} root={} gbp_cache={} dir={}",
        m.n,
        m.m,
        m.params.k,
        m.levels,
        m.root,
        m.gbp_cache_entries,
        args.out.display()
    );
    Ok(())
}

fn cmd_layout(args: &LayoutArgs) -> Result<()> {
    let opts = visualize_options(&args.view, args.timing);
    let response = if args.single_level {
        let Some(input) = &args.input else {
            bail!("--single-level needs -i <edge list>");
        };
        let loaded = load_edge_list(input, args.symmetrize)?;
        let n = loaded.graph.node_count();
        let params = apply_params(PprParams::defaults(n.max(2), n), &args.params)?;
        visualize_single_level(&loaded.graph, Some(&loaded.remap), &params, &opts, args.max_nodes)?
    } else {
        let ws = open_workspace(args.view.workspace.as_deref())?;
        let id = parse_node(&ws, &args.view.node)?;
        ws.visualize(id, &opts)?
    };
    write_output(args.out.as_deref(), &render(&response, args.emit))
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let ws = Workspace::open(&args.workspace)?;
    let rows = run_bench(&ws, &args.engines, args.paths, args.seed)?;
    let csv = to_csv(&rows);
    write_output(args.out.as_deref(), csv.trim_end())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let body = if let Some(path) = &args.layout {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let input: MetricsInput =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let c = input.layout.xy.len();
        if input.layout.ids.len() != c {
            bail!("{}: {} ids for {} points", path.display(), input.layout.ids.len(), c);
        }
        let edges: Vec<(usize, usize)> = input.edges.iter().map(|&[a, b]| (a, b)).collect();
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= c || b >= c) {
            bail!("{}: edge ({a}, {b}) refers to a missing point", path.display());
        }
        serde_json::to_string(&layout_metrics(&input.layout.xy, &edges)?)?
    } else {
        let ws = open_workspace(args.view.workspace.as_deref())?;
        let id = parse_node(&ws, &args.view.node)?;
        let response = ws.visualize(id, &visualize_options(&args.view, false))?;
        serde_json::to_string(&response.metrics)?
    };
    write_output(None, &body)
}

fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let ws = Workspace::open(&args.workspace)?;
    let state = AppState::new(ws, args.cache);
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(async {
        let listener = bind(args.bind)
            .await
            .with_context(|| format!("binding {}", args.bind))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        serve(listener, state).await.context("serving")
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Layout(a) => cmd_layout(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// 1 for bad input or data, 2 for a violated internal invariant.
fn exit_code(err: &anyhow::Error) -> u8 {
    let internal = err
        .chain()
        .filter_map(|e| e.downcast_ref::<pprviz_core::Error>())
        .any(|e| !e.is_user_error());
    if internal {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
