//! Thin subcommand dispatcher over the library: every pipeline stage is one
//! subcommand, all randomness flows from `--seed`, and a `key = value`
//! config file can supply any flag (flags win).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use graphsos::attention::AttentionParams;
use graphsos::backend::{parse_backend_spec, parse_oracle_spec, ChatBackend, HttpChat, MockChat};
use graphsos::bench::{
    report_to_csv, run_order_trials, BenchConfig, BenchExample, OrderPolicy,
};
use graphsos::config::{defaults, load_run_config, RunConfig};
use graphsos::encoder::{load_embedding_table, BigramEmbedder, Encoder, EncoderHandle};
use graphsos::graph::{edge_homophily, LabelAssignment, NodeId};
use graphsos::jsonl::{graph_record_to_json, read_graph_jsonl, GraphRecord};
use graphsos::osm::{select_order, OrderCandidateSet, OsmExample, OsmTrainConfig};
use graphsos::serialize::{
    default_kind, identity_ordering, random_ordering, serialize, SerializationKind,
};
use graphsos::ssm::{sample_subgraph, train_ssm, SampleConfig, SsmTrainConfig};
use graphsos::tuning::{build_cot_prompt, build_dpo_dataset, distill, write_dpo_jsonl,
    write_sft_jsonl, DistillConfig, DistillInput};

#[derive(Parser)]
#[command(name = "graphsos", version, about = "Graph serialization-order and subgraph-sampling pipeline")]
struct Cli {
    /// Optional key=value config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render each input graph as text under a drawn ordering.
    Serialize(SerializeArgs),
    /// Sample a subgraph around a target node with attention-guided walks.
    Sample(SampleArgs),
    /// Pick one of m candidate orderings per input via cross-attention.
    SelectOrder(SelectOrderArgs),
    /// Policy-gradient training of the sampling attention.
    TrainSsm(TrainSsmArgs),
    /// Train the order selector against a frozen scoring backend.
    TrainOsm(TrainOsmArgs),
    /// Build two-step prompts and SFT/DPO datasets, optionally distilling.
    CotBuild(CotBuildArgs),
    /// Order-sensitivity benchmark: repeated trials under fresh orderings.
    BenchOrder(BenchOrderArgs),
    /// Dataset metrics.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct SerializeArgs {
    /// Input graph JSONL [default: config `input`].
    #[arg(long)]
    input: Option<PathBuf>,
    /// feature-edge, edge, triple, or auto [default: auto].
    #[arg(long)]
    kind: Option<String>,
    /// A u64 seed for per-line random orderings, or `identity` [default: identity].
    #[arg(long)]
    seed: Option<String>,
    /// Output path: one JSON-escaped rendered string per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Input graph JSONL [default: config `input`].
    #[arg(long)]
    input: Option<PathBuf>,
    /// Line of the input to sample from [default: 0].
    #[arg(long)]
    line: Option<usize>,
    /// Target node id.
    #[arg(long)]
    target: NodeId,
    /// Node budget of the sampled subgraph [default: 20].
    #[arg(long)]
    n_max: Option<usize>,
    /// Hop radius of the attention neighborhood [default: 2].
    #[arg(long)]
    k: Option<usize>,
    /// Disable restarting at the target when the walk gets stuck.
    #[arg(long)]
    no_restart: bool,
    /// Attention checkpoint; fresh seeded parameters when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Attention heads for fresh parameters [default: 4].
    #[arg(long)]
    heads: Option<usize>,
    /// Embedding dimension for fresh parameters [default: 64].
    #[arg(long)]
    dim: Option<usize>,
    /// Encoder spec: builtin:<dim>:<seed>, bigram:<dim>:<seed>, or table:<path>
    /// [default: builtin:<dim>:1].
    #[arg(long)]
    encoder: Option<String>,
    /// Seed for the walk and fresh parameters [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SelectOrderArgs {
    /// Input graph JSONL with `question` fields [default: config `input`].
    #[arg(long)]
    input: Option<PathBuf>,
    /// Candidate orderings per input [default: 10].
    #[arg(long)]
    m: Option<usize>,
    /// Gumbel-softmax temperature [default: 0.5].
    #[arg(long)]
    tau: Option<f64>,
    /// Attention checkpoint; fresh seeded parameters when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    /// feature-edge, edge, triple, or auto [default: auto].
    #[arg(long)]
    kind: Option<String>,
    /// Attention heads for fresh parameters [default: 4].
    #[arg(long)]
    heads: Option<usize>,
    /// Embedding dimension for fresh parameters [default: 64].
    #[arg(long)]
    dim: Option<usize>,
    /// Encoder spec [default: builtin:<dim>:1].
    #[arg(long)]
    encoder: Option<String>,
    /// Master seed for candidate generation and selection [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainSsmArgs {
    /// Labeled input graph JSONL [default: config `input`].
    #[arg(long)]
    input: Option<PathBuf>,
    /// `builtin` (homophily over input labels) or `http:<url>` [default: builtin].
    #[arg(long)]
    oracle: Option<String>,
    /// Training steps [default: 500].
    #[arg(long)]
    steps: Option<usize>,
    /// Learning rate [default: 25].
    #[arg(long)]
    lr: Option<f64>,
    /// Loss temperature T [default: 5].
    #[arg(long)]
    t: Option<f64>,
    /// Node budget per sampled subgraph [default: 20].
    #[arg(long)]
    n_max: Option<usize>,
    /// Hop radius [default: 2].
    #[arg(long)]
    k: Option<usize>,
    /// Reward baseline decay [default: 0.9].
    #[arg(long)]
    baseline_decay: Option<f64>,
    /// Attention heads [default: 4].
    #[arg(long)]
    heads: Option<usize>,
    /// Embedding dimension [default: 64].
    #[arg(long)]
    dim: Option<usize>,
    /// Encoder spec [default: builtin:<dim>:1].
    #[arg(long)]
    encoder: Option<String>,
    /// Training seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint output path; the loss curve lands at `<out>.loss.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainOsmArgs {
    /// Input graph JSONL with `question` and `answer` [default: config `input`].
    #[arg(long)]
    input: Option<PathBuf>,
    /// `mock:<spec>` or `http:<url>` [default: config `backend`].
    #[arg(long)]
    backend: Option<String>,
    /// Candidate orderings per step [default: 10].
    #[arg(long)]
    m: Option<usize>,
    /// Gumbel-softmax temperature [default: 0.5].
    #[arg(long)]
    tau: Option<f64>,
    /// Training steps [default: 500].
    #[arg(long)]
    steps: Option<usize>,
    /// Learning rate [default: 32].
    #[arg(long)]
    lr: Option<f64>,
    /// Score every candidate's NLL instead of the straight-through sample.
    #[arg(long)]
    exact_expectation: bool,
    /// feature-edge, edge, triple, or auto [default: auto].
    #[arg(long)]
    kind: Option<String>,
    /// Attention heads [default: 4].
    #[arg(long)]
    heads: Option<usize>,
    /// Embedding dimension [default: 64].
    #[arg(long)]
    dim: Option<usize>,
    /// Encoder spec [default: builtin:<dim>:1].
    #[arg(long)]
    encoder: Option<String>,
    /// Training seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint output path; the loss curve lands at `<out>.loss.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CotBuildArgs {
    /// Input graph JSONL with `question` and `answer` [default: config `input`].
    #[arg(long)]
    input: Option<PathBuf>,
    /// Chat endpoint for distillation: `mock:cot`, `mock:cot-invalid`, or
    /// `http:<url>`; omit to write the SFT dataset only.
    #[arg(long)]
    endpoint: Option<String>,
    /// feature-edge, edge, triple, or auto [default: auto].
    #[arg(long)]
    kind: Option<String>,
    /// Sampling temperature sent to the endpoint [default: 0.9].
    #[arg(long)]
    temperature: Option<f64>,
    /// Completion token cap sent to the endpoint [default: 512].
    #[arg(long)]
    max_tokens: Option<u32>,
    /// In-flight request cap [default: 1].
    #[arg(long)]
    concurrency: Option<usize>,
    /// SFT dataset output (JSONL of {"prompt","answer"}).
    #[arg(long)]
    sft_out: Option<PathBuf>,
    /// DPO dataset output (JSONL of {"prompt","chosen","rejected"});
    /// requires an endpoint.
    #[arg(long)]
    dpo_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchOrderArgs {
    /// Input graph JSONL with `question` and `answer` [default: config `input`].
    #[arg(long)]
    input: Option<PathBuf>,
    /// `mock:<spec>` or `http:<url>` [default: config `backend`].
    #[arg(long)]
    backend: Option<String>,
    /// Number of independent trials [default: 10].
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial t uses seed + t [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated label set for grading [default: substring match].
    #[arg(long)]
    labels: Option<String>,
    /// Pin trial 0 to the identity ordering.
    #[arg(long)]
    pin_identity_first: bool,
    /// In-flight backend call cap within a trial [default: 1].
    #[arg(long)]
    concurrency: Option<usize>,
    /// feature-edge, edge, triple, or auto [default: auto].
    #[arg(long)]
    kind: Option<String>,
    /// CSV output path; stats land at `<out>.stats.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Input graph JSONL [default: config `input`].
    #[arg(long)]
    input: Option<PathBuf>,
    /// Report edge homophily per input graph.
    #[arg(long)]
    homophily: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match &cli.config {
        Some(path) => match load_run_config(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    match run(cli.command, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Serialize(args) => cmd_serialize(args, cfg),
        Command::Sample(args) => cmd_sample(args, cfg),
        Command::SelectOrder(args) => cmd_select_order(args, cfg),
        Command::TrainSsm(args) => cmd_train_ssm(args, cfg),
        Command::TrainOsm(args) => cmd_train_osm(args, cfg),
        Command::CotBuild(args) => cmd_cot_build(args, cfg),
        Command::BenchOrder(args) => cmd_bench_order(args, cfg),
        Command::Metrics(args) => cmd_metrics(args, cfg),
    }
}

fn resolve_input(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.input.clone().map(PathBuf::from))
        .context("no --input given (and none in the config file)")
}

fn resolve_kind(flag: Option<String>, cfg: &RunConfig) -> Result<Option<SerializationKind>> {
    let value = flag.or_else(|| cfg.kind.clone());
    match value.as_deref() {
        None | Some("auto") => Ok(None),
        Some(other) => Ok(Some(other.parse()?)),
    }
}

fn kind_for(record_kind: Option<SerializationKind>, graph: &graphsos::TextGraph) -> SerializationKind {
    record_kind.unwrap_or_else(|| default_kind(graph))
}

fn build_encoder(
    spec: Option<String>,
    cfg: &RunConfig,
    fallback_dim: usize,
) -> Result<Box<dyn Encoder>> {
    let spec = spec
        .or_else(|| cfg.encoder.clone())
        .unwrap_or_else(|| format!("builtin:{fallback_dim}:1"));
    if let Some(path) = spec.strip_prefix("table:") {
        return Ok(Box::new(load_embedding_table(path)?));
    }
    let (name, rest) = spec.split_once(':').unwrap_or((spec.as_str(), ""));
    let (dim, seed) = if rest.is_empty() {
        (fallback_dim, 1)
    } else {
        let (d, s) = rest
            .split_once(':')
            .with_context(|| format!("encoder spec {spec:?} wants <name>:<dim>:<seed>"))?;
        (d.parse().context("bad encoder dim")?, s.parse().context("bad encoder seed")?)
    };
    match name {
        "builtin" => Ok(Box::new(EncoderHandle::builtin(dim, seed))),
        "bigram" => Ok(Box::new(BigramEmbedder::new(dim, seed))),
        other => bail!("unknown encoder {other:?}; expected builtin, bigram, or table"),
    }
}

fn load_or_init_params(
    path: Option<PathBuf>,
    cfg: &RunConfig,
    heads: Option<usize>,
    dim: Option<usize>,
    seed: u64,
) -> Result<AttentionParams> {
    match path.or_else(|| cfg.params.clone().map(PathBuf::from)) {
        Some(path) => Ok(AttentionParams::load(&path)
            .with_context(|| format!("loading checkpoint {}", path.display()))?),
        None => {
            let heads = heads.or(cfg.heads).unwrap_or(defaults::HEADS);
            let dim = dim.or(cfg.dim).unwrap_or(defaults::DIM);
            Ok(AttentionParams::seeded(heads, dim, seed)?)
        }
    }
}

fn collect_labels(records: &[GraphRecord]) -> LabelAssignment {
    let mut labels = LabelAssignment::default();
    for record in records {
        for (id, label) in record.graph.partial_labels().iter() {
            labels.insert(id, label);
        }
    }
    labels
}

fn qa_examples(records: Vec<GraphRecord>) -> Result<Vec<BenchExample>> {
    records.into_iter().map(BenchExample::from_record).collect::<graphsos::Result<_>>()
        .context("every input line needs question and answer fields")
}

fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = String::from("step,loss\n");
    for (i, loss) in losses.iter().enumerate() {
        out.push_str(&format!("{i},{loss:?}\n"));
    }
    let csv_path = PathBuf::from(format!("{}.loss.csv", path.display()));
    std::fs::write(csv_path, out)?;
    Ok(())
}

fn cmd_serialize(args: SerializeArgs, cfg: &RunConfig) -> Result<()> {
    let input = resolve_input(args.input, cfg)?;
    let kind = resolve_kind(args.kind, cfg)?;
    let out_path = args
        .out
        .or_else(|| cfg.out.clone().map(PathBuf::from))
        .context("no --out given")?;
    let seed_spec = args.seed.unwrap_or_else(|| "identity".to_string());

    let records = read_graph_jsonl(&input)?;
    let mut master = match seed_spec.as_str() {
        "identity" => None,
        s => Some(ChaCha8Rng::seed_from_u64(
            s.parse::<u64>().context("--seed takes a u64 or `identity`")?,
        )),
    };
    let mut out = String::new();
    for record in &records {
        let kind = kind_for(kind, &record.graph);
        let ordering = match &mut master {
            None => identity_ordering(&record.graph),
            Some(rng) => random_ordering(&record.graph, rng.gen()),
        };
        let rendered = serialize(&record.graph, &ordering, kind)?;
        out.push_str(&serde_json::to_string(&rendered.text)?);
        out.push('\n');
    }
    std::fs::write(out_path, out)?;
    Ok(())
}

#[derive(Serialize)]
struct StepOut {
    from: NodeId,
    chosen: NodeId,
    weight_index: usize,
    log_prob: f64,
}

#[derive(Serialize)]
struct TraceOut {
    subgraph: serde_json::Value,
    steps: Vec<StepOut>,
    neighborhood: Vec<NodeId>,
    attention: Vec<f64>,
    exhausted: bool,
}

fn cmd_sample(args: SampleArgs, cfg: &RunConfig) -> Result<()> {
    let input = resolve_input(args.input, cfg)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let records = read_graph_jsonl(&input)?;
    let line = args.line.unwrap_or(0);
    let record = records
        .get(line)
        .with_context(|| format!("input has {} lines, wanted line {line}", records.len()))?;

    let params = load_or_init_params(args.params, cfg, args.heads, args.dim, seed)?;
    let encoder = build_encoder(args.encoder, cfg, params.dim)?;
    let sample_cfg = SampleConfig {
        n_max: args.n_max.or(cfg.n_max).unwrap_or(defaults::N_MAX),
        k: args.k.or(cfg.k).unwrap_or(defaults::K),
        restart: !args.no_restart,
        seed,
    };
    let trace = sample_subgraph(&record.graph, args.target, &params, encoder.as_ref(), &sample_cfg)?;

    let out = TraceOut {
        subgraph: serde_json::from_str(&graph_record_to_json(&GraphRecord::bare(
            trace.subgraph.clone(),
        ))?)?,
        steps: trace
            .steps
            .iter()
            .map(|s| StepOut {
                from: s.from,
                chosen: s.chosen,
                weight_index: s.weight_index,
                log_prob: s.log_prob,
            })
            .collect(),
        neighborhood: trace.neighborhood.clone(),
        attention: trace.attention.clone(),
        exhausted: trace.exhausted,
    };
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}

fn cmd_select_order(args: SelectOrderArgs, cfg: &RunConfig) -> Result<()> {
    let input = resolve_input(args.input, cfg)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let m = args.m.or(cfg.m).unwrap_or(defaults::M);
    let tau = args.tau.or(cfg.tau).unwrap_or(defaults::TAU);
    let kind = resolve_kind(args.kind, cfg)?;
    let records = read_graph_jsonl(&input)?;

    let params = load_or_init_params(args.params, cfg, args.heads, args.dim, seed)?;
    let encoder = build_encoder(args.encoder, cfg, params.dim)?;

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for record in &records {
        let kind = kind_for(kind, &record.graph);
        let question = record.question.clone().unwrap_or_default();
        let cands = OrderCandidateSet::build(&record.graph, question, m, master.gen(), kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        let (chosen, mask, _) = select_order(&cands, &params, encoder.as_ref(), tau, &mut rng)?;
        out.push_str(&serde_json::to_string(&serde_json::json!({
            "chosen_index": mask.hard,
            "text": chosen.text,
        }))?);
        out.push('\n');
    }
    match args.out.or_else(|| cfg.out.clone().map(PathBuf::from)) {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_train_ssm(args: TrainSsmArgs, cfg: &RunConfig) -> Result<()> {
    let input = resolve_input(args.input, cfg)?;
    let out_path = args
        .out
        .or_else(|| cfg.out.clone().map(PathBuf::from))
        .context("no --out given for the trained checkpoint")?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let records = read_graph_jsonl(&input)?;
    let graphs: Vec<_> = records.iter().map(|r| r.graph.clone()).collect();

    let oracle_spec = args.oracle.or_else(|| cfg.oracle.clone()).unwrap_or_else(|| "builtin".into());
    let labels = collect_labels(&records);
    let oracle = parse_oracle_spec(&oracle_spec, Some(labels))?;

    let heads = args.heads.or(cfg.heads).unwrap_or(defaults::HEADS);
    let dim = args.dim.or(cfg.dim).unwrap_or(defaults::DIM);
    let params = AttentionParams::seeded(heads, dim, seed)?;
    let encoder = build_encoder(args.encoder, cfg, dim)?;

    let train_cfg = SsmTrainConfig {
        steps: args.steps.or(cfg.steps).unwrap_or(defaults::STEPS),
        lr: args.lr.or(cfg.lr).unwrap_or(defaults::LR_SSM),
        temperature: args.t.or(cfg.t).unwrap_or(defaults::TEMPERATURE),
        baseline_decay: args.baseline_decay.unwrap_or(0.9),
        n_max: args.n_max.or(cfg.n_max).unwrap_or(defaults::N_MAX),
        k: args.k.or(cfg.k).unwrap_or(defaults::K),
        restart: true,
        seed,
    };
    let report = train_ssm(params, &graphs, oracle.as_ref(), encoder.as_ref(), &train_cfg)?;
    report.params.save(&out_path)?;
    write_loss_csv(&out_path, &report.losses)?;
    if report.skipped > 0 {
        eprintln!("warning: {} step(s) skipped (no walkable neighborhood)", report.skipped);
    }
    let last = report.losses.last().copied().unwrap_or(f64::NAN);
    println!("train-ssm steps={} final_loss={last:?}", train_cfg.steps);
    Ok(())
}

fn cmd_train_osm(args: TrainOsmArgs, cfg: &RunConfig) -> Result<()> {
    let input = resolve_input(args.input, cfg)?;
    let out_path = args
        .out
        .or_else(|| cfg.out.clone().map(PathBuf::from))
        .context("no --out given for the trained checkpoint")?;
    let backend_spec = args
        .backend
        .or_else(|| cfg.backend.clone())
        .context("no --backend given")?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let records = read_graph_jsonl(&input)?;
    let dataset: Vec<OsmExample> = qa_examples(records)?
        .into_iter()
        .map(|e| OsmExample { graph: e.graph, question: e.question, target: e.gold })
        .collect();

    let backend = parse_backend_spec(&backend_spec)?;
    let heads = args.heads.or(cfg.heads).unwrap_or(defaults::HEADS);
    let dim = args.dim.or(cfg.dim).unwrap_or(defaults::DIM);
    let params = AttentionParams::seeded(heads, dim, seed)?;
    let encoder = build_encoder(args.encoder, cfg, dim)?;

    let train_cfg = OsmTrainConfig {
        m: args.m.or(cfg.m).unwrap_or(defaults::M),
        tau: args.tau.or(cfg.tau).unwrap_or(defaults::TAU),
        steps: args.steps.or(cfg.steps).unwrap_or(defaults::STEPS),
        lr: args.lr.or(cfg.lr).unwrap_or(defaults::LR_OSM),
        exact_expectation: args.exact_expectation,
        kind: resolve_kind(args.kind, cfg)?,
        seed,
        max_attempts: 3,
    };
    let report = graphsos::osm::train_osm(params, &dataset, backend.as_ref(), encoder.as_ref(), &train_cfg)?;
    report.params.save(&out_path)?;
    write_loss_csv(&out_path, &report.losses)?;
    if report.skipped_steps > 0 {
        eprintln!("warning: {} step(s) skipped after backend failures", report.skipped_steps);
    }
    let last = report.losses.last().copied().unwrap_or(f64::NAN);
    println!("train-osm steps={} final_loss={last:?}", train_cfg.steps);
    Ok(())
}

fn parse_chat_endpoint(spec: &str) -> Result<Box<dyn ChatBackend>> {
    match spec {
        "mock:cot" => Ok(Box::new(MockChat::new())),
        "mock:cot-invalid" => Ok(Box::new(MockChat::malformed())),
        other => {
            if other.starts_with("http:") || other.starts_with("https:") {
                Ok(Box::new(HttpChat::new(other.to_string())))
            } else {
                bail!("endpoint {other:?} must be mock:cot, mock:cot-invalid, or an http(s) url")
            }
        }
    }
}

fn cmd_cot_build(args: CotBuildArgs, cfg: &RunConfig) -> Result<()> {
    let input = resolve_input(args.input, cfg)?;
    let kind = resolve_kind(args.kind, cfg)?;
    let records = read_graph_jsonl(&input)?;
    let examples = qa_examples(records)?;

    let mut inputs = Vec::with_capacity(examples.len());
    for example in &examples {
        let prompt = build_cot_prompt(&example.graph, &example.question, kind_for(kind, &example.graph))?;
        inputs.push(DistillInput { prompt, sft_answer: example.gold.clone() });
    }

    if let Some(path) = &args.sft_out {
        write_sft_jsonl(path, inputs.iter().map(|i| (i.prompt.as_str(), i.sft_answer.as_str())))?;
        println!("cot-build sft_records={}", inputs.len());
    }

    if let Some(dpo_path) = &args.dpo_out {
        let endpoint_spec = args
            .endpoint
            .or_else(|| cfg.endpoint.clone())
            .context("--dpo-out requires --endpoint for distillation")?;
        let chat = parse_chat_endpoint(&endpoint_spec)?;
        let distill_cfg = DistillConfig {
            temperature: args.temperature.unwrap_or(defaults::CHAT_TEMPERATURE),
            max_tokens: args.max_tokens.unwrap_or(defaults::CHAT_MAX_TOKENS),
            concurrency: args.concurrency.or(cfg.concurrency).unwrap_or(defaults::CONCURRENCY),
        };
        let report = distill(&inputs, chat.as_ref(), &distill_cfg)?;
        if report.dropped > 0 {
            eprintln!("warning: {} completion(s) dropped after format retries", report.dropped);
        }
        let dpo = build_dpo_dataset(&report.records);
        if dpo.skipped > 0 {
            eprintln!("warning: {} record(s) skipped building preference pairs", dpo.skipped);
        }
        write_dpo_jsonl(dpo_path, &dpo.pairs)?;
        println!("cot-build dpo_pairs={} dropped={}", dpo.pairs.len(), report.dropped);
    }
    Ok(())
}

fn cmd_bench_order(args: BenchOrderArgs, cfg: &RunConfig) -> Result<()> {
    let input = resolve_input(args.input, cfg)?;
    let backend_spec = args
        .backend
        .or_else(|| cfg.backend.clone())
        .context("no --backend given")?;
    let out_path = args
        .out
        .or_else(|| cfg.out.clone().map(PathBuf::from))
        .context("no --out given for the results CSV")?;
    let records = read_graph_jsonl(&input)?;
    let dataset = qa_examples(records)?;
    let backend = parse_backend_spec(&backend_spec)?;

    let labels = args
        .labels
        .or_else(|| cfg.labels.clone())
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>());
    let bench_cfg = BenchConfig {
        trials: args.trials.or(cfg.trials).unwrap_or(defaults::TRIALS),
        base_seed: args.seed.or(cfg.seed).unwrap_or(0),
        kind: resolve_kind(args.kind, cfg)?,
        labels,
        pin_identity_first: args.pin_identity_first,
        concurrency: args.concurrency.or(cfg.concurrency).unwrap_or(defaults::CONCURRENCY),
        order: OrderPolicy::Random,
    };
    let report = run_order_trials(&dataset, backend.as_ref(), &bench_cfg)?;

    std::fs::write(&out_path, report_to_csv(&report))?;
    let stats_path = format!("{}.stats.json", out_path.display());
    std::fs::write(&stats_path, format!("{}\n", serde_json::to_string_pretty(&report.stats)?))?;
    if report.backend_errors > 0 {
        eprintln!("warning: {} backend error(s) graded incorrect", report.backend_errors);
    }
    println!(
        "bench-order trials={} mean={:?} std={:?}",
        report.trials.len(),
        report.stats.mean,
        report.stats.std
    );
    Ok(())
}

fn cmd_metrics(args: MetricsArgs, cfg: &RunConfig) -> Result<()> {
    if !args.homophily {
        bail!("no metric selected; pass --homophily");
    }
    let input = resolve_input(args.input, cfg)?;
    let records = read_graph_jsonl(&input)?;
    for record in &records {
        let labels = record.graph.label_assignment()?;
        let h = edge_homophily(&record.graph, &labels)?;
        println!("edge_homophily {h:?}");
    }
    Ok(())
}
