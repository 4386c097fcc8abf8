mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rgs_core::eval::{
    gen_synthetic, run_experiment, write_report, Dataset, ExperimentConfig, Method, Perturbation, RgsConfig,
    SyntheticParams,
};
use rgs_core::graph::{build_diskann, build_knn, build_random, load_index, save_index};
use rgs_core::io::{load_corpus, load_queries, save_corpus, save_queries, write_atomic, EmbeddingFormat};
use rgs_core::rerank::{HttpConfig, HttpReranker, NoisyOracle, Oracle, Reranker, StaticScore};
use rgs_core::search::{
    random_scan, retrieve_and_rerank, rgs_search, slidegar_search, PassMode, RrParams, SearchTrace, SlideGarParams,
    StartStrategy,
};
use rgs_core::{load_qrels, BuildParams, Corpus, Embedding, GraphIndex, GraphKind, QueryRecord, RelevanceJudgments};

#[derive(Parser)]
#[command(name = "rgs", version, about = "Reranker-guided search over proximity graphs")]
#[command(args_override_self = true)]
struct Cli {
    /// Settings file (TOML, or key = value lines). Explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for eval; defaults to every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus, queries and judgments.
    Gen(GenArgs),
    /// Build a graph index over a corpus.
    Build(BuildArgs),
    /// Run one search and print the top 10.
    Search(SearchArgs),
    /// Run a method x budget sweep and write results.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 10)]
    relevant_per_query: usize,
    #[arg(long, default_value_t = 0.5)]
    cluster_spread: f64,
    #[arg(long, default_value_t = 200)]
    planted_rank_offset: usize,
    #[arg(long)]
    siblings_per_query: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embedding file format.
    #[arg(long, default_value = "jsonl")]
    format: EmbeddingFormat,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Keep vectors as stored instead of scaling them to unit length.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct GraphArgs {
    /// Out-degree bound R (or k for knn).
    #[arg(long, default_value_t = 32)]
    degree: usize,
    #[arg(long, default_value_t = 64)]
    build_beam: usize,
    #[arg(long, default_value_t = 1.2)]
    alpha: f64,
    /// Skip the alpha = 1 pass.
    #[arg(long)]
    single_pass: bool,
    #[arg(long, default_value_t = 0)]
    build_seed: u64,
}

impl GraphArgs {
    fn params(&self) -> BuildParams {
        BuildParams {
            degree_bound: self.degree,
            build_beam: self.build_beam,
            alpha: self.alpha,
            seed: self.build_seed,
            two_pass: !self.single_pass,
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value = "diskann")]
    graph: GraphKind,
    #[command(flatten)]
    graph_params: GraphArgs,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum BackendKind {
    Oracle,
    NoisyOracle,
    StaticScore,
    HttpLlm,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    backend: BackendKind,
    /// Noise scale for noisy_oracle.
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Builtin template id or template file.
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Request timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Requests per second.
    #[arg(long)]
    rate_limit: Option<f64>,
    /// Name of the environment variable that holds the API key.
    #[arg(long, default_value = "RGS_API_KEY")]
    api_key_env: String,
    #[arg(long)]
    auth_header: Option<String>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    response_text_path: Option<String>,
    #[arg(long)]
    usage_in_path: Option<String>,
    #[arg(long)]
    usage_out_path: Option<String>,
    /// Backend failures a query may hit before it counts as failed.
    #[arg(long, default_value_t = 0)]
    max_backend_failures: usize,
}

impl BackendArgs {
    fn http_config(&self) -> HttpConfig {
        let mut c = HttpConfig {
            endpoint: self.endpoint.clone().unwrap_or_default(),
            model: self.model.clone().unwrap_or_default(),
            api_key_env: self.api_key_env.clone(),
            rate_limit: self.rate_limit,
            max_tokens: self.max_tokens,
            ..Default::default()
        };
        if let Some(t) = &self.template {
            c.template = t.clone();
        }
        if let Some(r) = self.max_retries {
            c.max_retries = r;
        }
        if let Some(t) = self.timeout {
            c.timeout_secs = t;
        }
        if let Some(h) = &self.auth_header {
            c.auth_header = h.clone();
        }
        if let Some(p) = &self.response_text_path {
            c.response_text_path = p.clone();
        }
        if let Some(p) = &self.usage_in_path {
            c.usage_in_path = p.clone();
        }
        if let Some(p) = &self.usage_out_path {
            c.usage_out_path = p.clone();
        }
        c
    }

    fn needs_qrels(&self) -> bool {
        matches!(self.backend, BackendKind::Oracle | BackendKind::NoisyOracle)
    }

    fn make(
        &self,
        corpus: &Arc<Corpus>,
        qrels: &Arc<RelevanceJudgments>,
        queries: &[QueryRecord],
    ) -> Result<Box<dyn Reranker>> {
        Ok(match self.backend {
            BackendKind::Oracle => Box::new(Oracle::new(corpus.clone(), qrels.clone(), queries)),
            BackendKind::NoisyOracle => Box::new(NoisyOracle::new(
                Oracle::new(corpus.clone(), qrels.clone(), queries),
                self.noise_sigma,
                self.noise_seed,
            )?),
            BackendKind::StaticScore => Box::new(StaticScore),
            BackendKind::HttpLlm => Box::new(HttpReranker::new(self.http_config())?),
        })
    }
}

#[derive(Args)]
struct RgsArgs {
    /// List length kept after each expansion; defaults by budget.
    #[arg(long)]
    ls: Option<usize>,
    /// Seed count; defaults to budget / 5.
    #[arg(long)]
    seeds: Option<usize>,
    /// RGS window size.
    #[arg(long, default_value_t = 10)]
    window: usize,
    /// exact, noisy[:RANK] or index_default.
    #[arg(long, default_value = "exact")]
    start: StartStrategy,
    #[arg(long, default_value = "full")]
    pass_mode: PassMode,
    #[arg(long, default_value_t = 10)]
    rr_window: usize,
    #[arg(long, default_value_t = 20)]
    slidegar_window: usize,
    #[arg(long, default_value_t = 64)]
    search_beam: usize,
    /// Degree of the kNN corpus graph SlideGAR follows.
    #[arg(long, default_value_t = 16)]
    knn_degree: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Index file; built in memory with default parameters when absent.
    #[arg(long, value_name = "FILE")]
    index: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    queries: Option<PathBuf>,
    /// Query id to look up in --queries.
    #[arg(long)]
    qid: Option<String>,
    /// Comma-separated query vector, used instead of --queries.
    #[arg(long, allow_hyphen_values = true)]
    vector: Option<String>,
    /// Query text for text-based backends.
    #[arg(long)]
    text: Option<String>,
    #[arg(long, value_name = "FILE")]
    qrels: Option<PathBuf>,
    #[arg(long, default_value = "rgs")]
    method: Method,
    #[arg(long, default_value_t = 100)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the search trace here as JSON lines.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    rgs: RgsArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_name = "FILE")]
    queries: PathBuf,
    #[arg(long, value_name = "FILE")]
    qrels: PathBuf,
    /// Prebuilt DiskANN index; built in memory when absent.
    #[arg(long, value_name = "FILE")]
    index: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "rr,slidegar,rgs")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "100,300,500")]
    budgets: Vec<usize>,
    /// Graph RGS expands over.
    #[arg(long, default_value = "diskann")]
    graph: GraphKind,
    #[arg(long, default_value_t = 16)]
    random_degree: usize,
    /// Embedding perturbation, e.g. query:0.5 or document:1.0.
    #[arg(long)]
    perturb: Option<Perturbation>,
    #[arg(long, default_value_t = 0)]
    perturb_seed: u64,
    /// Rescale mixed embeddings to unit length.
    #[arg(long)]
    perturb_renormalize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_plots: bool,
    /// Also write every search trace to traces.jsonl.
    #[arg(long)]
    traces: bool,
    /// Exit with status 4 when more queries than this fail.
    #[arg(long)]
    max_failed_queries: Option<usize>,
    #[command(flatten)]
    graph_params: GraphArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    rgs: RgsArgs,
}

/// An error that carries its own exit status.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Exit(2, msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Exit(code, _)) = cause.downcast_ref::<Exit>() {
            return *code;
        }
        if let Some(e) = cause.downcast_ref::<rgs_core::Error>() {
            return match e {
                rgs_core::Error::Io { .. } | rgs_core::Error::Backend(_) => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    2
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

fn read_corpus(args: &CorpusArgs) -> Result<Corpus> {
    require(&args.corpus, "corpus")?;
    let mut corpus = load_corpus(&args.corpus, EmbeddingFormat::from_path(&args.corpus))?;
    if !args.no_normalize {
        corpus.normalize();
    }
    info!("loaded {} documents of dimension {}", corpus.len(), corpus.dim());
    Ok(corpus)
}

fn read_queries(path: &Path, normalize: bool) -> Result<Vec<QueryRecord>> {
    require(path, "queries")?;
    let mut queries = load_queries(path, EmbeddingFormat::from_path(path))?;
    if normalize {
        for q in &mut queries {
            q.embedding = q.embedding.normalized();
        }
    }
    Ok(queries)
}

fn read_qrels(path: &Path, corpus: &Corpus) -> Result<RelevanceJudgments> {
    require(path, "qrels")?;
    let loaded = load_qrels(path, corpus)?;
    if loaded.dropped > 0 {
        warn!("{} judgments name documents outside the corpus and were dropped", loaded.dropped);
    }
    Ok(loaded.judgments)
}

fn read_or_build_index(path: Option<&Path>, corpus: &Corpus, params: &BuildParams) -> Result<GraphIndex> {
    match path {
        Some(p) => {
            require(p, "index")?;
            let index = load_index(p, corpus)?;
            if index.kind() != GraphKind::Diskann {
                warn!("{} holds a {} graph, not a DiskANN index", p.display(), index.kind());
            }
            Ok(index)
        }
        None => {
            info!("no --index given; building a DiskANN index in memory");
            Ok(build_diskann(corpus, params)?)
        }
    }
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let params = SyntheticParams {
        n: args.n,
        dim: args.dim,
        clusters: args.clusters,
        queries: args.queries,
        relevant_per_query: args.relevant_per_query,
        cluster_spread: args.cluster_spread,
        planted_rank_offset: args.planted_rank_offset,
        siblings_per_query: args.siblings_per_query,
        seed: args.seed,
    };
    let data = gen_synthetic(&params)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let ext = match args.format {
        EmbeddingFormat::JsonLines => "jsonl",
        EmbeddingFormat::Binary => "bin",
    };
    let corpus_path = args.out.join(format!("corpus.{ext}"));
    let queries_path = args.out.join(format!("queries.{ext}"));
    let qrels_path = args.out.join("qrels.txt");
    save_corpus(&data.corpus, &corpus_path, args.format)?;
    save_queries(&data.queries, &queries_path, args.format)?;
    write_atomic(&qrels_path, data.qrels.to_trec(&data.corpus).as_bytes())?;
    for p in [&corpus_path, &queries_path, &qrels_path] {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_build(args: &BuildArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let g = &args.graph_params;
    let index = match args.graph {
        GraphKind::Diskann => build_diskann(&corpus, &g.params())?,
        GraphKind::Knn => build_knn(&corpus, g.degree)?,
        GraphKind::Random => build_random(&corpus, g.degree, g.build_seed)?,
    };
    save_index(&index, &corpus, &args.out)?;
    let s = index.stats();
    println!("kind\t{}", s.kind);
    println!("vertices\t{}", s.vertices);
    println!("degree_bound\t{}", s.degree_bound);
    println!("max_degree\t{}", s.max_degree);
    println!("min_degree\t{}", s.min_degree);
    println!("mean_degree\t{:.3}", s.mean_degree);
    println!("reachable\t{:.2}%", 100.0 * s.reachable_fraction);
    Ok(())
}

fn parse_vector(text: &str) -> Result<Embedding> {
    let values: Result<Vec<f32>, _> = text.split(',').map(|x| x.trim().parse::<f32>()).collect();
    let values = values.map_err(|e| usage(format!("--vector: {e}")))?;
    Embedding::new(values).map_err(|e| usage(format!("--vector: {e}")))
}

fn cmd_search(args: &SearchArgs) -> Result<ExitCode> {
    let normalize = !args.corpus.no_normalize;
    let corpus = Arc::new(read_corpus(&args.corpus)?);
    let mut query = match (&args.vector, &args.qid, &args.queries) {
        (Some(v), _, _) => {
            let mut e = parse_vector(v)?;
            if normalize {
                e = e.normalized();
            }
            QueryRecord::new(args.qid.clone().unwrap_or_else(|| "query".into()), e, None)
        }
        (None, Some(qid), Some(path)) => read_queries(path, normalize)?
            .into_iter()
            .find(|q| &q.qid == qid)
            .ok_or_else(|| usage(format!("query {qid:?} is not in {}", path.display())))?,
        _ => return Err(usage("give --vector, or --qid with --queries")),
    };
    if let Some(t) = &args.text {
        query.text = Some(t.clone());
    }
    if query.embedding.dim() != corpus.dim() {
        return Err(usage(format!(
            "query has dimension {} but the corpus has {}",
            query.embedding.dim(),
            corpus.dim()
        )));
    }
    let qrels = match &args.qrels {
        Some(p) => read_qrels(p, &corpus)?,
        None if args.backend.needs_qrels() => return Err(usage("oracle backends need --qrels")),
        None => RelevanceJudgments::new(),
    };
    let backend = args.backend.make(&corpus, &Arc::new(qrels), std::slice::from_ref(&query))?;
    let index = read_or_build_index(args.index.as_deref(), &corpus, &BuildParams::default())?;
    let r = &args.rgs;

    let trace: SearchTrace = match args.method {
        Method::Rr => {
            let params = RrParams {
                k: args.budget.min(corpus.len()),
                window: r.rr_window,
                search_beam: r.search_beam.max(args.budget),
            };
            retrieve_and_rerank(&query, &corpus, &index, backend.as_ref(), &params)?
        }
        Method::Slidegar => {
            let knn = build_knn(&corpus, r.knn_degree)?;
            let params = SlideGarParams {
                budget: args.budget,
                window: r.slidegar_window,
                search_beam: r.search_beam,
            };
            slidegar_search(&query, &corpus, &index, &knn, backend.as_ref(), &params)?
        }
        Method::Rgs => {
            let config = ExperimentConfig {
                rgs: RgsConfig {
                    ls: r.ls,
                    seeds: r.seeds,
                    window: r.window,
                    start: r.start,
                    pass_mode: r.pass_mode,
                },
                search_beam: r.search_beam,
                ..Default::default()
            };
            rgs_search(&query, &corpus, &index, backend.as_ref(), &config.rgs_params(args.budget))?
        }
        Method::Random => random_scan(&query, &corpus, backend.as_ref(), args.budget, r.rr_window, args.seed)?,
    };

    if let Some(p) = &args.trace {
        write_atomic(p, trace.to_json_lines(&corpus).as_bytes())?;
    }
    for (i, &d) in trace.top().iter().enumerate() {
        println!("{}\t{}", i + 1, corpus.id(d));
    }
    let l = &trace.ledger;
    info!(
        "scanned {} of budget {}, {} calls, {} doc views",
        l.scanned_count(),
        l.budget(),
        l.calls,
        l.doc_views
    );
    let failures = trace.backend_failures();
    if failures > args.backend.max_backend_failures {
        eprintln!(
            "error: {failures} reranker calls failed (allowed {})",
            args.backend.max_backend_failures
        );
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs, jobs: Option<usize>) -> Result<ExitCode> {
    let normalize = !args.corpus.no_normalize;
    let corpus = Arc::new(read_corpus(&args.corpus)?);
    let queries = read_queries(&args.queries, normalize)?;
    let qrels = Arc::new(read_qrels(&args.qrels, &corpus)?);
    let r = &args.rgs;
    let config = ExperimentConfig {
        methods: args.methods.clone(),
        budgets: args.budgets.clone(),
        rgs: RgsConfig {
            ls: r.ls,
            seeds: r.seeds,
            window: r.window,
            start: r.start,
            pass_mode: r.pass_mode,
        },
        rr_window: r.rr_window,
        slidegar_window: r.slidegar_window,
        search_beam: r.search_beam,
        graph: args.graph,
        build: args.graph_params.params(),
        knn_degree: r.knn_degree,
        random_degree: args.random_degree,
        perturbation: args.perturb.clone().map(|mut p| {
            p.seed = args.perturb_seed;
            p.renormalize = args.perturb_renormalize;
            p
        }),
        max_backend_failures: args.backend.max_backend_failures,
        seed: args.seed,
        jobs,
        keep_traces: args.traces,
        ..Default::default()
    };
    config.validate()?;
    let index = match &args.index {
        Some(p) => Some(read_or_build_index(Some(p), &corpus, &config.build)?),
        None => None,
    };
    let backend = args.backend.make(&corpus, &qrels, &queries)?;
    let data = Dataset {
        corpus: corpus.clone(),
        queries,
        qrels,
    };
    let report = run_experiment(&config, &data, backend.as_ref(), index.as_ref())?;
    write_report(&report, &args.out, !args.no_plots)?;
    if args.traces {
        let text: String = report.traces.iter().map(|t| t.to_json_lines(&corpus)).collect();
        write_atomic(args.out.join("traces.jsonl"), text.as_bytes())?;
    }

    println!("method\tbudget\tqueries\tfailed\tndcg@10\tscanned\tcalls\tnever_seen");
    for a in &report.aggregates {
        let never = report
            .breakdown(a.method, a.budget)
            .map(|e| format!("{:.3}", e.fraction_never_seen))
            .unwrap_or_else(|| "-".into());
        println!(
            "{}\t{}\t{}\t{}\t{:.4}\t{:.1}\t{:.1}\t{}",
            a.method, a.budget, a.queries, a.failed, a.ndcg10, a.scanned, a.calls, never
        );
    }
    if report.skipped_queries > 0 {
        eprintln!("note: {} queries without judgments were skipped", report.skipped_queries);
    }
    let failed = report.failed_queries();
    if failed > 0 {
        eprintln!("note: {failed} query runs failed; see results.csv");
    }
    if let Some(max) = args.max_failed_queries {
        if failed > max {
            eprintln!("error: {failed} failed query runs exceed --max-failed-queries {max}");
            return Ok(ExitCode::from(4));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a).map(|_| ExitCode::SUCCESS),
        Command::Build(a) => cmd_build(a).map(|_| ExitCode::SUCCESS),
        Command::Search(a) => cmd_search(a),
        Command::Eval(a) => cmd_eval(a, cli.jobs),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
