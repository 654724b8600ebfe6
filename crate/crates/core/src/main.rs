use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use bmembed::bm25::{Bm25Params, InvertedIndex, RankedList};
use bmembed::corpus::{chunk_corpus, load_corpus, read_chunks, write_chunks};
use bmembed::embedding::{AdapterParams, CachedProvider, EmbeddingProvider, EmbeddingTable, ProviderSpec};
use bmembed::eval::{
    evaluate_dense, evaluate_run, read_gold, write_per_query_csv, write_report, DenseIndex, Encoder, EvalConfig,
    GoldSet, DEFAULT_THETA,
};
use bmembed::fusion::{fuse_runs, FusionConfig};
use bmembed::perturb::{build_variants, run_perturbation_eval, write_delta_csv, write_variants, KeywordOptions};
use bmembed::pipeline::{self, PipelineConfig};
use bmembed::querygen::{
    generate_queries, read_queries, write_queries, ChatCompletionsClient, GenerationOptions, IdfTable, LlmClient,
    PromptSet, StubLlm,
};
use bmembed::retrieval::{Bm25Retriever, DenseRetriever, Retriever};
use bmembed::run::{format_run, read_run, write_run};
use bmembed::sampler::{generate_training_set, read_samples, write_samples, PartitionScheme, SamplingConfig};
use bmembed::text::TokenizerConfig;
use bmembed::trainer::{train, write_loss_curve, BaseEmbeddings, Checkpoint, FixedSamples, LossKind, OptimizerKind, TrainConfig};
use bmembed::{Error, Result};

const EXIT_VALIDATION: u8 = 2;
const EXIT_STAGE: u8 = 3;

/// Adapt a text embedder to a private corpus with BM25 listwise supervision.
///
/// Each stage command either runs standalone from its flags or, given
/// `--config`, runs that stage of the configured pipeline in its output
/// directory.
#[derive(Parser)]
#[command(name = "bmembed", version)]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed; default 42 for standalone commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a line-JSON corpus into token chunks.
    Ingest(IngestArgs),
    /// Build a BM25 index over chunks.
    Index(IndexArgs),
    /// Query a BM25 index.
    Search(SearchArgs),
    /// Generate synthetic queries.
    Genqueries(GenqueriesArgs),
    /// Draw ranking samples from BM25 results.
    Sample(SampleArgs),
    /// Fit the adapter on ranking samples.
    Train(TrainArgs),
    /// Score a run file or a dense retriever against gold queries.
    Eval(EvalArgs),
    /// Reciprocal-rank fusion of run files.
    Fuse(FuseArgs),
    /// Keyword masking and synonym substitution probe.
    Perturb(PerturbArgs),
    /// Run every pipeline stage from `--config`, then write the report.
    Run,
    /// Write the report of a finished pipeline run.
    Report(ReportArgs),
    /// Write the bundled synthetic jargon corpus.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    chunk_size: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    chunks: Option<PathBuf>,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
struct GenqueriesArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_queries: Option<usize>,
    /// Chat-completions URL; without it the offline stub is used.
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4o")]
    llm_model: String,
    #[arg(long, default_value = "BMEMBED_LLM_API_KEY")]
    llm_key_env: String,
    /// Directory with replacement prompt files.
    #[arg(long)]
    prompts: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 9)]
    m: usize,
    /// uniform, fine_to_coarse or explicit.
    #[arg(long, default_value = "fine_to_coarse")]
    strategy: String,
    #[arg(long, default_value_t = 3)]
    first_len: usize,
    #[arg(long, default_value_t = 2.0)]
    growth: f64,
    /// Explicit intervals, e.g. `0-2,2-6,6-12`.
    #[arg(long)]
    boundaries: Option<String>,
    #[arg(long, default_value_t = 1)]
    lists_per_query: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    chunks: Option<PathBuf>,
    /// `toy`, `toy:<dim>[:<seed>]`, `precomputed:<path>` or a JSON object.
    #[arg(long, default_value = "toy")]
    provider: String,
    #[arg(long, default_value = "listnet")]
    loss: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    #[arg(long, default_value_t = 16)]
    infonce_batch: usize,
    /// Plain SGD instead of Adam.
    #[arg(long)]
    sgd: bool,
    #[arg(long)]
    normalize_scores: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    loss_curve: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    chunks: Option<PathBuf>,
    /// Score this run file instead of a dense retriever.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long, default_value = "toy")]
    provider: String,
    #[arg(long)]
    adapter: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long, default_value_t = 512)]
    uniformity_sample: usize,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    per_query: Option<PathBuf>,
    /// Where to write the dense run.
    #[arg(long)]
    run_out: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    /// Comma-separated run files.
    #[arg(long, value_delimiter = ',')]
    runs: Vec<PathBuf>,
    #[arg(long, default_value_t = 40.0)]
    u: f64,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbArgs {
    /// Gold queries with evidence.
    #[arg(long, alias = "queries")]
    gold: Option<PathBuf>,
    #[arg(long)]
    chunks: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// JSON object mapping keywords to synonyms.
    #[arg(long)]
    synonyms: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "bm25,dense,dense+adapter")]
    methods: Vec<String>,
    #[arg(long, default_value = "toy")]
    provider: String,
    #[arg(long)]
    adapter: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    max_keywords: usize,
    #[arg(long, default_value_t = 0.25)]
    max_df_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    variants_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A `seed-<n>` run directory; defaults to the one `--config` names.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = bmembed::fixture::FIXTURE_SEED)]
    fixture_seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_validation() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::from(EXIT_STAGE)
            }
        }
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required without --config")))
}

fn load_config(cli: &Cli) -> Result<Option<PipelineConfig>> {
    let Some(path) = &cli.config else { return Ok(None) };
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
        cfg.output_dir = cwd.join(dir);
    }
    cfg.validate()?;
    Ok(Some(cfg))
}

fn run_stages(cfg: &PipelineConfig, stages: &[&str]) -> Result<()> {
    for stage in stages {
        let manifest = pipeline::run_single_stage(cfg, stage)?;
        if let Some(record) = manifest.stage(stage) {
            for a in &record.artifacts {
                println!("{}", cfg.run_dir().join(a).display());
            }
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let seed = cli.seed.unwrap_or(42);
    if let Some(cfg) = &config {
        let stages: &[&str] = match &cli.command {
            Command::Ingest(_) => &["ingest"],
            Command::Index(_) => &["index"],
            Command::Genqueries(_) => &["genqueries"],
            Command::Sample(_) => &["sample"],
            Command::Train(_) => &["train"],
            Command::Eval(_) => &["eval_base", "eval_adapted"],
            Command::Fuse(_) => &["fuse"],
            Command::Perturb(_) => &["perturb"],
            _ => &[],
        };
        if !stages.is_empty() {
            return run_stages(cfg, stages);
        }
    }
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Index(a) => index(a),
        Command::Search(a) => search(a),
        Command::Genqueries(a) => genqueries(a, seed),
        Command::Sample(a) => sample(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Eval(a) => eval(a, seed),
        Command::Fuse(a) => fuse(a),
        Command::Perturb(a) => perturb(a),
        Command::Run => {
            let cfg = config.ok_or_else(|| Error::InvalidArgument("run needs --config".into()))?;
            let manifest = pipeline::run_pipeline(&cfg)?;
            let bundle = pipeline::emit_report(&cfg.run_dir())?;
            let done = manifest.stages.iter().filter(|s| s.complete).count();
            println!("{done} stages complete in {}", cfg.run_dir().display());
            print_report(&bundle.report);
            Ok(())
        }
        Command::Report(a) => {
            let dir = match (&a.run_dir, &config) {
                (Some(d), _) => d.clone(),
                (None, Some(cfg)) => cfg.run_dir(),
                (None, None) => return Err(Error::InvalidArgument("report needs --run-dir or --config".into())),
            };
            let bundle = pipeline::emit_report(&dir)?;
            print_report(&bundle.report);
            println!("{}", bundle.json.display());
            Ok(())
        }
        Command::Fixture(a) => {
            bmembed::fixture::generate(a.fixture_seed).write(&a.out)?;
            println!("{}", a.out.display());
            Ok(())
        }
    }
}

fn print_report(report: &pipeline::RunReport) {
    println!("{:<12} {:>8} {:>8} {:>8} {:>8}", "method", "hit@1", "hit@4", "hit@10", "map@10");
    for r in &report.rows {
        println!(
            "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.method, r.hit_at_1, r.hit_at_4, r.hit_at_10, r.map_at_10
        );
    }
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let docs = load_corpus(required(&a.corpus, "corpus")?)?;
    let chunks = chunk_corpus(&docs, a.chunk_size, &TokenizerConfig::default())?;
    write_chunks(required(&a.out, "out")?, &chunks)?;
    log::info!("{} documents -> {} chunks", docs.len(), chunks.len());
    Ok(())
}

fn index(a: &IndexArgs) -> Result<()> {
    let chunks = read_chunks(required(&a.chunks, "chunks")?)?;
    let params = Bm25Params { k1: a.k1, b: a.b };
    let index = InvertedIndex::build(&chunks, params, TokenizerConfig::default())?;
    index.save(required(&a.out, "out")?)?;
    log::info!("{} chunks, {} terms", index.num_chunks(), index.num_terms());
    Ok(())
}

fn search(a: &SearchArgs) -> Result<()> {
    let index = InvertedIndex::load(&a.index)?;
    print!("{}", format_run(&[index.search_text("query", &a.query, a.k)]));
    Ok(())
}

fn genqueries(a: &GenqueriesArgs, seed: u64) -> Result<()> {
    let docs = load_corpus(required(&a.corpus, "corpus")?)?;
    let prompts = match &a.prompts {
        Some(dir) => PromptSet::from_dir(dir)?,
        None => PromptSet::default(),
    };
    let llm: Box<dyn LlmClient> = match &a.llm_endpoint {
        Some(url) => Box::new(ChatCompletionsClient::from_env(url, &a.llm_model, &a.llm_key_env)),
        None => {
            let index = InvertedIndex::load(required(&a.index, "index")?)?;
            Box::new(StubLlm::new(prompts.clone(), Arc::new(IdfTable::from_index(&index)), seed))
        }
    };
    let options = GenerationOptions {
        max_queries: a.max_queries,
        seed,
    };
    let queries = generate_queries(&docs, llm.as_ref(), &prompts, &options)?;
    write_queries(required(&a.out, "out")?, &queries)?;
    log::info!("{} queries", queries.len());
    Ok(())
}

fn parse_boundaries(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|part| {
            let (lo, hi) = part
                .trim()
                .split_once('-')
                .ok_or_else(|| Error::InvalidArgument(format!("bad interval `{part}`, expected a-b")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad interval `{part}`")))
            };
            Ok((parse(lo)?, parse(hi)?))
        })
        .collect()
}

fn sample(a: &SampleArgs, seed: u64) -> Result<()> {
    let scheme = match a.strategy.as_str() {
        "uniform" => PartitionScheme::Uniform,
        "fine_to_coarse" => PartitionScheme::FineToCoarse {
            first_len: a.first_len,
            growth: a.growth,
        },
        "explicit" => PartitionScheme::Explicit {
            boundaries: parse_boundaries(
                a.boundaries
                    .as_deref()
                    .ok_or_else(|| Error::InvalidArgument("explicit strategy needs --boundaries".into()))?,
            )?,
        },
        other => return Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
    };
    let config = SamplingConfig {
        k: a.k,
        m: a.m,
        scheme,
        lists_per_query: a.lists_per_query,
    };
    config.validate().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let index = InvertedIndex::load(required(&a.index, "index")?)?;
    let queries = read_queries(required(&a.queries, "queries")?)?;
    let samples = generate_training_set(&queries, &index, &config, seed)?;
    write_samples(required(&a.out, "out")?, &samples)?;
    log::info!("{} samples", samples.len());
    Ok(())
}

fn provider(spec: &str) -> Result<CachedProvider> {
    Ok(CachedProvider::new(ProviderSpec::parse(spec)?.build()?))
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<()> {
    let config = TrainConfig {
        loss: LossKind::parse(&a.loss)?,
        alpha: a.alpha,
        infonce_tau: a.tau,
        infonce_batch: a.infonce_batch,
        lr: a.lr,
        steps: a.steps,
        seed,
        optimizer: if a.sgd { OptimizerKind::Sgd } else { OptimizerKind::Adam },
        resample: false,
        normalize_scores: a.normalize_scores,
    };
    config.validate()?;
    let out = required(&a.out, "out")?;
    let samples = read_samples(required(&a.samples, "samples")?)?;
    let chunks = read_chunks(required(&a.chunks, "chunks")?)?;
    let provider = provider(&a.provider)?;
    let embeddings = BaseEmbeddings::build(&provider, &samples, &chunks)?;
    let outcome = train(
        &mut FixedSamples(samples),
        &embeddings,
        AdapterParams::zeros(provider.dim()),
        &config,
    )?;
    Checkpoint {
        loss: config.loss,
        step: outcome.reports.len() as u64,
        params: outcome.params,
    }
    .save(out)?;
    if let Some(path) = &a.loss_curve {
        write_loss_curve(path, &outcome.reports)?;
    }
    if let Some(last) = outcome.reports.last() {
        log::info!("step {} loss {:.6}", last.step, last.loss);
    }
    Ok(())
}

fn load_gold(path: &Path, chunks: &[bmembed::corpus::Chunk], theta: f64) -> Result<GoldSet> {
    let queries = read_gold(path)?;
    GoldSet::resolve(&queries, chunks, &TokenizerConfig::default(), theta)
}

fn eval(a: &EvalArgs, seed: u64) -> Result<()> {
    let chunks = read_chunks(required(&a.chunks, "chunks")?)?;
    let gold = load_gold(required(&a.gold, "gold")?, &chunks, a.theta)?;
    let out = required(&a.out, "out")?;
    let report = if let Some(run) = &a.run {
        evaluate_run(a.method.as_deref().unwrap_or("run"), &read_run(run)?, &gold)?
    } else {
        let provider = provider(&a.provider)?;
        let adapter = a.adapter.as_deref().map(Checkpoint::load).transpose()?.map(|c| c.params);
        let encoder = match &adapter {
            Some(p) => Encoder::adapted(&provider, p),
            None => Encoder::base(&provider),
        };
        let mut queries = EmbeddingTable::new(provider.dim());
        queries.embed_missing(&provider, gold.queries.iter().map(|(q, _)| (q.query_id.as_str(), q.text.as_str())), 64)?;
        let mut table = EmbeddingTable::new(provider.dim());
        table.embed_missing(&provider, chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())), 64)?;
        let config = EvalConfig {
            theta: a.theta,
            uniformity_sample: a.uniformity_sample,
            seed,
            run_depth: a.depth,
        };
        let default_name = if adapter.is_some() { "adapted" } else { "base" };
        let method = a.method.as_deref().unwrap_or(default_name);
        let (report, run) = evaluate_dense(method, &encoder, &queries, &table, &chunks, &gold, &config)?;
        if let Some(path) = &a.run_out {
            write_run(path, &run)?;
        }
        report
    };
    write_report(out, &report)?;
    if let Some(path) = &a.per_query {
        write_per_query_csv(path, &report)?;
    }
    println!(
        "{}: hit@1 {:.4} hit@4 {:.4} hit@10 {:.4} map@10 {:.4}",
        report.method, report.hit_at_1, report.hit_at_4, report.hit_at_10, report.map_at_10
    );
    Ok(())
}

fn fuse(a: &FuseArgs) -> Result<()> {
    if a.runs.len() < 2 {
        return Err(Error::InvalidArgument("--runs needs at least two files".into()));
    }
    let runs = a.runs.iter().map(|p| read_run(p)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[RankedList]> = runs.iter().map(Vec::as_slice).collect();
    let fused = fuse_runs(&refs, &FusionConfig { u: a.u }, a.depth)?;
    match &a.out {
        Some(path) => write_run(path, &fused),
        None => {
            print!("{}", format_run(&fused));
            Ok(())
        }
    }
}

fn perturb(a: &PerturbArgs) -> Result<()> {
    let chunks = read_chunks(required(&a.chunks, "chunks")?)?;
    let gold = load_gold(required(&a.gold, "gold")?, &chunks, a.theta)?;
    let index = InvertedIndex::load(required(&a.index, "index")?)?;
    let lexicon = bmembed::fixture::read_synonyms(required(&a.synonyms, "synonyms")?)?;
    let options = KeywordOptions {
        max_keywords: a.max_keywords,
        max_df_fraction: a.max_df_fraction,
    };
    let variants = build_variants(&gold, &IdfTable::from_index(&index), &options, Some(&lexicon), None)?;
    if let Some(path) = &a.variants_out {
        write_variants(path, &variants)?;
    }

    let provider = provider(&a.provider)?;
    let adapter = a.adapter.as_deref().map(Checkpoint::load).transpose()?.map(|c| c.params);
    let mut table = EmbeddingTable::new(provider.dim());
    if a.methods.iter().any(|m| m.starts_with("dense")) {
        table.embed_missing(&provider, chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())), 64)?;
    }
    let ids: Vec<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();
    let mut retrievers: Vec<Box<dyn Retriever + '_>> = Vec::new();
    for m in &a.methods {
        let r: Box<dyn Retriever> = match m.as_str() {
            "bm25" => Box::new(Bm25Retriever { index: &index }),
            "dense" | "dense+adapter" => {
                let encoder = if m == "dense" {
                    Encoder::base(&provider)
                } else {
                    let p = adapter
                        .as_ref()
                        .ok_or_else(|| Error::InvalidArgument("dense+adapter needs --adapter".into()))?;
                    Encoder::adapted(&provider, p)
                };
                Box::new(DenseRetriever {
                    name: m.clone(),
                    encoder,
                    index: DenseIndex::build(&encoder, &table, &ids)?,
                })
            }
            other => return Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        };
        retrievers.push(r);
    }
    let methods: Vec<&dyn Retriever> = retrievers.iter().map(|r| r.as_ref()).collect();
    let rows = run_perturbation_eval(&methods, &variants, &gold, a.depth)?;
    match &a.out {
        Some(path) => write_delta_csv(path, &rows),
        None => {
            print!("{}", bmembed::perturb::delta_csv(&rows));
            Ok(())
        }
    }
}
