//! End-to-end orchestration: one config file, nine persisted stages, resume
//! by config hash.

mod config;
mod report;

use std::cell::OnceCell;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{EvalSection, PerturbSection, PipelineConfig, QuerySource, SamplingSection, SKIPPABLE};
pub use report::{emit_report, ReportBundle, ReportRow, RunReport, REPORT_CSV, REPORT_JSON, REPORT_SVG};

use crate::bm25::{InvertedIndex, RankedList};
use crate::corpus::{chunk_corpus, load_corpus, read_chunks, write_chunks, Chunk};
use crate::embedding::{CachedProvider, EmbeddingProvider, EmbeddingTable, ProviderSpec};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_dense, evaluate_run, read_gold, write_per_query_csv, write_report, DenseIndex, Encoder, EvalConfig,
    EvalReport, GoldSet,
};
use crate::fusion::fuse_runs;
use crate::perturb::{
    build_variants, read_variants, run_perturbation_eval, write_delta_csv, write_variants, KeywordOptions,
    PerturbedQuery,
};
use crate::querygen::{
    generate_queries, read_queries, write_queries, ChatCompletionsClient, GenerationOptions, IdfTable, LlmClient,
    PromptSet, StubLlm, SyntheticQuery,
};
use crate::retrieval::{Bm25Retriever, DenseRetriever, Retriever};
use crate::run::{read_run, write_run};
use crate::sampler::{generate_training_set, read_samples, write_samples};
use crate::trainer::{
    train, write_loss_curve, BaseEmbeddings, Checkpoint, EpochResampler, FixedSamples, SampleSource,
};
use crate::embedding::AdapterParams;

pub const STAGES: [&str; 9] = [
    "ingest",
    "index",
    "genqueries",
    "sample",
    "train",
    "eval_base",
    "eval_adapted",
    "fuse",
    "perturb",
];

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const INDEX_FILE: &str = "index.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const ADAPTER_FILE: &str = "adapter.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const GOLD_RESOLVED_FILE: &str = "gold_resolved.jsonl";
pub const VARIANTS_FILE: &str = "variants.jsonl";
pub const DELTAS_FILE: &str = "deltas.csv";

/// Method names used in eval and run file names.
pub const BM25: &str = "bm25";
pub const BASE: &str = "base";
pub const ADAPTED: &str = "adapted";
pub const RRF_BASE: &str = "rrf_base";
pub const RRF_ADAPTED: &str = "rrf_adapted";

pub fn eval_file(method: &str) -> String {
    format!("eval_{method}.json")
}

pub fn per_query_file(method: &str) -> String {
    format!("eval_{method}.csv")
}

pub fn run_file(method: &str) -> String {
    format!("run_{method}.tsv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub complete: bool,
    /// Left out by the config's `skip` list.
    pub skipped: bool,
    /// File names relative to the run directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    /// Files written by `emit_report`.
    #[serde(default)]
    pub report: Vec<String>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn is_complete(&self, name: &str) -> bool {
        self.stage(name).is_some_and(|s| s.complete)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::jsonl::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::jsonl::write_json(path, self)
    }
}

/// Run every stage in order, skipping those a previous run with the same
/// config hash already completed. The manifest is rewritten after each
/// stage, so a failure keeps the work done so far.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    let dir = config.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let hash = config.hash();
    let prior = match RunManifest::load(&manifest_path) {
        Ok(m) if m.config_hash == hash => Some(m),
        Ok(_) => {
            log::info!("config changed since the last run; starting over");
            None
        }
        Err(_) => None,
    };
    let mut manifest = RunManifest {
        config_hash: hash,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        stages: Vec::new(),
        report: prior.as_ref().map(|m| m.report.clone()).unwrap_or_default(),
    };
    let ctx = Context::new(config, &dir);
    // Once a stage reruns, everything downstream is stale.
    let mut fresh = prior.is_some();
    for name in STAGES {
        if config.skips(name) {
            manifest.stages.push(StageRecord {
                name: name.to_string(),
                complete: false,
                skipped: true,
                artifacts: Vec::new(),
            });
            continue;
        }
        let done = prior.as_ref().and_then(|m| m.stage(name)).filter(|s| {
            s.complete && s.artifacts.iter().all(|a| dir.join(a).is_file())
        });
        if let (true, Some(record)) = (fresh, done) {
            log::info!("stage {name}: already complete, skipping");
            manifest.stages.push(record.clone());
            continue;
        }
        fresh = false;
        manifest.report.clear();
        log::info!("stage {name}: running");
        let artifacts = ctx.run_stage(name).map_err(|e| Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        })?;
        manifest.stages.push(StageRecord {
            name: name.to_string(),
            complete: true,
            skipped: false,
            artifacts,
        });
        manifest.save(&manifest_path)?;
    }
    if prior.as_ref() != Some(&manifest) {
        manifest.save(&manifest_path)?;
    }
    Ok(manifest)
}

/// Run one named stage against the run directory of `config`, whatever the
/// state of the others, and record it. Later stages lose their completion
/// flag since their inputs may have changed.
pub fn run_single_stage(config: &PipelineConfig, name: &str) -> Result<RunManifest> {
    config.validate()?;
    let position = STAGES
        .iter()
        .position(|s| *s == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{name}`")))?;
    let dir = config.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let hash = config.hash();
    let mut manifest = match RunManifest::load(&manifest_path) {
        Ok(m) if m.config_hash == hash => m,
        _ => RunManifest {
            config_hash: hash,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            stages: STAGES
                .iter()
                .map(|s| StageRecord {
                    name: s.to_string(),
                    complete: false,
                    skipped: config.skips(s),
                    artifacts: Vec::new(),
                })
                .collect(),
            report: Vec::new(),
        },
    };
    let artifacts = Context::new(config, &dir).run_stage(name).map_err(|e| Error::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })?;
    for (i, record) in manifest.stages.iter_mut().enumerate() {
        if i == position {
            record.complete = true;
            record.skipped = false;
            record.artifacts = artifacts.clone();
        } else if i > position {
            record.complete = false;
        }
    }
    manifest.report.clear();
    manifest.save(&manifest_path)?;
    Ok(manifest)
}

/// Shared state for the stages of one run. Every stage reads its inputs
/// from files so that any suffix of the pipeline can run on its own.
pub struct Context<'a> {
    config: &'a PipelineConfig,
    dir: PathBuf,
    provider: OnceCell<CachedProvider>,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a PipelineConfig, dir: &Path) -> Self {
        Self {
            config,
            dir: dir.to_path_buf(),
            provider: OnceCell::new(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn run_stage(&self, name: &str) -> Result<Vec<String>> {
        match name {
            "ingest" => self.ingest(),
            "index" => self.index(),
            "genqueries" => self.genqueries(),
            "sample" => self.sample(),
            "train" => self.train(),
            "eval_base" => self.eval_base(),
            "eval_adapted" => self.eval_adapted(),
            "fuse" => self.fuse(),
            "perturb" => self.perturb(),
            other => Err(Error::InvalidArgument(format!("unknown stage `{other}`"))),
        }
    }

    fn provider(&self) -> Result<&dyn EmbeddingProvider> {
        if self.provider.get().is_none() {
            let spec = match &self.config.provider {
                ProviderSpec::Precomputed { path } => ProviderSpec::Precomputed {
                    path: self.config.resolve(path),
                },
                other => other.clone(),
            };
            let _ = self.provider.set(CachedProvider::new(spec.build()?));
        }
        Ok(self.provider.get().expect("provider set"))
    }

    fn chunks(&self) -> Result<Vec<Chunk>> {
        read_chunks(&self.path(CHUNKS_FILE))
    }

    fn load_index(&self) -> Result<InvertedIndex> {
        InvertedIndex::load(&self.path(INDEX_FILE))
    }

    fn prompts(&self) -> Result<PromptSet> {
        match &self.config.queries {
            QuerySource::Llm { prompts: Some(dir), .. } => PromptSet::from_dir(&self.config.resolve(dir)),
            _ => Ok(PromptSet::default()),
        }
    }

    /// The configured model: the remote endpoint, or the offline stub.
    fn llm(&self, index: &InvertedIndex) -> Result<Box<dyn LlmClient>> {
        Ok(match &self.config.queries {
            QuerySource::Llm {
                endpoint,
                model,
                api_key_env,
                ..
            } => Box::new(ChatCompletionsClient::from_env(endpoint, model, api_key_env)),
            _ => Box::new(StubLlm::new(
                self.prompts()?,
                Arc::new(IdfTable::from_index(index)),
                self.config.seed,
            )),
        })
    }

    fn ingest(&self) -> Result<Vec<String>> {
        let docs = load_corpus(&self.config.resolve(&self.config.corpus))?;
        let chunks = chunk_corpus(&docs, self.config.chunk_size, &self.config.tokenizer)?;
        log::info!("{} documents, {} chunks", docs.len(), chunks.len());
        write_chunks(&self.path(CHUNKS_FILE), &chunks)?;
        Ok(vec![CHUNKS_FILE.into()])
    }

    fn index(&self) -> Result<Vec<String>> {
        let index = InvertedIndex::build(&self.chunks()?, self.config.bm25, self.config.tokenizer)?;
        index.save(&self.path(INDEX_FILE))?;
        Ok(vec![INDEX_FILE.into()])
    }

    fn genqueries(&self) -> Result<Vec<String>> {
        let queries = match &self.config.queries {
            QuerySource::File { path } => read_queries(&self.config.resolve(path))?,
            QuerySource::Stub { max_queries } | QuerySource::Llm { max_queries, .. } => {
                let docs = load_corpus(&self.config.resolve(&self.config.corpus))?;
                let index = self.load_index()?;
                let llm = self.llm(&index)?;
                let options = GenerationOptions {
                    max_queries: *max_queries,
                    seed: self.config.seed,
                };
                generate_queries(&docs, llm.as_ref(), &self.prompts()?, &options)?
            }
        };
        if queries.is_empty() {
            return Err(Error::InvalidArgument("no synthetic queries were produced".into()));
        }
        log::info!("{} synthetic queries", queries.len());
        write_queries(&self.path(QUERIES_FILE), &queries)?;
        Ok(vec![QUERIES_FILE.into()])
    }

    fn sample(&self) -> Result<Vec<String>> {
        let queries = read_queries(&self.path(QUERIES_FILE))?;
        let index = self.load_index()?;
        let sampling = self.config.sampling.to_config()?;
        let samples = generate_training_set(&queries, &index, &sampling, self.config.seed)?;
        if samples.is_empty() {
            return Err(Error::InvalidArgument("every query has fewer BM25 hits than m".into()));
        }
        log::info!("{} ranking samples from {} queries", samples.len(), queries.len());
        write_samples(&self.path(SAMPLES_FILE), &samples)?;
        Ok(vec![SAMPLES_FILE.into()])
    }

    fn train(&self) -> Result<Vec<String>> {
        let samples = read_samples(&self.path(SAMPLES_FILE))?;
        let chunks = self.chunks()?;
        let provider = self.provider()?;
        let embeddings = BaseEmbeddings::build(provider, &samples, &chunks)?;
        let cfg = self.config.train_config();
        let mut source: Box<dyn SampleSource> = if cfg.resample {
            let queries = read_queries(&self.path(QUERIES_FILE))?;
            let index = self.load_index()?;
            let sampling = self.config.sampling.to_config()?;
            let rankings: Vec<RankedList> = queries
                .par_iter()
                .map(|q| index.search_text(&q.query_id, &q.text, sampling.k))
                .collect();
            Box::new(EpochResampler {
                queries,
                rankings,
                sampling,
                seed: self.config.seed,
            })
        } else {
            Box::new(FixedSamples(samples))
        };
        let outcome = train(source.as_mut(), &embeddings, AdapterParams::zeros(provider.dim()), &cfg)?;
        if let Some(last) = outcome.reports.last() {
            log::info!("trained {} steps, final loss {:.6}", last.step, last.loss);
        }
        Checkpoint {
            loss: cfg.loss,
            step: outcome.reports.len() as u64,
            params: outcome.params,
        }
        .save(&self.path(ADAPTER_FILE))?;
        write_loss_curve(&self.path(LOSS_FILE), &outcome.reports)?;
        Ok(vec![ADAPTER_FILE.into(), LOSS_FILE.into()])
    }

    fn gold(&self, chunks: &[Chunk]) -> Result<GoldSet> {
        let queries = read_gold(&self.config.resolve(&self.config.eval.gold))?;
        let gold = GoldSet::resolve(&queries, chunks, &self.config.tokenizer, self.config.eval.theta)?;
        if gold.is_empty() {
            return Err(Error::InvalidArgument("no gold query matches any chunk".into()));
        }
        Ok(gold)
    }

    fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            theta: self.config.eval.theta,
            uniformity_sample: self.config.eval.uniformity_sample,
            seed: self.config.seed,
            run_depth: self.config.eval.run_depth,
        }
    }

    /// Base vectors for the gold queries (by query id) and the chunks.
    fn tables(&self, gold: &GoldSet, chunks: &[Chunk]) -> Result<(EmbeddingTable, EmbeddingTable)> {
        let provider = self.provider()?;
        let mut queries = EmbeddingTable::new(provider.dim());
        queries.embed_missing(
            provider,
            gold.queries.iter().map(|(q, _)| (q.query_id.as_str(), q.text.as_str())),
            64,
        )?;
        let mut table = EmbeddingTable::new(provider.dim());
        table.embed_missing(provider, chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())), 64)?;
        Ok((queries, table))
    }

    fn write_eval(&self, method: &str, report: &EvalReport, run: &[RankedList]) -> Result<Vec<String>> {
        write_report(&self.path(&eval_file(method)), report)?;
        write_per_query_csv(&self.path(&per_query_file(method)), report)?;
        write_run(&self.path(&run_file(method)), run)?;
        log::info!(
            "{method}: hit@1 {:.4} hit@10 {:.4} map@10 {:.4}",
            report.hit_at_1,
            report.hit_at_10,
            report.map_at_10
        );
        Ok(vec![eval_file(method), per_query_file(method), run_file(method)])
    }

    fn eval_base(&self) -> Result<Vec<String>> {
        let chunks = self.chunks()?;
        let gold = self.gold(&chunks)?;
        let resolved: Vec<serde_json::Value> = gold
            .queries
            .iter()
            .map(|(q, rel)| serde_json::json!({ "query_id": q.query_id, "relevant": rel }))
            .chain(gold.unmatchable.iter().map(|id| serde_json::json!({ "query_id": id, "relevant": [] })))
            .collect();
        crate::jsonl::write(&self.path(GOLD_RESOLVED_FILE), &resolved)?;
        let mut artifacts = vec![GOLD_RESOLVED_FILE.to_string()];

        let index = self.load_index()?;
        let depth = self.config.eval.run_depth;
        let bm25_run: Vec<RankedList> = gold
            .queries
            .par_iter()
            .map(|(q, _)| index.search_text(&q.query_id, &q.text, depth))
            .collect();
        let report = evaluate_run(BM25, &bm25_run, &gold)?;
        artifacts.extend(self.write_eval(BM25, &report, &bm25_run)?);

        let (queries, table) = self.tables(&gold, &chunks)?;
        let encoder = Encoder::base(self.provider()?);
        let (report, run) = evaluate_dense(BASE, &encoder, &queries, &table, &chunks, &gold, &self.eval_config())?;
        artifacts.extend(self.write_eval(BASE, &report, &run)?);
        Ok(artifacts)
    }

    /// The adapter as persisted, so results match what a user reloads.
    fn adapter(&self) -> Result<AdapterParams> {
        Ok(Checkpoint::load(&self.path(ADAPTER_FILE))?.params)
    }

    fn eval_adapted(&self) -> Result<Vec<String>> {
        let chunks = self.chunks()?;
        let gold = self.gold(&chunks)?;
        let (queries, table) = self.tables(&gold, &chunks)?;
        let adapter = self.adapter()?;
        let encoder = Encoder::adapted(self.provider()?, &adapter);
        let (report, run) = evaluate_dense(ADAPTED, &encoder, &queries, &table, &chunks, &gold, &self.eval_config())?;
        self.write_eval(ADAPTED, &report, &run)
    }

    fn fuse(&self) -> Result<Vec<String>> {
        let chunks = self.chunks()?;
        let gold = self.gold(&chunks)?;
        let bm25 = read_run(&self.path(&run_file(BM25)))?;
        let mut artifacts = Vec::new();
        for (dense, fused) in [(BASE, RRF_BASE), (ADAPTED, RRF_ADAPTED)] {
            let run = read_run(&self.path(&run_file(dense)))?;
            let out = fuse_runs(&[&bm25, &run], &self.config.fusion, self.config.eval.run_depth)?;
            let report = evaluate_run(fused, &out, &gold)?;
            artifacts.extend(self.write_eval(fused, &report, &out)?);
        }
        Ok(artifacts)
    }

    fn perturb(&self) -> Result<Vec<String>> {
        let chunks = self.chunks()?;
        let gold = self.gold(&chunks)?;
        let index = self.load_index()?;
        let variants = self.build_variants(&gold, &index)?;
        if variants.is_empty() {
            return Err(Error::InvalidArgument("no gold query yields keywords with synonyms".into()));
        }
        write_variants(&self.path(VARIANTS_FILE), &variants)?;

        let provider = self.provider()?;
        let chunk_ids: Vec<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();
        let needs_dense = self.config.perturb.methods.iter().any(|m| m.starts_with("dense"));
        let table = if needs_dense {
            let mut t = EmbeddingTable::new(provider.dim());
            t.embed_missing(provider, chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())), 64)?;
            Some(t)
        } else {
            None
        };
        let adapter = if self.config.perturb.methods.iter().any(|m| m == "dense+adapter") {
            Some(self.adapter()?)
        } else {
            None
        };
        let mut retrievers: Vec<Box<dyn Retriever + '_>> = Vec::new();
        for method in &self.config.perturb.methods {
            let retriever: Box<dyn Retriever> = match method.as_str() {
                "bm25" => Box::new(Bm25Retriever { index: &index }),
                name => {
                    let encoder = match name {
                        "dense" => Encoder::base(provider),
                        _ => Encoder::adapted(provider, adapter.as_ref().expect("adapter loaded")),
                    };
                    let table = table.as_ref().expect("chunk table built");
                    Box::new(DenseRetriever {
                        name: name.to_string(),
                        encoder,
                        index: DenseIndex::build(&encoder, table, &chunk_ids)?,
                    })
                }
            };
            retrievers.push(retriever);
        }
        let methods: Vec<&dyn Retriever> = retrievers.iter().map(|r| r.as_ref()).collect();
        let rows = run_perturbation_eval(&methods, &variants, &gold, self.config.eval.run_depth)?;
        write_delta_csv(&self.path(DELTAS_FILE), &rows)?;
        Ok(vec![VARIANTS_FILE.into(), DELTAS_FILE.into()])
    }

    fn build_variants(&self, gold: &GoldSet, index: &InvertedIndex) -> Result<Vec<PerturbedQuery>> {
        let section = &self.config.perturb;
        let lexicon = match &section.synonyms {
            Some(p) => Some(crate::fixture::read_synonyms(&self.config.resolve(p))?),
            None => None,
        };
        let options = KeywordOptions {
            max_keywords: section.max_keywords,
            max_df_fraction: section.max_df_fraction,
        };
        let idf = IdfTable::from_index(index);
        if section.keywords == "llm" {
            let llm = self.llm(index)?;
            let prompts = self.prompts()?;
            build_variants(gold, &idf, &options, lexicon.as_ref(), Some((llm.as_ref(), &prompts)))
        } else {
            build_variants(gold, &idf, &options, lexicon.as_ref(), None)
        }
    }
}

/// Reload the perturbation variants of a finished run.
pub fn load_variants(run_dir: &Path) -> Result<Vec<PerturbedQuery>> {
    read_variants(&run_dir.join(VARIANTS_FILE))
}

/// Reload the synthetic queries of a finished run.
pub fn load_queries(run_dir: &Path) -> Result<Vec<SyntheticQuery>> {
    read_queries(&run_dir.join(QUERIES_FILE))
}
