use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bm25::Bm25Params;
use crate::embedding::ProviderSpec;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_THETA;
use crate::fusion::FusionConfig;
use crate::sampler::{PartitionScheme, SamplingConfig};
use crate::text::TokenizerConfig;
use crate::trainer::TrainConfig;

/// One JSON file describing a whole run. Paths are kept as written and
/// resolved against `base_dir`, the directory of the config file, so the
/// hash does not depend on where the file sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(skip)]
    pub base_dir: PathBuf,
    pub corpus: PathBuf,
    #[serde(default = "default_chunk_size")]
    pub chunk_size: usize,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub queries: QuerySource,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub provider: ProviderSpec,
    pub eval: EvalSection,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub perturb: PerturbSection,
    pub output_dir: PathBuf,
    /// Stage names to leave out; only `fuse` and `perturb` may be skipped.
    #[serde(default)]
    pub skip: Vec<String>,
}

fn default_chunk_size() -> usize {
    256
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub k: usize,
    pub m: usize,
    /// `uniform`, `fine_to_coarse` or `explicit`.
    pub strategy: String,
    pub first_len: usize,
    pub growth: f64,
    pub boundaries: Vec<(usize, usize)>,
    pub lists_per_query: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            k: 1000,
            m: 9,
            strategy: "fine_to_coarse".into(),
            first_len: 3,
            growth: 2.0,
            boundaries: Vec::new(),
            lists_per_query: 1,
        }
    }
}

impl SamplingSection {
    pub fn to_config(&self) -> Result<SamplingConfig> {
        let scheme = match self.strategy.as_str() {
            "uniform" => PartitionScheme::Uniform,
            "fine_to_coarse" => PartitionScheme::FineToCoarse {
                first_len: self.first_len,
                growth: self.growth,
            },
            "explicit" => PartitionScheme::Explicit {
                boundaries: self.boundaries.clone(),
            },
            other => return Err(Error::Config(format!("unknown sampling strategy `{other}`"))),
        };
        let cfg = SamplingConfig {
            k: self.k,
            m: self.m,
            scheme,
            lists_per_query: self.lists_per_query,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuerySource {
    /// Offline rule-based generator.
    Stub {
        #[serde(default)]
        max_queries: Option<usize>,
    },
    /// Chat-completions endpoint; the key is read from `api_key_env`.
    Llm {
        endpoint: String,
        model: String,
        #[serde(default = "default_llm_key")]
        api_key_env: String,
        #[serde(default)]
        max_queries: Option<usize>,
        /// Directory overriding the shipped prompt files.
        #[serde(default)]
        prompts: Option<PathBuf>,
    },
    /// A query store produced elsewhere.
    File { path: PathBuf },
}

fn default_llm_key() -> String {
    "BMEMBED_LLM_API_KEY".into()
}

impl Default for QuerySource {
    fn default() -> Self {
        QuerySource::Stub { max_queries: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub gold: PathBuf,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_uniformity_sample")]
    pub uniformity_sample: usize,
    #[serde(default = "default_run_depth")]
    pub run_depth: usize,
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

fn default_uniformity_sample() -> usize {
    512
}

fn default_run_depth() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSection {
    /// `stub` or `llm` (uses the query source's endpoint).
    pub keywords: String,
    pub max_keywords: usize,
    /// Stub extractor: terms in more than this share of chunks are ignored.
    pub max_df_fraction: f64,
    /// Synonym lexicon (JSON object); required unless keywords come from an LLM.
    pub synonyms: Option<PathBuf>,
    pub methods: Vec<String>,
}

impl Default for PerturbSection {
    fn default() -> Self {
        Self {
            keywords: "stub".into(),
            max_keywords: 5,
            max_df_fraction: 0.25,
            synonyms: None,
            methods: vec!["bm25".into(), "dense".into(), "dense+adapter".into()],
        }
    }
}

pub const SKIPPABLE: [&str; 2] = ["fuse", "perturb"];

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse and validate; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base_dir.join(p)
        } else {
            p.to_path_buf()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be positive".into()));
        }
        self.bm25.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.sampling.to_config()?;
        self.train.validate()?;
        if !(self.eval.theta > 0.0 && self.eval.theta <= 1.0) {
            return Err(Error::Config(format!("eval.theta must be in (0, 1], got {}", self.eval.theta)));
        }
        if self.eval.run_depth < 10 {
            return Err(Error::Config("eval.run_depth must be at least 10".into()));
        }
        if !(self.fusion.u > 0.0) {
            return Err(Error::Config("fusion.u must be positive".into()));
        }
        for s in &self.skip {
            if !SKIPPABLE.contains(&s.as_str()) {
                return Err(Error::Config(format!("stage `{s}` cannot be skipped")));
            }
        }
        if !self.skips("perturb") {
            match self.perturb.keywords.as_str() {
                "stub" => {
                    if self.perturb.synonyms.is_none() {
                        return Err(Error::Config("perturb.synonyms is required with stub keywords".into()));
                    }
                }
                "llm" => {
                    if !matches!(self.queries, QuerySource::Llm { .. }) {
                        return Err(Error::Config("perturb.keywords = llm needs an llm query source".into()));
                    }
                }
                other => return Err(Error::Config(format!("unknown keyword extractor `{other}`"))),
            }
            for m in &self.perturb.methods {
                if !["bm25", "dense", "dense+adapter"].contains(&m.as_str()) {
                    return Err(Error::Config(format!("unknown perturbation method `{m}`")));
                }
            }
            if !(self.perturb.max_df_fraction > 0.0 && self.perturb.max_df_fraction <= 1.0) {
                return Err(Error::Config("perturb.max_df_fraction must be in (0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn skips(&self, stage: &str) -> bool {
        self.skip.iter().any(|s| s == stage)
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Outputs for this seed live in their own directory.
    pub fn run_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir).join(format!("seed-{}", self.seed))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}
