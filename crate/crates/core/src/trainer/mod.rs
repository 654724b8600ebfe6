//! Adapter training on BM25-supervised ranking samples.

mod backprop;
mod loss;
mod optim;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use loss::{
    entropy, infonce_grad, infonce_loss, listmle_grad, listmle_loss, listnet_grad, listnet_loss,
    listnet_loss_with_target, min_max, softmax, target_distribution,
};
pub use optim::OptimizerKind;

use crate::bm25::RankedList;
use crate::corpus::Chunk;
use crate::embedding::{AdapterParams, EmbeddingProvider, EmbeddingTable};
use crate::error::{Error, Result};
use crate::querygen::SyntheticQuery;
use crate::rng::SplitMix64;
use crate::sampler::{epoch_seed, sample_from_rankings, RankingSample, SamplingConfig};
use backprop::PairGraph;
use optim::Optimizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Listnet,
    Listmle,
    Infonce,
}

impl LossKind {
    pub fn code(self) -> u32 {
        match self {
            LossKind::Listnet => 0,
            LossKind::Listmle => 1,
            LossKind::Infonce => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(LossKind::Listnet),
            1 => Ok(LossKind::Listmle),
            2 => Ok(LossKind::Infonce),
            _ => Err(Error::Format(format!("unknown loss code {code}"))),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "listnet" => Ok(LossKind::Listnet),
            "listmle" => Ok(LossKind::Listmle),
            "infonce" => Ok(LossKind::Infonce),
            _ => Err(Error::InvalidArgument(format!("unknown loss `{name}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// Target temperature; ListNet only.
    pub alpha: f64,
    pub infonce_tau: f64,
    /// Pairs per InfoNCE step.
    pub infonce_batch: usize,
    pub lr: f64,
    pub steps: usize,
    /// Set from the run seed, never from the config file.
    #[serde(skip)]
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Redraw ranking samples every epoch.
    pub resample: bool,
    /// Min-max normalize each score list before the target softmax.
    pub normalize_scores: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Listnet,
            alpha: 1.0,
            infonce_tau: 0.05,
            infonce_batch: 16,
            lr: 1e-4,
            steps: 1000,
            seed: 42,
            optimizer: OptimizerKind::Adam,
            resample: true,
            normalize_scores: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("infonce_tau", self.infonce_tau)?;
        positive("lr", self.lr)?;
        if self.infonce_batch < 2 {
            return Err(Error::Config("infonce_batch must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub elapsed_ms: f64,
}

/// Frozen base vectors for training: queries by query id, chunks by chunk id.
#[derive(Debug, Clone)]
pub struct BaseEmbeddings {
    pub queries: EmbeddingTable,
    pub chunks: EmbeddingTable,
}

impl BaseEmbeddings {
    pub fn build(provider: &dyn EmbeddingProvider, samples: &[RankingSample], chunks: &[Chunk]) -> Result<Self> {
        let mut queries = EmbeddingTable::new(provider.dim());
        queries.embed_missing(provider, samples.iter().map(|s| (s.query_id.as_str(), s.query_text.as_str())), 64)?;
        let mut table = EmbeddingTable::new(provider.dim());
        table.embed_missing(provider, chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())), 64)?;
        Ok(Self { queries, chunks: table })
    }

    fn query(&self, id: &str) -> Result<&[f32]> {
        self.queries
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no base embedding for query `{id}`")))
    }

    fn chunk(&self, id: &str) -> Result<&[f32]> {
        self.chunks.get(id).ok_or_else(|| Error::UnknownChunk(id.to_string()))
    }
}

/// Loss and dW for one ranking sample under ListNet or ListMLE.
pub fn list_objective(
    kind: LossKind,
    query: &[f32],
    passages: &[&[f32]],
    scores: &[f64],
    params: &AdapterParams,
    alpha: f64,
    normalize_scores: bool,
) -> Result<(f64, Vec<f64>)> {
    let mut inputs = vec![query];
    inputs.extend_from_slice(passages);
    let mut graph = PairGraph::new(params, &inputs)?;
    let sims: Vec<f64> = (1..inputs.len()).map(|j| graph.sim(0, j)).collect();
    let scores = if normalize_scores { min_max(scores) } else { scores.to_vec() };
    let (value, grad) = match kind {
        LossKind::Listnet => {
            let target = target_distribution(&scores, alpha)?;
            (listnet_loss_with_target(&sims, &target), listnet_grad(&sims, &target))
        }
        LossKind::Listmle => (listmle_loss(&sims, &scores)?, listmle_grad(&sims, &scores)),
        LossKind::Infonce => {
            return Err(Error::InvalidArgument("InfoNCE is not a list objective".into()));
        }
    };
    for (j, g) in grad.into_iter().enumerate() {
        graph.push(0, j + 1, g);
    }
    Ok((value, graph.weight_gradient()))
}

/// Mean InfoNCE over a batch of (query, positive) pairs. Each query's
/// negatives are the other pairs' positives, except copies of its own.
pub fn infonce_objective(
    queries: &[&[f32]],
    positives: &[&[f32]],
    positive_ids: &[&str],
    tau: f64,
    params: &AdapterParams,
) -> Result<(f64, Vec<f64>)> {
    let b = queries.len();
    if positives.len() != b || positive_ids.len() != b {
        return Err(Error::InvalidArgument("InfoNCE batch sides differ in length".into()));
    }
    let mut inputs: Vec<&[f32]> = queries.to_vec();
    inputs.extend_from_slice(positives);
    let mut graph = PairGraph::new(params, &inputs)?;
    let mut rows = Vec::new();
    for i in 0..b {
        let mut cols = vec![b + i];
        cols.extend((0..b).filter(|&k| positive_ids[k] != positive_ids[i]).map(|k| b + k));
        if cols.len() >= 2 {
            rows.push((i, cols));
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("InfoNCE batch has no negatives".into()));
    }
    let scale = 1.0 / rows.len() as f64;
    let mut total = 0.0;
    for (i, cols) in rows {
        let sims: Vec<f64> = cols.iter().map(|&c| graph.sim(i, c)).collect();
        total += infonce_loss(&sims, tau)?;
        for (c, g) in cols.iter().zip(infonce_grad(&sims, tau)) {
            graph.push(i, *c, g * scale);
        }
    }
    Ok((total * scale, graph.weight_gradient()))
}

pub fn sample_objective(
    sample: &RankingSample,
    embeddings: &BaseEmbeddings,
    params: &AdapterParams,
    config: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let query = embeddings.query(&sample.query_id)?;
    let passages = sample.passages.iter().map(|p| embeddings.chunk(p)).collect::<Result<Vec<_>>>()?;
    list_objective(
        config.loss,
        query,
        &passages,
        &sample.scores,
        params,
        config.alpha,
        config.normalize_scores,
    )
}

/// Dense dW of the ListNet loss for one sample.
pub fn listnet_gradient(
    sample: &RankingSample,
    embeddings: &BaseEmbeddings,
    params: &AdapterParams,
    alpha: f64,
) -> Result<Vec<f64>> {
    let config = TrainConfig {
        loss: LossKind::Listnet,
        alpha,
        ..TrainConfig::default()
    };
    Ok(sample_objective(sample, embeddings, params, &config)?.1)
}

/// Supplies the training samples of each epoch.
pub trait SampleSource {
    fn epoch_samples(&mut self, epoch: usize) -> Result<Vec<RankingSample>>;
}

/// The same samples every epoch.
pub struct FixedSamples(pub Vec<RankingSample>);

impl SampleSource for FixedSamples {
    fn epoch_samples(&mut self, _epoch: usize) -> Result<Vec<RankingSample>> {
        Ok(self.0.clone())
    }
}

/// Redraws one list per query per epoch from cached BM25 rankings, using
/// the epoch-derived seed. Epoch 0 reproduces the persisted sample set.
pub struct EpochResampler {
    pub queries: Vec<SyntheticQuery>,
    pub rankings: Vec<RankedList>,
    pub sampling: SamplingConfig,
    pub seed: u64,
}

impl SampleSource for EpochResampler {
    fn epoch_samples(&mut self, epoch: usize) -> Result<Vec<RankingSample>> {
        sample_from_rankings(&self.queries, &self.rankings, &self.sampling, epoch_seed(self.seed, epoch))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AdapterParams,
    pub reports: Vec<LossReport>,
}

pub fn train(
    source: &mut dyn SampleSource,
    embeddings: &BaseEmbeddings,
    init: AdapterParams,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut params = init;
    let mut reports = Vec::with_capacity(config.steps);
    if config.steps == 0 {
        return Ok(TrainOutcome { params, reports });
    }
    let mut optimizer = Optimizer::new(config.optimizer, config.lr, params.matrix().len());
    let started = Instant::now();
    let mut step = 0;
    let mut epoch = 0;
    let mut fixed: Option<Vec<RankingSample>> = None;
    while step < config.steps {
        let samples = match (&fixed, config.resample) {
            (Some(s), false) => s.clone(),
            _ => {
                let s = source.epoch_samples(epoch)?;
                if !config.resample {
                    fixed = Some(s.clone());
                }
                s
            }
        };
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no training samples".into()));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        SplitMix64::derive(config.seed, format!("shuffle\u{0}{epoch}").as_bytes()).shuffle(&mut order);
        let batch = if config.loss == LossKind::Infonce { config.infonce_batch } else { 1 };
        for group in order.chunks(batch) {
            if step >= config.steps {
                break;
            }
            let (value, grad) = if config.loss == LossKind::Infonce {
                if group.len() < 2 {
                    continue;
                }
                infonce_step(group.iter().map(|&i| &samples[i]), embeddings, &params, config.infonce_tau)?
            } else {
                sample_objective(&samples[group[0]], embeddings, &params, config)?
            };
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !grad_norm.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            optimizer.step(params.matrix_mut(), &grad);
            reports.push(LossReport {
                step,
                loss: value,
                grad_norm,
                elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            step += 1;
        }
        epoch += 1;
    }
    Ok(TrainOutcome { params, reports })
}

/// One InfoNCE step: each sample contributes its query and its first passage
/// as the positive.
fn infonce_step<'a>(
    group: impl Iterator<Item = &'a RankingSample>,
    embeddings: &BaseEmbeddings,
    params: &AdapterParams,
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut queries = Vec::new();
    let mut positives = Vec::new();
    let mut ids = Vec::new();
    for s in group {
        let pos = s
            .passages
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("sample {} has no passage", s.query_id)))?;
        queries.push(embeddings.query(&s.query_id)?);
        positives.push(embeddings.chunk(pos)?);
        ids.push(pos.as_str());
    }
    infonce_objective(&queries, &positives, &ids, tau, params)
}

pub fn write_loss_curve(path: &Path, reports: &[LossReport]) -> Result<()> {
    let mut out = String::from("step,loss,grad_norm\n");
    for r in reports {
        let _ = writeln!(out, "{},{},{}", r.step, r.loss, r.grad_norm);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"BMAD";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub loss: LossKind,
    pub step: u64,
    pub params: AdapterParams,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.params.dim() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&self.loss.code().to_le_bytes()).map_err(io)?;
        w.write_all(&self.step.to_le_bytes()).map_err(io)?;
        for &v in self.params.matrix() {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("{}: not an adapter checkpoint", path.display())));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(io)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("{}: unsupported checkpoint version {version}", path.display())));
        }
        r.read_exact(&mut word).map_err(io)?;
        let dim = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word).map_err(io)?;
        let loss = LossKind::from_code(u32::from_le_bytes(word))?;
        let mut long = [0u8; 8];
        r.read_exact(&mut long).map_err(io)?;
        let step = u64::from_le_bytes(long);
        let mut bytes = vec![0u8; dim * dim * 4];
        r.read_exact(&mut bytes).map_err(io)?;
        let w = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Self {
            loss,
            step,
            params: AdapterParams::from_matrix(dim, w)?,
        })
    }
}

#[cfg(test)]
mod tests;
