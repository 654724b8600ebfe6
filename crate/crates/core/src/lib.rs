//! Adapt a general-purpose text embedder to a private corpus using listwise
//! supervision mined from BM25 rankings, and measure the result.
//!
//! The flow is: chunk the corpus ([`corpus`]), index it ([`bm25`]), generate
//! synthetic queries ([`querygen`]), sample ranking lists per query
//! ([`sampler`]), fit a residual adapter over frozen base embeddings
//! ([`embedding`], [`trainer`]), then evaluate ([`eval`], [`fusion`],
//! [`perturb`]). [`pipeline`] runs every stage from one config file.

pub mod bm25;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod fusion;
pub mod http;
pub mod jsonl;
pub mod perturb;
pub mod pipeline;
pub mod querygen;
pub mod run;
pub mod retrieval;
pub mod rng;
pub mod sampler;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
