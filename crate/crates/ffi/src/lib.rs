//! C interface to the bmembed core: BM25 search, base embedders, the
//! residual adapter, the ListNet objective and reciprocal-rank fusion.
//!
//! Conventions:
//! * every fallible call returns a [`BmStatus`]; on failure the message is
//!   available from [`bm_last_error`] on the same thread;
//! * handles are opaque and released with their `_free` function;
//! * output buffers are caller-owned, with their capacity passed in;
//! * strings are UTF-8 and NUL-terminated.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use bmembed::bm25::{Bm25Params, InvertedIndex};
use bmembed::corpus::{read_chunks, Chunk};
use bmembed::embedding::{AdapterParams, EmbeddingProvider, ProviderSpec, ToyEmbedder};
use bmembed::fusion::{rrf_fuse, FusionConfig};
use bmembed::text::TokenizerConfig;
use bmembed::trainer::{listnet_grad, listnet_loss_with_target, target_distribution, Checkpoint};
use bmembed::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    NonFinite = 5,
    ZeroVector = 6,
    Undefined = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

impl From<&Error> for BmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => BmStatus::Io,
            Error::MalformedRecord { .. } | Error::Format(_) | Error::LlmParse { .. } => BmStatus::Format,
            Error::NonFinite(_) | Error::NonFiniteLoss { .. } => BmStatus::NonFinite,
            Error::ZeroVector | Error::DegenerateAdapter => BmStatus::ZeroVector,
            Error::Undefined(_) => BmStatus::Undefined,
            Error::Http(_) | Error::StoreMiss(_) => BmStatus::Internal,
            Error::Stage { source, .. } => BmStatus::from(source.as_ref()),
            _ => BmStatus::InvalidArgument,
        }
    }
}

/// One search hit: a position into the index's chunk list and its score.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmHit {
    pub chunk: u32,
    pub score: f64,
}

/// A fused entry: the caller's document id and its RRF score.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmFused {
    pub id: u64,
    pub score: f64,
}

pub struct BmIndex {
    index: InvertedIndex,
    ids: Vec<CString>,
}

pub struct BmEmbedder {
    provider: Box<dyn EmbeddingProvider>,
}

pub struct BmAdapter {
    params: AdapterParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

/// Run `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (BmStatus, String)>) -> BmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BmStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BmStatus::Internal
        }
    }
}

fn fail(e: Error) -> (BmStatus, String) {
    (BmStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (BmStatus, String) {
    (BmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> (BmStatus, String) {
    (BmStatus::InvalidArgument, message.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (BmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (BmStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (BmStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (BmStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn bm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn wrap_index(index: InvertedIndex) -> Box<BmIndex> {
    let ids = index
        .chunk_ids()
        .iter()
        .map(|id| CString::new(id.as_str()).unwrap_or_default())
        .collect();
    Box::new(BmIndex { index, ids })
}

/// Build an index over `n` chunks given as parallel id and text arrays.
#[no_mangle]
pub unsafe extern "C" fn bm_index_build(
    ids: *const *const c_char,
    texts: *const *const c_char,
    n: usize,
    k1: f64,
    b: f64,
    out: *mut *mut BmIndex,
) -> BmStatus {
    guard(|| {
        let ids = slice_arg(ids, n, "ids")?;
        let texts = slice_arg(texts, n, "texts")?;
        let mut chunks = Vec::with_capacity(n);
        for (i, (&id, &text)) in ids.iter().zip(texts).enumerate() {
            let id = str_arg(id, &format!("ids[{i}]"))?;
            let text = str_arg(text, &format!("texts[{i}]"))?;
            chunks.push(Chunk {
                chunk_id: id.to_string(),
                doc_id: id.to_string(),
                text: text.to_string(),
                token_count: 0,
                char_start: 0,
                char_end: text.len(),
            });
        }
        let index = InvertedIndex::build(&chunks, Bm25Params { k1, b }, TokenizerConfig::default()).map_err(fail)?;
        write_out(out, Box::into_raw(wrap_index(index)), "out")
    })
}

/// Build an index from a chunk file written by `bmembed ingest`.
#[no_mangle]
pub unsafe extern "C" fn bm_index_build_from_chunks(
    chunks_path: *const c_char,
    k1: f64,
    b: f64,
    out: *mut *mut BmIndex,
) -> BmStatus {
    guard(|| {
        let path = str_arg(chunks_path, "chunks_path")?;
        let chunks = read_chunks(Path::new(path)).map_err(fail)?;
        let index = InvertedIndex::build(&chunks, Bm25Params { k1, b }, TokenizerConfig::default()).map_err(fail)?;
        write_out(out, Box::into_raw(wrap_index(index)), "out")
    })
}

/// Load an index saved by `bmembed index`.
#[no_mangle]
pub unsafe extern "C" fn bm_index_load(path: *const c_char, out: *mut *mut BmIndex) -> BmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let index = InvertedIndex::load(Path::new(path)).map_err(fail)?;
        write_out(out, Box::into_raw(wrap_index(index)), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_index_free(index: *mut BmIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bm_index_num_chunks(index: *const BmIndex) -> usize {
    index.as_ref().map_or(0, |i| i.index.num_chunks())
}

/// Id of the chunk at `position`, owned by the index; null if out of range.
#[no_mangle]
pub unsafe extern "C" fn bm_index_chunk_id(index: *const BmIndex, position: u32) -> *const c_char {
    index
        .as_ref()
        .and_then(|i| i.ids.get(position as usize))
        .map_or(std::ptr::null(), |s| s.as_ptr())
}

/// Top hits for `query`, at most `capacity`, best first.
#[no_mangle]
pub unsafe extern "C" fn bm_index_search(
    index: *const BmIndex,
    query: *const c_char,
    hits: *mut BmHit,
    capacity: usize,
    out_len: *mut usize,
) -> BmStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        let query = str_arg(query, "query")?;
        let out = out_slice(hits, capacity, "hits")?;
        let list = index.index.search_text("", query, capacity);
        for (slot, entry) in out.iter_mut().zip(&list.entries) {
            let position = index
                .index
                .chunk_ids()
                .binary_search(&entry.chunk_id)
                .map_err(|_| invalid("hit outside the index"))?;
            *slot = BmHit {
                chunk: position as u32,
                score: entry.score,
            };
        }
        write_out(out_len, list.entries.len(), "out_len")
    })
}

/// The offline hashed bag-of-tokens embedder.
#[no_mangle]
pub unsafe extern "C" fn bm_toy_embedder_new(dim: usize, seed: u64, out: *mut *mut BmEmbedder) -> BmStatus {
    guard(|| {
        let provider = ToyEmbedder::new(dim, seed).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(BmEmbedder { provider: Box::new(provider) })), "out")
    })
}

/// Any provider, from the same spec strings the CLI accepts.
#[no_mangle]
pub unsafe extern "C" fn bm_embedder_from_spec(spec: *const c_char, out: *mut *mut BmEmbedder) -> BmStatus {
    guard(|| {
        let spec = ProviderSpec::parse(str_arg(spec, "spec")?).map_err(fail)?;
        let provider = spec.build().map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(BmEmbedder { provider })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_embedder_free(embedder: *mut BmEmbedder) {
    if !embedder.is_null() {
        drop(Box::from_raw(embedder));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bm_embedder_dim(embedder: *const BmEmbedder) -> usize {
    embedder.as_ref().map_or(0, |e| e.provider.dim())
}

/// Base embedding of `text` into `out[0..dim]`. A text without tokens
/// yields the zero vector.
#[no_mangle]
pub unsafe extern "C" fn bm_embed(
    embedder: *const BmEmbedder,
    text: *const c_char,
    out: *mut f32,
    dim: usize,
) -> BmStatus {
    guard(|| {
        let embedder = embedder.as_ref().ok_or_else(|| null("embedder"))?;
        if dim != embedder.provider.dim() {
            return Err((BmStatus::BufferTooSmall, format!("buffer holds {dim}, embedder dim is {}", embedder.provider.dim())));
        }
        let text = str_arg(text, "text")?;
        let out = out_slice(out, dim, "out")?;
        let v = embedder.provider.embed(text).map_err(fail)?;
        out.copy_from_slice(&v.values);
        Ok(())
    })
}

/// Identity adapter (W = 0) of dimension `dim`.
#[no_mangle]
pub unsafe extern "C" fn bm_adapter_zeros(dim: usize, out: *mut *mut BmAdapter) -> BmStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        write_out(out, Box::into_raw(Box::new(BmAdapter { params: AdapterParams::zeros(dim) })), "out")
    })
}

/// Load a checkpoint written by `bmembed train`.
#[no_mangle]
pub unsafe extern "C" fn bm_adapter_load(path: *const c_char, out: *mut *mut BmAdapter) -> BmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let params = Checkpoint::load(Path::new(path)).map_err(fail)?.params;
        write_out(out, Box::into_raw(Box::new(BmAdapter { params })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_adapter_free(adapter: *mut BmAdapter) {
    if !adapter.is_null() {
        drop(Box::from_raw(adapter));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bm_adapter_dim(adapter: *const BmAdapter) -> usize {
    adapter.as_ref().map_or(0, |a| a.params.dim())
}

/// Unit-length adapted vector of `input[0..dim]` into `out[0..dim]`.
#[no_mangle]
pub unsafe extern "C" fn bm_adapter_apply(
    adapter: *const BmAdapter,
    input: *const f32,
    out: *mut f32,
    dim: usize,
) -> BmStatus {
    guard(|| {
        let adapter = adapter.as_ref().ok_or_else(|| null("adapter"))?;
        if dim != adapter.params.dim() {
            return Err(invalid(format!("vector dim {dim}, adapter dim {}", adapter.params.dim())));
        }
        let input = slice_arg(input, dim, "input")?;
        let out = out_slice(out, dim, "out")?;
        let v = adapter.params.adapt(input).map_err(fail)?;
        out.copy_from_slice(&v);
        Ok(())
    })
}

/// ListNet loss of similarities `sims[0..m]` against BM25 `scores[0..m]` at
/// temperature `alpha`. `grad`, when not null, receives dL/dsims.
#[no_mangle]
pub unsafe extern "C" fn bm_listnet_loss(
    sims: *const f64,
    scores: *const f64,
    m: usize,
    alpha: f64,
    loss: *mut f64,
    grad: *mut f64,
) -> BmStatus {
    guard(|| {
        let sims = slice_arg(sims, m, "sims")?;
        let scores = slice_arg(scores, m, "scores")?;
        if sims.iter().any(|s| !s.is_finite()) {
            return Err((BmStatus::NonFinite, "similarities must be finite".into()));
        }
        let target = target_distribution(scores, alpha).map_err(fail)?;
        write_out(loss, listnet_loss_with_target(sims, &target), "loss")?;
        if !grad.is_null() {
            out_slice(grad, m, "grad")?.copy_from_slice(&listnet_grad(sims, &target));
        }
        Ok(())
    })
}

/// Reciprocal-rank fusion of `n` rankings of caller ids. Ranking `i` has
/// `lens[i]` ids at `rankings[i]`, best first. Writes at most `capacity`
/// fused entries and the total count to `out_len`; ties go to the smaller id.
#[no_mangle]
pub unsafe extern "C" fn bm_rrf(
    rankings: *const *const u64,
    lens: *const usize,
    n: usize,
    u: f64,
    out: *mut BmFused,
    capacity: usize,
    out_len: *mut usize,
) -> BmStatus {
    guard(|| {
        if !(u > 0.0) {
            return Err(invalid("u must be positive"));
        }
        let rankings = slice_arg(rankings, n, "rankings")?;
        let lens = slice_arg(lens, n, "lens")?;
        // Zero-padded decimal keeps string order equal to numeric order.
        let lists: Vec<Vec<String>> = rankings
            .iter()
            .zip(lens)
            .enumerate()
            .map(|(i, (&p, &len))| Ok(slice_arg(p, len, &format!("rankings[{i}]"))?.iter().map(|id| format!("{id:020}")).collect()))
            .collect::<Result<_, (BmStatus, String)>>()?;
        let fused = rrf_fuse(&lists, &FusionConfig { u }).map_err(fail)?;
        let slots = out_slice(out, capacity, "out")?;
        for (slot, entry) in slots.iter_mut().zip(&fused) {
            *slot = BmFused {
                id: entry.chunk_id.parse().expect("formatted above"),
                score: entry.score,
            };
        }
        write_out(out_len, fused.len(), "out_len")
    })
}
