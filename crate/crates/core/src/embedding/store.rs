use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BMES";
const VERSION: u32 = 1;

pub fn content_key(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

fn hex(key: &[u8; 32]) -> String {
    key.iter().map(|b| format!("{b:02x}")).collect()
}

/// Vectors computed elsewhere, looked up by the SHA-256 of the exact text.
#[derive(Debug, Clone)]
pub struct PrecomputedStore {
    dim: usize,
    vectors: HashMap<[u8; 32], Vec<f32>>,
}

impl PrecomputedStore {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("{}: not an embedding store", path.display())));
        }
        let version = read_u32(&mut r).map_err(io)?;
        if version != VERSION {
            return Err(Error::Format(format!("{}: unsupported store version {version}", path.display())));
        }
        let dim = read_u32(&mut r).map_err(io)? as usize;
        let count = read_u64(&mut r).map_err(io)?;
        let mut vectors = HashMap::new();
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            let mut key = [0u8; 32];
            r.read_exact(&mut key).map_err(io)?;
            r.read_exact(&mut buf).map_err(io)?;
            let v = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            vectors.insert(key, v);
        }
        Ok(Self { dim, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for PrecomputedStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        texts
            .iter()
            .map(|t| {
                let key = content_key(t);
                self.vectors
                    .get(&key)
                    .map(|v| EmbeddingVector {
                        values: v.clone(),
                        empty_input: v.iter().all(|&x| x == 0.0),
                    })
                    .ok_or_else(|| Error::StoreMiss(hex(&key)))
            })
            .collect()
    }
}

/// Write `(text, vector)` entries in store format. Later duplicates of the
/// same text replace earlier ones.
pub fn write_store<'a>(path: &Path, dim: usize, entries: impl IntoIterator<Item = (&'a str, &'a [f32])>) -> Result<()> {
    let mut records: Vec<([u8; 32], &[f32])> = Vec::new();
    let mut seen: HashMap<[u8; 32], usize> = HashMap::new();
    for (text, v) in entries {
        if v.len() != dim {
            return Err(Error::InvalidArgument(format!("vector of dimension {} in a {dim}-d store", v.len())));
        }
        let key = content_key(text);
        match seen.get(&key) {
            Some(&i) => records[i].1 = v,
            None => {
                seen.insert(key, records.len());
                records.push((key, v));
            }
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(records.len() as u64).to_le_bytes()).map_err(io)?;
    for (key, v) in records {
        w.write_all(&key).map_err(io)?;
        for x in v {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub(crate) fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let a = [1.0f32, 0.0, -0.5];
        let b = [0.25f32, 0.5, 0.75];
        write_store(&path, 3, [("alpha", &a[..]), ("beta", &b[..])]).unwrap();
        let store = PrecomputedStore::load(&path).unwrap();
        assert_eq!(store.len(), 2);
        let out = store.embed_batch(&["beta", "alpha"]).unwrap();
        assert_eq!(out[0].values, b);
        assert_eq!(out[1].values, a);
        let err = store.embed("gamma").unwrap_err();
        assert!(err.to_string().contains(&hex(&content_key("gamma"))));
    }

    #[test]
    fn key_is_exact_text() {
        assert_ne!(content_key("Alpha"), content_key("alpha"));
        assert_eq!(
            hex(&content_key("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"nope").unwrap();
        assert!(matches!(PrecomputedStore::load(&path), Err(Error::Format(_))));
    }
}
