//! Index file format (little-endian):
//!
//! ```text
//! u32 magic 0x52475347 | u32 version | u32 R | u32 n | u8 kind | default_start id
//! n x [ id | u16 neighbor_count | neighbor_count x id ]
//! ```
//!
//! Every id is a u16 byte length followed by UTF-8 bytes. Vertices are written
//! in corpus order and resolved against the corpus supplied at load time.

use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{GraphIndex, GraphKind};
use crate::io::{push_id, write_atomic, ByteReader};
use crate::types::{Corpus, DocIdx};

pub const INDEX_MAGIC: u32 = 0x5247_5347;
pub const INDEX_VERSION: u32 = 1;

pub fn encode_index(index: &GraphIndex, corpus: &Corpus) -> Result<Vec<u8>> {
    index.check_corpus(corpus)?;
    let mut out = Vec::new();
    out.extend_from_slice(&INDEX_MAGIC.to_le_bytes());
    out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
    out.extend_from_slice(&(index.degree_bound() as u32).to_le_bytes());
    out.extend_from_slice(&(index.len() as u32).to_le_bytes());
    out.push(index.kind().code());
    push_id(&mut out, corpus.id(index.default_start()))?;
    for v in corpus.indices() {
        push_id(&mut out, corpus.id(v))?;
        let nbrs = index.neighbors(v);
        out.extend_from_slice(&(nbrs.len() as u16).to_le_bytes());
        for &u in nbrs {
            push_id(&mut out, corpus.id(u))?;
        }
    }
    Ok(out)
}

pub fn save_index(index: &GraphIndex, corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_index(index, corpus)?;
    write_atomic(path, &bytes)
}

pub fn load_index(path: impl AsRef<Path>, corpus: &Corpus) -> Result<GraphIndex> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&bytes, corpus).map_err(|m| Error::load(path, m))
}

pub fn decode_index(bytes: &[u8], corpus: &Corpus) -> std::result::Result<GraphIndex, String> {
    let mut r = ByteReader::new(bytes);
    let magic = r.u32("magic")?;
    if magic != INDEX_MAGIC {
        return Err(format!("bad magic {magic:#010x}, not an index file"));
    }
    let version = r.u32("version")?;
    if version != INDEX_VERSION {
        return Err(format!(
            "unsupported index version {version} (expected {INDEX_VERSION})"
        ));
    }
    let degree_bound = r.u32("degree bound")? as usize;
    let n = r.u32("vertex count")? as usize;
    let kind_code = r.u8("graph kind")?;
    let kind = GraphKind::from_code(kind_code).ok_or(format!("unknown graph kind code {kind_code}"))?;
    if n != corpus.len() {
        return Err(format!(
            "index has {n} vertices but corpus has {} documents",
            corpus.len()
        ));
    }
    let resolve = |id: String| -> std::result::Result<DocIdx, String> {
        corpus
            .index_of(&id)
            .ok_or_else(|| format!("document {id:?} is not in the corpus"))
    };
    let default_start = resolve(r.id("default start")?)?;

    let mut adjacency: Vec<Option<Vec<DocIdx>>> = vec![None; n];
    for _ in 0..n {
        let v = resolve(r.id("vertex id")?)?;
        let count = r.u16("neighbor count")? as usize;
        let mut nbrs = Vec::with_capacity(count);
        for _ in 0..count {
            nbrs.push(resolve(r.id("neighbor id")?)?);
        }
        if adjacency[v as usize].replace(nbrs).is_some() {
            return Err(format!("vertex {:?} listed twice", corpus.id(v)));
        }
    }
    if r.remaining() != 0 {
        return Err(format!("{} trailing bytes at offset {}", r.remaining(), r.offset()));
    }
    let adjacency: Vec<Vec<DocIdx>> = adjacency.into_iter().map(Option::unwrap_or_default).collect();
    GraphIndex::from_parts(adjacency, degree_bound, default_start, kind).map_err(|e| e.to_string())
}
