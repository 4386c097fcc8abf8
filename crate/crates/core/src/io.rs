//! Embedding file formats and atomic file output.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! u32 magic 0x52475331 | u32 dim | u64 count
//! count x [ u16 id_len | id bytes (UTF-8) | dim x f32 ]
//! ```
//!
//! JSON-lines layout: one `{"id": str, "vector": [f32], "text": str?}` object per line.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Corpus, Embedding, QueryRecord};

pub const EMBEDDING_MAGIC: u32 = 0x5247_5331;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    JsonLines,
}

impl EmbeddingFormat {
    /// Guess from the file extension: `.jsonl`/`.json` are JSON-lines, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => EmbeddingFormat::JsonLines,
            _ => EmbeddingFormat::Binary,
        }
    }
}

impl std::str::FromStr for EmbeddingFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bin" | "binary" => Ok(EmbeddingFormat::Binary),
            "jsonl" | "json" => Ok(EmbeddingFormat::JsonLines),
            other => Err(format!("unknown embedding format {other:?}")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    vector: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

/// One record of an embedding file, before it is placed in a corpus or query set.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub embedding: Embedding,
    pub text: Option<String>,
}

pub fn read_records(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<Vec<EmbeddingRecord>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        EmbeddingFormat::Binary => parse_binary(&bytes),
        EmbeddingFormat::JsonLines => parse_json_lines(&bytes),
    }
    .map_err(|msg| Error::load(path, msg))
}

fn parse_json_lines(bytes: &[u8]) -> std::result::Result<Vec<EmbeddingRecord>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| format!("not valid UTF-8: {e}"))?;
    let mut out = Vec::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = out.len();
        let rec: JsonRecord =
            serde_json::from_str(line).map_err(|e| format!("line {}: {e}", lineno + 1))?;
        check_dim(&mut dim, rec.vector.len(), row, &format!("line {}", lineno + 1))?;
        let embedding =
            Embedding::new(rec.vector).map_err(|e| format!("line {}: {e}", lineno + 1))?;
        out.push(EmbeddingRecord {
            id: rec.id,
            embedding,
            text: rec.text,
        });
    }
    Ok(out)
}

fn check_dim(
    dim: &mut Option<usize>,
    found: usize,
    row: usize,
    location: &str,
) -> std::result::Result<(), String> {
    match *dim {
        None => *dim = Some(found),
        Some(d) if d != found => {
            return Err(format!(
                "{location} (row {row}): dimension {found} differs from {d}"
            ))
        }
        _ => {}
    }
    Ok(())
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        if self.bytes.len() - self.pos < n {
            return Err(format!(
                "truncated at byte offset {} while reading {what}",
                self.pos
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> std::result::Result<u8, String> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// `u16` length prefix followed by UTF-8 bytes.
    pub(crate) fn id(&mut self, what: &str) -> std::result::Result<String, String> {
        let at = self.pos;
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| format!("{what} at byte offset {at} is not UTF-8"))
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn parse_binary(bytes: &[u8]) -> std::result::Result<Vec<EmbeddingRecord>, String> {
    let mut r = ByteReader::new(bytes);
    let magic = r.u32("magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(format!("bad magic 0x{magic:08x}, expected 0x{EMBEDDING_MAGIC:08x}"));
    }
    let dim = r.u32("dim")? as usize;
    if dim == 0 {
        return Err("header declares dimension 0".into());
    }
    let count = r.u64("count")?;
    let mut out = Vec::with_capacity(count.min(1 << 20) as usize);
    for row in 0..count {
        let at = r.offset();
        let id = r.id(&format!("id of record {row}"))?;
        let raw = r.take(dim * 4, &format!("vector of record {row}"))?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let embedding =
            Embedding::new(values).map_err(|e| format!("record {row} at byte offset {at}: {e}"))?;
        out.push(EmbeddingRecord {
            id,
            embedding,
            text: None,
        });
    }
    if r.remaining() > 0 {
        return Err(format!(
            "{} trailing bytes after {count} records",
            r.remaining()
        ));
    }
    Ok(out)
}

/// Load a document corpus. Rows must share one dimension and have unique ids.
pub fn load_corpus(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let records = read_records(path, format)?;
    corpus_from_records(records).map_err(|e| match e {
        Error::InvalidInput(m) => Error::load(path, m),
        other => other,
    })
}

pub fn corpus_from_records(records: Vec<EmbeddingRecord>) -> Result<Corpus> {
    let dim = records.first().map(|r| r.embedding.dim()).unwrap_or(1);
    let mut corpus = Corpus::new(dim);
    for (row, rec) in records.into_iter().enumerate() {
        corpus
            .push(rec.id, rec.embedding, rec.text)
            .map_err(|e| Error::invalid(format!("row {row}: {e}")))?;
    }
    Ok(corpus)
}

/// Load a query set (same formats as corpora; the record id is the query id).
pub fn load_queries(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<Vec<QueryRecord>> {
    let path = path.as_ref();
    let records = read_records(path, format)?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (row, rec) in records.into_iter().enumerate() {
        if !seen.insert(rec.id.clone()) {
            return Err(Error::load(path, format!("row {row}: duplicate query id {:?}", rec.id)));
        }
        out.push(QueryRecord::new(rec.id, rec.embedding, rec.text));
    }
    Ok(out)
}

pub fn encode_binary<'a>(
    dim: usize,
    records: impl ExactSizeIterator<Item = (&'a str, &'a [f32])>,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&EMBEDDING_MAGIC.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for (id, v) in records {
        push_id(&mut out, id)?;
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub(crate) fn push_id(out: &mut Vec<u8>, id: &str) -> Result<()> {
    let len = u16::try_from(id.len())
        .map_err(|_| Error::invalid(format!("id {id:?} longer than 65535 bytes")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(id.as_bytes());
    Ok(())
}

pub fn encode_json_lines<'a>(
    records: impl Iterator<Item = (&'a str, &'a [f32], Option<&'a str>)>,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (id, v, text) in records {
        let rec = JsonRecord {
            id: id.to_string(),
            vector: v.to_vec(),
            text: text.map(str::to_string),
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::invalid(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
    let bytes = match format {
        EmbeddingFormat::Binary => encode_binary(
            corpus.dim(),
            corpus.indices().map(|i| (corpus.id(i), corpus.vector(i))),
        )?,
        EmbeddingFormat::JsonLines => encode_json_lines(
            corpus
                .indices()
                .map(|i| (corpus.id(i), corpus.vector(i), corpus.text(i))),
        )?,
    };
    write_atomic(path, &bytes)
}

pub fn save_queries(queries: &[QueryRecord], path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
    let dim = queries.first().map(|q| q.embedding.dim()).unwrap_or(0);
    let bytes = match format {
        EmbeddingFormat::Binary => encode_binary(
            dim,
            queries.iter().map(|q| (q.qid.as_str(), q.embedding.as_slice())),
        )?,
        EmbeddingFormat::JsonLines => encode_json_lines(
            queries
                .iter()
                .map(|q| (q.qid.as_str(), q.embedding.as_slice(), q.text.as_deref())),
        )?,
    };
    write_atomic(path, &bytes)
}

/// Write `bytes` to a temporary file next to `path`, then rename over it.
/// Nothing is left at `path` if any step fails.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir: PathBuf = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
