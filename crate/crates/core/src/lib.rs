//! Reranker-guided search over proximity graphs.
//!
//! A listwise reranker walks a DiskANN-style graph under a budget on the number
//! of distinct documents it may read. The crate also provides retrieve-and-rerank
//! and SlideGAR baselines, the evaluation harness and a synthetic data generator.

pub mod budget;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod qrels;
pub mod rerank;
pub mod search;
pub mod types;

pub use budget::{budget_gate, Admission, BudgetLedger};
pub use error::{Error, Result};
pub use graph::{BuildParams, GraphIndex, GraphKind};
pub use qrels::{load_qrels, RelevanceJudgments};
pub use types::{dot, similarity, Corpus, DocIdx, Embedding, QueryRecord, RankedList};
