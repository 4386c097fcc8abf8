//! Listwise rerankers behind a single window-reorder contract.

mod http;
mod oracle;
mod prompt;

use serde::{Deserialize, Serialize};

pub use http::{HttpConfig, HttpReranker};
pub use oracle::{kendall_tau, NoisyOracle, Oracle, StaticScore};
pub use prompt::{parse_ranking, PromptTemplate, RenderedPrompt, DEFAULT_TEMPLATE};

use crate::budget::BudgetLedger;
use crate::error::{Error, Result};
use crate::types::{Corpus, DocIdx, QueryRecord};

/// One reranker call: a query and up to `w` candidate documents in current order.
pub struct WindowRequest<'a> {
    pub query: &'a QueryRecord,
    pub corpus: &'a Corpus,
    pub docs: &'a [DocIdx],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WindowResponse {
    /// `order[j]` is the request position placed at output position `j`.
    pub order: Vec<usize>,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

impl WindowResponse {
    pub fn from_order(order: Vec<usize>) -> Self {
        Self {
            order,
            ..Default::default()
        }
    }
}

pub trait Reranker: Send + Sync {
    fn name(&self) -> &str;
    fn rerank(&self, request: &WindowRequest<'_>) -> Result<WindowResponse>;
}

impl<R: Reranker + ?Sized> Reranker for Box<R> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn rerank(&self, request: &WindowRequest<'_>) -> Result<WindowResponse> {
        (**self).rerank(request)
    }
}

impl<R: Reranker + ?Sized> Reranker for std::sync::Arc<R> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn rerank(&self, request: &WindowRequest<'_>) -> Result<WindowResponse> {
        (**self).rerank(request)
    }
}

/// Why a window kept its input order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Fallback {
    Backend(String),
    NotPermutation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowOutcome {
    pub order: Vec<DocIdx>,
    pub new_docs: usize,
    pub fallback: Option<Fallback>,
}

pub fn is_permutation(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return false;
        }
    }
    true
}

/// Charge `window` to the ledger, ask the backend for an order and apply it.
///
/// Backend errors and invalid permutations leave the window in its input order
/// and are reported in `fallback`. The only error is a charge the ledger refuses.
pub fn rerank_window(
    backend: &dyn Reranker,
    query: &QueryRecord,
    corpus: &Corpus,
    window: &[DocIdx],
    ledger: &mut BudgetLedger,
) -> Result<WindowOutcome> {
    if window.is_empty() {
        return Err(Error::invalid("reranker window is empty"));
    }
    let new_docs = ledger.charge_window(window)?;
    let request = WindowRequest {
        query,
        corpus,
        docs: window,
    };
    let (order, fallback) = match backend.rerank(&request) {
        Ok(resp) => {
            ledger.record_tokens(resp.tokens_in, resp.tokens_out);
            if is_permutation(&resp.order, window.len()) {
                (resp.order.iter().map(|&i| window[i]).collect(), None)
            } else {
                (window.to_vec(), Some(Fallback::NotPermutation))
            }
        }
        Err(e) => {
            log::warn!("query {}: reranker {} failed: {e}", query.qid, backend.name());
            (window.to_vec(), Some(Fallback::Backend(e.to_string())))
        }
    };
    Ok(WindowOutcome {
        order,
        new_docs,
        fallback,
    })
}
