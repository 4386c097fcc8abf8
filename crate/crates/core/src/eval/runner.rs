//! Reranker@k experiment runner: every (method, budget, query) search, fanned
//! out over a worker pool and aggregated in a fixed order.

use std::collections::BTreeMap;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{classify, ndcg_at_10, perturb, perturb_queries, ErrorBreakdown, PerturbTarget, Perturbation};
use crate::graph::{build_diskann, build_knn, build_random, BuildParams, GraphIndex, GraphKind};
use crate::qrels::RelevanceJudgments;
use crate::rerank::Reranker;
use crate::search::{
    random_scan, retrieve_and_rerank, rgs_search_with_seeds, slidegar_search, start_points, PassMode, RgsParams,
    RrParams, SearchTrace, SlideGarParams, StartStrategy,
};
use crate::types::{Corpus, QueryRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rr,
    Slidegar,
    Rgs,
    Random,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rr => "rr",
            Method::Slidegar => "slidegar",
            Method::Rgs => "rgs",
            Method::Random => "random",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rr" => Ok(Method::Rr),
            "slidegar" => Ok(Method::Slidegar),
            "rgs" => Ok(Method::Rgs),
            "random" => Ok(Method::Random),
            other => Err(format!("unknown method {other:?} (rr, slidegar, rgs, random)")),
        }
    }
}

/// RGS settings shared by every budget. Unset fields follow the per-budget defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RgsConfig {
    pub ls: Option<usize>,
    pub seeds: Option<usize>,
    pub window: usize,
    pub start: StartStrategy,
    pub pass_mode: PassMode,
}

impl Default for RgsConfig {
    fn default() -> Self {
        Self {
            ls: None,
            seeds: None,
            window: 10,
            start: StartStrategy::Exact,
            pass_mode: PassMode::Full,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub budgets: Vec<usize>,
    pub rgs: RgsConfig,
    pub rr_window: usize,
    pub slidegar_window: usize,
    /// Beam width for every ANN lookup.
    pub search_beam: usize,
    /// Graph RGS expands over. Seeds always come from the DiskANN index.
    pub graph: GraphKind,
    /// Corpus graph feeding the SlideGAR frontier.
    pub slidegar_graph: GraphKind,
    pub build: BuildParams,
    pub knn_degree: usize,
    pub random_degree: usize,
    pub perturbation: Option<Perturbation>,
    /// A query whose search hits more backend failures than this is marked failed.
    pub max_backend_failures: usize,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub keep_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Rr, Method::Slidegar, Method::Rgs],
            budgets: vec![100, 300, 500],
            rgs: RgsConfig::default(),
            rr_window: 10,
            slidegar_window: 20,
            search_beam: 64,
            graph: GraphKind::Diskann,
            slidegar_graph: GraphKind::Knn,
            build: BuildParams::default(),
            knn_degree: 16,
            random_degree: 16,
            perturbation: None,
            max_backend_failures: 0,
            seed: 0,
            jobs: None,
            keep_traces: false,
        }
    }
}

impl ExperimentConfig {
    pub fn rgs_params(&self, budget: usize) -> RgsParams {
        let mut p = RgsParams::for_budget(budget);
        if let Some(ls) = self.rgs.ls {
            p.ls = ls;
        }
        if let Some(s) = self.rgs.seeds {
            p.seeds = s;
        }
        p.window = self.rgs.window;
        p.start = self.rgs.start;
        p.pass_mode = self.rgs.pass_mode;
        p.search_beam = self.search_beam;
        p
    }

    /// Checks everything that does not depend on the data. Messages name the field.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("methods: at least one method is required"));
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return Err(Error::invalid("budgets: need at least one budget, all positive"));
        }
        for (name, w) in [
            ("rr_window", self.rr_window),
            ("slidegar_window", self.slidegar_window),
            ("rgs.window", self.rgs.window),
        ] {
            if w < 2 {
                return Err(Error::invalid(format!("{name}: window must be at least 2")));
            }
        }
        if self.search_beam == 0 {
            return Err(Error::invalid("search_beam: must be positive"));
        }
        if self.knn_degree == 0 || self.random_degree == 0 {
            return Err(Error::invalid("knn_degree/random_degree: must be positive"));
        }
        if self.jobs == Some(0) {
            return Err(Error::invalid("jobs: must be positive"));
        }
        if let Some(p) = &self.perturbation {
            if !(0.0..=1.0).contains(&p.weight) {
                return Err(Error::invalid(format!("perturbation.weight: {} outside [0, 1]", p.weight)));
            }
        }
        self.build
            .validate()
            .map_err(|e| Error::invalid(format!("build: {e}")))?;
        if self.methods.contains(&Method::Rgs) {
            for &b in &self.budgets {
                self.rgs_params(b)
                    .validate()
                    .map_err(|e| Error::invalid(format!("rgs (budget {b}): {e}")))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub corpus: Arc<Corpus>,
    pub queries: Vec<QueryRecord>,
    pub qrels: Arc<RelevanceJudgments>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryRow {
    pub qid: String,
    pub method: Method,
    pub budget: usize,
    pub ndcg10: f64,
    pub scanned: usize,
    pub doc_views: u64,
    pub calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Means over the queries that did not fail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub method: Method,
    pub budget: usize,
    pub queries: usize,
    pub failed: usize,
    pub ndcg10: f64,
    pub scanned: f64,
    pub doc_views: f64,
    pub calls: f64,
    pub tokens_in: f64,
    pub tokens_out: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetErrors {
    pub method: Method,
    pub budget: usize,
    pub counts: ErrorBreakdown,
    pub fraction_returned: f64,
    pub fraction_seen_not_selected: f64,
    pub fraction_never_seen: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Queries left out because they have no relevance judgments.
    pub skipped_queries: usize,
    pub rows: Vec<QueryRow>,
    pub aggregates: Vec<Aggregate>,
    pub errors: Vec<BudgetErrors>,
    #[serde(skip)]
    pub traces: Vec<SearchTrace>,
}

impl ExperimentReport {
    pub fn aggregate(&self, method: Method, budget: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.budget == budget)
    }

    pub fn breakdown(&self, method: Method, budget: usize) -> Option<&BudgetErrors> {
        self.errors.iter().find(|e| e.method == method && e.budget == budget)
    }

    pub fn failed_queries(&self) -> usize {
        self.rows.iter().filter(|r| r.failed).count()
    }
}

struct Graphs {
    ann: Arc<GraphIndex>,
    expand: Arc<GraphIndex>,
    slidegar: Arc<GraphIndex>,
}

fn build_graph(kind: GraphKind, corpus: &Corpus, config: &ExperimentConfig, diskann: &Arc<GraphIndex>) -> Result<Arc<GraphIndex>> {
    Ok(match kind {
        GraphKind::Diskann => diskann.clone(),
        GraphKind::Knn => Arc::new(build_knn(corpus, config.knn_degree.min(corpus.len() - 1))?),
        GraphKind::Random => Arc::new(build_random(corpus, config.random_degree.min(corpus.len() - 1), config.seed)?),
    })
}

/// Run every configured method and budget over the judged queries of `data`.
///
/// `prebuilt` is used as the DiskANN index unless documents are perturbed, in
/// which case all graphs are rebuilt over the perturbed corpus. The backend
/// sees the perturbed corpus and queries through its requests.
pub fn run_experiment(
    config: &ExperimentConfig,
    data: &Dataset,
    backend: &dyn Reranker,
    prebuilt: Option<&GraphIndex>,
) -> Result<ExperimentReport> {
    config.validate()?;
    if data.corpus.len() < 2 {
        return Err(Error::invalid("corpus needs at least two documents"));
    }
    let judged: Vec<&QueryRecord> = {
        let qids: std::collections::HashSet<&str> = data.qrels.qids().collect();
        data.queries.iter().filter(|q| qids.contains(q.qid.as_str())).collect()
    };
    let skipped_queries = data.queries.len() - judged.len();
    if skipped_queries > 0 {
        warn!("{skipped_queries} queries have no relevance judgments and are skipped");
    }
    if judged.is_empty() {
        return Err(Error::invalid("no query has relevance judgments"));
    }
    for q in &judged {
        if q.embedding.dim() != data.corpus.dim() {
            return Err(Error::invalid(format!(
                "query {} has dimension {} but corpus has {}",
                q.qid,
                q.embedding.dim(),
                data.corpus.dim()
            )));
        }
    }

    let mut queries: Vec<QueryRecord> = judged.into_iter().cloned().collect();
    let mut corpus = data.corpus.clone();
    let mut rebuilt = false;
    if let Some(p) = &config.perturbation {
        match p.target {
            PerturbTarget::Query => queries = perturb_queries(&queries, p)?,
            PerturbTarget::Document => {
                let mixed = perturb(&corpus.embeddings(), p.weight, p.seed, p.renormalize)?;
                corpus = Arc::new(corpus.with_vectors(mixed)?);
                rebuilt = true;
            }
        }
    }

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = config.jobs {
            b = b.num_threads(j);
        }
        b.build().map_err(|e| Error::invalid(format!("jobs: {e}")))?
    };

    let graphs = pool.install(|| -> Result<Graphs> {
        let ann = match prebuilt {
            Some(g) if !rebuilt => {
                g.check_corpus(&corpus)?;
                Arc::new(g.clone())
            }
            _ => {
                info!("building DiskANN index over {} documents", corpus.len());
                Arc::new(build_diskann(&corpus, &config.build)?)
            }
        };
        let need_expand = config.methods.contains(&Method::Rgs);
        let need_slidegar = config.methods.contains(&Method::Slidegar);
        let expand = if need_expand {
            build_graph(config.graph, &corpus, config, &ann)?
        } else {
            ann.clone()
        };
        let slidegar = if need_slidegar {
            if config.slidegar_graph == config.graph && need_expand {
                expand.clone()
            } else {
                build_graph(config.slidegar_graph, &corpus, config, &ann)?
            }
        } else {
            ann.clone()
        };
        Ok(Graphs { ann, expand, slidegar })
    })?;

    let mut tasks = Vec::new();
    for &m in &config.methods {
        for &b in &config.budgets {
            for qi in 0..queries.len() {
                tasks.push((m, b, qi));
            }
        }
    }

    let results: Vec<(QueryRow, Option<ErrorBreakdown>, Option<SearchTrace>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(method, budget, qi)| {
                let q = &queries[qi];
                let outcome = run_one(config, method, budget, q, &corpus, &graphs, backend);
                finish_row(config, method, budget, q, outcome, &data.qrels)
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    let mut breakdowns: BTreeMap<(Method, usize), ErrorBreakdown> = BTreeMap::new();
    for (row, b, t) in results {
        if let Some(b) = b {
            breakdowns.entry((row.method, row.budget)).or_default().add(&b);
        }
        if let Some(t) = t {
            traces.push(t);
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| (a.method, a.budget, &a.qid).cmp(&(b.method, b.budget, &b.qid)));
    traces.sort_by(|a, b| (&a.method, a.ledger.budget(), &a.qid).cmp(&(&b.method, b.ledger.budget(), &b.qid)));

    let mut aggregates = Vec::new();
    let mut errors = Vec::new();
    for &m in &config.methods {
        for &b in &config.budgets {
            let group: Vec<&QueryRow> = rows.iter().filter(|r| r.method == m && r.budget == b).collect();
            aggregates.push(aggregate(m, b, &group));
            let counts = breakdowns.get(&(m, b)).copied().unwrap_or_default();
            let (r, s, n) = counts.fractions().unwrap_or((0.0, 0.0, 0.0));
            errors.push(BudgetErrors {
                method: m,
                budget: b,
                counts,
                fraction_returned: r,
                fraction_seen_not_selected: s,
                fraction_never_seen: n,
            });
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        skipped_queries,
        rows,
        aggregates,
        errors,
        traces,
    })
}

fn run_one(
    config: &ExperimentConfig,
    method: Method,
    budget: usize,
    q: &QueryRecord,
    corpus: &Corpus,
    graphs: &Graphs,
    backend: &dyn Reranker,
) -> Result<SearchTrace> {
    match method {
        Method::Rr => {
            let p = RrParams {
                k: budget.min(corpus.len()),
                window: config.rr_window,
                search_beam: config.search_beam.max(budget),
            };
            retrieve_and_rerank(q, corpus, &graphs.ann, backend, &p)
        }
        Method::Slidegar => {
            let p = SlideGarParams {
                budget,
                window: config.slidegar_window,
                search_beam: config.search_beam,
            };
            slidegar_search(q, corpus, &graphs.ann, &graphs.slidegar, backend, &p)
        }
        Method::Rgs => {
            let p = config.rgs_params(budget);
            p.validate()?;
            let seeds = start_points(
                q.embedding.as_slice(),
                &graphs.ann,
                corpus,
                p.start,
                p.seeds,
                p.search_beam,
            )?;
            rgs_search_with_seeds(q, corpus, &graphs.expand, backend, &p, &seeds)
        }
        Method::Random => random_scan(
            q,
            corpus,
            backend,
            budget.min(corpus.len()),
            config.rr_window,
            config.seed,
        ),
    }
}

fn finish_row(
    config: &ExperimentConfig,
    method: Method,
    budget: usize,
    q: &QueryRecord,
    outcome: Result<SearchTrace>,
    qrels: &RelevanceJudgments,
) -> (QueryRow, Option<ErrorBreakdown>, Option<SearchTrace>) {
    let mut row = QueryRow {
        qid: q.qid.clone(),
        method,
        budget,
        ndcg10: 0.0,
        scanned: 0,
        doc_views: 0,
        calls: 0,
        tokens_in: 0,
        tokens_out: 0,
        failed: false,
        error: None,
    };
    match outcome {
        Err(e) => {
            warn!("{method}@{budget} query {} failed: {e}", q.qid);
            row.failed = true;
            row.error = Some(e.to_string());
            (row, None, None)
        }
        Ok(trace) => {
            row.ndcg10 = ndcg_at_10(trace.top(), qrels, &q.qid);
            row.scanned = trace.ledger.scanned_count();
            row.doc_views = trace.ledger.doc_views;
            row.calls = trace.ledger.calls;
            row.tokens_in = trace.ledger.tokens_in;
            row.tokens_out = trace.ledger.tokens_out;
            let failures = trace.backend_failures();
            if failures > config.max_backend_failures {
                row.failed = true;
                row.error = Some(format!("{failures} reranker backend failures"));
            }
            let breakdown = (!row.failed).then(|| classify(&trace, qrels));
            let kept = config.keep_traces.then_some(trace);
            (row, breakdown, kept)
        }
    }
}

fn aggregate(method: Method, budget: usize, group: &[&QueryRow]) -> Aggregate {
    let ok: Vec<&&QueryRow> = group.iter().filter(|r| !r.failed).collect();
    let n = ok.len();
    let mean = |f: &dyn Fn(&QueryRow) -> f64| {
        if n == 0 {
            0.0
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / n as f64
        }
    };
    Aggregate {
        method,
        budget,
        queries: n,
        failed: group.len() - n,
        ndcg10: mean(&|r| r.ndcg10),
        scanned: mean(&|r| r.scanned as f64),
        doc_views: mean(&|r| r.doc_views as f64),
        calls: mean(&|r| r.calls as f64),
        tokens_in: mean(&|r| r.tokens_in as f64),
        tokens_out: mean(&|r| r.tokens_out as f64),
    }
}
