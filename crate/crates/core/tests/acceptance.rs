//! Acceptance suite. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line; exits non-zero if any criterion fails.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rgs_core::eval::*;
use rgs_core::graph::{build_diskann, build_knn, greedy_beam_search, BuildParams};
use rgs_core::rerank::{
    parse_ranking, rerank_window, Fallback, HttpConfig, HttpReranker, NoisyOracle, Oracle, PromptTemplate, Reranker,
    StaticScore, DEFAULT_TEMPLATE,
};
use rgs_core::search::*;
use rgs_core::{BudgetLedger, Corpus, DocIdx, Embedding, GraphIndex, QueryRecord, RelevanceJudgments};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

fn graph_quality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let unit = |rng: &mut ChaCha8Rng| {
        let v: Vec<f32> = (0..32).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Embedding::new(v).unwrap().normalized()
    };
    let mut corpus = Corpus::new(32);
    for i in 0..1000 {
        corpus.push(format!("v{i:04}"), unit(&mut rng), None).unwrap();
    }
    let queries: Vec<Embedding> = (0..100).map(|_| unit(&mut rng)).collect();
    let start = Instant::now();
    let params = BuildParams {
        degree_bound: 32,
        build_beam: 64,
        alpha: 1.2,
        ..Default::default()
    };
    let g = build_diskann(&corpus, &params).map_err(|e| e.to_string())?;
    let mut recall = 0.0;
    for q in &queries {
        let got = greedy_beam_search(&g, &corpus, &[g.default_start()], q.as_slice(), 64, 10)
            .map_err(|e| e.to_string())?
            .top;
        let mut all: Vec<(f64, DocIdx)> = corpus
            .indices()
            .map(|d| {
                let s: f64 = q.as_slice().iter().zip(corpus.vector(d)).map(|(a, b)| *a as f64 * *b as f64).sum();
                (s, d)
            })
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let truth: Vec<DocIdx> = all[..10].iter().map(|x| x.1).collect();
        recall += got.iter().filter(|d| truth.contains(d)).count() as f64 / 10.0;
    }
    recall /= queries.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    ensure(
        recall >= 0.90 && secs < 60.0,
        format!("mean recall@10 {recall:.3} (need >= 0.90), build + search {secs:.2}s (need < 60s)"),
    )
}

// ---------------------------------------------------------------- 2

fn direct_ndcg(ranking: &[DocIdx], judged: &[(DocIdx, u32)]) -> f64 {
    let grade = |d: DocIdx| judged.iter().find(|j| j.0 == d).map_or(0, |j| j.1);
    let gain = |g: u32| (1u64 << g) as f64 - 1.0;
    let dcg: f64 = ranking
        .iter()
        .take(10)
        .enumerate()
        .map(|(i, &d)| gain(grade(d)) / (i as f64 + 2.0).log2())
        .sum();
    let mut grades: Vec<u32> = judged.iter().map(|j| j.1).collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = grades
        .iter()
        .take(10)
        .enumerate()
        .map(|(i, &g)| gain(g) / (i as f64 + 2.0).log2())
        .sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

fn ndcg_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let pool = rng.random_range(1..100u32);
        let len = rng.random_range(0..=pool.min(25)) as usize;
        let ranking: Vec<DocIdx> = rand::seq::index::sample(&mut rng, pool as usize, len)
            .into_iter()
            .map(|d| d as DocIdx)
            .collect();
        let mut qrels = RelevanceJudgments::new();
        let mut judged = Vec::new();
        for d in 0..pool {
            if rng.random_bool(0.25) {
                let g = rng.random_range(0..5);
                qrels.insert("q", d, g);
                judged.push((d, g));
            }
        }
        worst = worst.max((ndcg_at_10(&ranking, &qrels, "q") - direct_ndcg(&ranking, &judged)).abs());
    }
    ensure(worst <= 1e-9, format!("max |difference| over 1000 instances {worst:.3e} (need <= 1e-9)"))
}

// ---------------------------------------------------------------- 3

fn budget_soundness() -> Check {
    let d = gen_synthetic(&SyntheticParams {
        n: 1000,
        dim: 16,
        clusters: 5,
        queries: 20,
        planted_rank_offset: 60,
        seed: 3,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let corpus = Arc::new(d.corpus);
    let qrels = Arc::new(d.qrels);
    let ann = build_diskann(&corpus, &BuildParams::default()).map_err(|e| e.to_string())?;
    let knn = build_knn(&corpus, 16).map_err(|e| e.to_string())?;
    let oracle = Oracle::new(corpus.clone(), qrels.clone(), &d.queries);
    let noisy = NoisyOracle::new(oracle.clone(), 0.5, 11).map_err(|e| e.to_string())?;
    let backends: [&dyn Reranker; 3] = [&oracle, &noisy, &StaticScore];

    let violations: Vec<String> = (0..10_000u64)
        .into_par_iter()
        .filter_map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(run);
            let budget = rng.random_range(10..=500usize);
            let window = rng.random_range(2..=24usize);
            let q = &d.queries[rng.random_range(0..d.queries.len())];
            let backend = backends[rng.random_range(0..backends.len())];
            let method = run % 3;
            let trace = match method {
                0 => retrieve_and_rerank(
                    q,
                    &corpus,
                    &ann,
                    backend,
                    &RrParams {
                        k: budget,
                        window,
                        search_beam: budget.max(64),
                    },
                ),
                1 => slidegar_search(
                    q,
                    &corpus,
                    &ann,
                    &knn,
                    backend,
                    &SlideGarParams {
                        budget,
                        window,
                        search_beam: 64,
                    },
                ),
                _ => {
                    let seeds = rng.random_range(1..=(budget / 2).max(1));
                    let start = match rng.random_range(0..3) {
                        0 => StartStrategy::Exact,
                        1 => StartStrategy::IndexDefault,
                        _ => StartStrategy::Noisy {
                            rank: rng.random_range(1..=corpus.len() - seeds),
                        },
                    };
                    let p = RgsParams {
                        budget,
                        ls: rng.random_range(window / 2..=60).max(window / 2).max(1),
                        window,
                        seeds,
                        start,
                        pass_mode: if rng.random_bool(0.5) { PassMode::Full } else { PassMode::Tail },
                        search_beam: seeds.max(64),
                    };
                    rgs_search(q, &corpus, &ann, backend, &p)
                }
            };
            match trace {
                Ok(t) if t.ledger.scanned_count() <= budget => None,
                Ok(t) => Some(format!("run {run}: scanned {} > budget {budget}", t.ledger.scanned_count())),
                Err(e) => Some(format!("run {run}: error {e}")),
            }
        })
        .collect();
    ensure(
        violations.is_empty(),
        match violations.first() {
            None => "10000 runs (rr, slidegar, rgs; budgets 10-500): no ledger over budget".into(),
            Some(v) => format!("{} bad runs, first: {v}", violations.len()),
        },
    )
}

// ---------------------------------------------------------------- 4-7

struct Hard {
    data: Dataset,
    oracle: Oracle,
    index: GraphIndex,
    relevant_ranks: Vec<usize>,
    setup: Duration,
}

fn hard() -> &'static Hard {
    static HARD: OnceLock<Hard> = OnceLock::new();
    HARD.get_or_init(|| {
        let t = Instant::now();
        let d = gen_synthetic(&SyntheticParams::default()).expect("hard fixture");
        let corpus = Arc::new(d.corpus);
        let qrels = Arc::new(d.qrels);
        let oracle = Oracle::new(corpus.clone(), qrels.clone(), &d.queries);
        let index = build_diskann(&corpus, &BuildParams::default()).expect("index");
        Hard {
            data: Dataset {
                corpus,
                queries: d.queries,
                qrels,
            },
            oracle,
            index,
            relevant_ranks: d.relevant_ranks,
            setup: t.elapsed(),
        }
    })
}

fn run(config: ExperimentConfig) -> std::result::Result<ExperimentReport, String> {
    let h = hard();
    run_experiment(&config, &h.data, &h.oracle, Some(&h.index)).map_err(|e| e.to_string())
}

fn mean(r: &ExperimentReport, m: Method, budget: usize) -> f64 {
    r.aggregate(m, budget).map_or(f64::NAN, |a| a.ndcg10)
}

fn method_separation() -> Check {
    let t = Instant::now();
    let h = hard();
    let r = run(ExperimentConfig {
        methods: vec![Method::Rr, Method::Rgs],
        budgets: vec![100],
        keep_traces: true,
        ..Default::default()
    })?;
    let secs = t.elapsed().as_secs_f64() + h.setup.as_secs_f64();
    let rr = mean(&r, Method::Rr, 100);
    let rgs = mean(&r, Method::Rgs, 100);
    let min_rank = h.relevant_ranks.iter().copied().min().unwrap_or(0);
    let rr_saw_positive = r
        .traces
        .iter()
        .filter(|t| t.method == "rr")
        .any(|t| t.scanned().iter().any(|&x| h.data.qrels.grade(&t.qid, x) > 0));
    let hits = r
        .rows
        .iter()
        .filter(|row| row.method == Method::Rgs && row.ndcg10 > 0.0)
        .count();
    ensure(
        rr == 0.0 && !rr_saw_positive && min_rank >= 100 && rgs - rr >= 0.30 && secs < 300.0,
        format!(
            "RGS@100 {rgs:.3}, RR@100 {rr:.3} (gap {:.3}, need >= 0.30 and RR = 0); best exhaustive positive rank {min_rank}; \
             RR shortlists with a positive: {}; RGS hits {hits}/100 queries; {secs:.1}s (need < 300s)",
            rgs - rr,
            if rr_saw_positive { "yes" } else { "none" }
        ),
    )
}

fn query_perturbation() -> Check {
    let base = ExperimentConfig {
        methods: vec![Method::Rr, Method::Rgs],
        budgets: vec![100],
        rgs: RgsConfig {
            start: StartStrategy::IndexDefault,
            ..Default::default()
        },
        keep_traces: true,
        ..Default::default()
    };
    let clean = run(base.clone())?;
    let mixed = run(ExperimentConfig {
        perturbation: Some("query:1.0".parse().unwrap()),
        ..base
    })?;
    let corpus = &hard().data.corpus;
    let rgs_lines = |r: &ExperimentReport| -> Vec<String> {
        r.traces
            .iter()
            .filter(|t| t.method == "rgs")
            .map(|t| t.to_json_lines(corpus))
            .collect()
    };
    let a = rgs_lines(&clean);
    let b = rgs_lines(&mixed);
    let identical = a.len() == 100 && a == b;
    let rr = mean(&mixed, Method::Rr, 100);
    ensure(
        rr <= 0.05 && identical,
        format!(
            "perturbed RR@100 {rr:.3} (need <= 0.05); RGS index_default traces {} ({:.3} vs {:.3})",
            if identical { "bit-identical" } else { "DIFFER" },
            mean(&clean, Method::Rgs, 100),
            mean(&mixed, Method::Rgs, 100)
        ),
    )
}

fn graph_ablation() -> Check {
    let random = run(ExperimentConfig {
        methods: vec![Method::Rgs, Method::Random],
        budgets: vec![100],
        graph: rgs_core::GraphKind::Random,
        random_degree: 16,
        ..Default::default()
    })?;
    let diskann = run(ExperimentConfig {
        methods: vec![Method::Rgs],
        budgets: vec![100],
        ..Default::default()
    })?;
    let on_random = mean(&random, Method::Rgs, 100);
    let scan = mean(&random, Method::Random, 100);
    let on_diskann = mean(&diskann, Method::Rgs, 100);
    ensure(
        (on_random - scan).abs() <= 0.05 && on_diskann - on_random >= 0.20,
        format!(
            "RGS random graph {on_random:.3} vs random scan {scan:.3} (|diff| {:.3}, need <= 0.05); \
             RGS DiskANN {on_diskann:.3} (gap {:.3}, need >= 0.20)",
            (on_random - scan).abs(),
            on_diskann - on_random
        ),
    )
}

fn error_consistency() -> Check {
    let r = run(ExperimentConfig {
        methods: vec![Method::Rgs],
        budgets: vec![100, 300, 500],
        ..Default::default()
    })?;
    let mut never = Vec::new();
    let mut worst_sum = 0.0f64;
    for b in [100, 300, 500] {
        let e = r.breakdown(Method::Rgs, b).ok_or("missing breakdown")?;
        let (x, y, z) = e.counts.fractions().ok_or("no positives")?;
        worst_sum = worst_sum.max((x + y + z - 1.0).abs());
        never.push(z);
    }
    let monotone = never.windows(2).all(|w| w[1] <= w[0]);
    ensure(
        monotone && worst_sum <= 1e-9,
        format!(
            "never seen at 100/300/500: {:.3} / {:.3} / {:.3}; max |sum - 1| {worst_sum:.1e}",
            never[0], never[1], never[2]
        ),
    )
}

// ---------------------------------------------------------------- 8

const PASSAGES: [&str; 10] = [
    "Chlorophyll absorbs mostly red and blue light.",
    "The Calvin cycle fixes carbon dioxide into three-carbon sugars.",
    "Mitochondria release energy stored in glucose.",
    "Stomata open and close to regulate gas exchange.",
    "Light reactions in the thylakoid produce ATP and NADPH.",
    "Roots take up water and dissolved minerals.",
    "Rubisco is the most abundant enzyme on Earth.",
    "Some bacteria photosynthesize without releasing oxygen.",
    "Xylem carries water upward from the roots.",
    "Leaves are green because they reflect green wavelengths.",
];
const QUERY: &str = "how do plants turn light into sugar";

/// Answers each request with one canned ranking text and hands back the request body.
fn mock_endpoint(answers: Vec<String>) -> (String, std::sync::mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/messages", listener.local_addr().unwrap());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        for answer in answers {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let _ = tx.send(String::from_utf8(body).unwrap());
            let reply = serde_json::json!({ "content": [{ "type": "text", "text": answer }] }).to_string();
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    (url, rx)
}

fn protocol_fidelity() -> Check {
    let golden = include_str!("golden/prompt_10.txt");
    let template = PromptTemplate::builtin(DEFAULT_TEMPLATE).map_err(|e| e.to_string())?;
    let rendered = template.render(QUERY, &PASSAGES).transcript();
    if rendered != golden {
        return Err("rendered 10-passage prompt differs from the golden file".into());
    }

    let fixtures = [
        ("duplicate", include_str!("fixtures/responses/duplicate.txt"), Some(vec![1, 0, 2, 3, 4, 5, 6, 7, 8, 9])),
        ("missing", include_str!("fixtures/responses/missing.txt"), Some(vec![9, 8, 7, 6, 5, 0, 1, 2, 3, 4])),
        ("garbage", include_str!("fixtures/responses/garbage.txt"), None),
    ];
    let mut corpus = Corpus::new(2);
    for (i, p) in PASSAGES.iter().enumerate() {
        corpus
            .push(format!("p{i}"), Embedding::new(vec![1.0, i as f32]).unwrap(), Some(p.to_string()))
            .unwrap();
    }
    let query = QueryRecord::new("q", Embedding::new(vec![1.0, 0.0]).unwrap(), Some(QUERY.to_string()));
    let window: Vec<DocIdx> = corpus.indices().collect();
    let (url, bodies) = mock_endpoint(fixtures.iter().map(|f| f.1.to_string()).collect());
    let backend = HttpReranker::new(HttpConfig {
        endpoint: url,
        model: "test-model".into(),
        api_key_env: "RGS_ACCEPTANCE_UNSET_KEY".into(),
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;

    let mut notes = Vec::new();
    for (name, text, expected) in &fixtures {
        let parsed = catch_unwind(|| parse_ranking(text, PASSAGES.len())).map_err(|_| format!("{name}: parser panicked"))?;
        if parsed != *expected {
            return Err(format!("{name}: parsed {parsed:?}, expected {expected:?}"));
        }
        let mut ledger = BudgetLedger::new(10).unwrap();
        let out = rerank_window(&backend, &query, &corpus, &window, &mut ledger).map_err(|e| e.to_string())?;
        let body: serde_json::Value = serde_json::from_str(&bodies.recv().unwrap()).unwrap();
        let sent = format!(
            "[system]\n{}\n[user]\n{}\n",
            body["system"].as_str().unwrap_or_default(),
            body["messages"][0]["content"].as_str().unwrap_or_default()
        );
        if sent != golden {
            return Err(format!("{name}: request body prompt differs from the golden file"));
        }
        let want_order: Vec<DocIdx> = match expected {
            Some(p) => p.iter().map(|&i| window[i]).collect(),
            None => window.clone(),
        };
        if out.order != want_order {
            return Err(format!("{name}: window order {:?}, expected {want_order:?}", out.order));
        }
        match (expected, &out.fallback) {
            (Some(_), None) => notes.push(format!("{name} -> repaired permutation")),
            (None, Some(Fallback::NotPermutation)) => notes.push(format!("{name} -> input order kept, flagged")),
            (_, f) => return Err(format!("{name}: unexpected fallback {f:?}")),
        }
    }
    Ok(format!("golden prompt byte-identical (rendered and sent); {}", notes.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("graph quality", graph_quality),
        ("NDCG oracle equivalence", ndcg_equivalence),
        ("budget soundness", budget_soundness),
        ("method separation", method_separation),
        ("query-perturbation robustness", query_perturbation),
        ("graph-type ablation", graph_ablation),
        ("error-analysis consistency", error_consistency),
        ("protocol fidelity", protocol_fidelity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {label}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
