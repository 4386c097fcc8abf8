//! Result files: per-query CSV with aggregate rows, a JSON summary and SVG curves.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::runner::{ExperimentReport, Method};
use crate::io::write_atomic;

pub const CSV_HEADER: [&str; 10] = [
    "qid", "method", "budget", "ndcg10", "scanned", "doc_views", "calls", "tokens_in", "tokens_out", "failed",
];

/// Aggregate rows use qid `ALL`, means over non-failed queries and the failed count.
pub fn results_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.qid.clone(),
            r.method.to_string(),
            r.budget.to_string(),
            format!("{:.6}", r.ndcg10),
            r.scanned.to_string(),
            r.doc_views.to_string(),
            r.calls.to_string(),
            r.tokens_in.to_string(),
            r.tokens_out.to_string(),
            u8::from(r.failed).to_string(),
        ])
        .map_err(csv_err)?;
    }
    for a in &report.aggregates {
        w.write_record([
            "ALL".to_string(),
            a.method.to_string(),
            a.budget.to_string(),
            format!("{:.6}", a.ndcg10),
            format!("{:.2}", a.scanned),
            format!("{:.2}", a.doc_views),
            format!("{:.2}", a.calls),
            format!("{:.2}", a.tokens_in),
            format!("{:.2}", a.tokens_out),
            a.failed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn results_json(report: &ExperimentReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::invalid(format!("json: {e}")))
}

/// Writes `results.csv`, `summary.json` and, when `plots` is set, the SVG
/// curves into `dir`. Returns the written paths.
pub fn write_report(report: &ExperimentReport, dir: &Path, plots: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        (dir.join("results.csv"), results_csv(report)?),
        (dir.join("summary.json"), results_json(report)?),
    ];
    if plots {
        files.push((dir.join("ndcg_vs_budget.svg"), plot(report, Axis::Budget)));
        files.push((dir.join("ndcg_vs_tokens.svg"), plot(report, Axis::Tokens)));
        files.push((dir.join("ndcg_vs_calls.svg"), plot(report, Axis::Calls)));
    }
    let mut written = Vec::new();
    for (path, text) in files {
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Budget,
    Tokens,
    Calls,
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#7f7f7f"];

/// Line chart of mean NDCG@10 per method against the chosen x axis.
pub fn plot(report: &ExperimentReport, axis: Axis) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 420.0, 70.0, 150.0, 30.0, 60.0);
    let mut methods: Vec<Method> = report.aggregates.iter().map(|a| a.method).collect();
    methods.dedup();
    let series: Vec<(Method, Vec<(f64, f64)>)> = methods
        .iter()
        .map(|&m| {
            let mut pts: Vec<(f64, f64)> = report
                .aggregates
                .iter()
                .filter(|a| a.method == m && a.queries > 0)
                .map(|a| {
                    let x = match axis {
                        Axis::Budget => a.budget as f64,
                        Axis::Tokens => a.tokens_in + a.tokens_out,
                        Axis::Calls => a.calls,
                    };
                    (x, a.ndcg10)
                })
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (m, pts)
        })
        .collect();
    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let (mut x0, mut x1) = xs.fold((f64::MAX, f64::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if x0 > x1 {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let y1 = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .fold(0.0f64, f64::max)
        .max(0.1)
        .min(1.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - y / y1) * ph;
    let xlabel = match axis {
        Axis::Budget => "reranker budget k",
        Axis::Tokens => "mean tokens per query",
        Axis::Calls => "mean reranker calls per query",
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + ph);
    for i in 0..=4 {
        let y = y1 * i as f64 / 4.0;
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"#,
            left - 6.0,
            sy(y) + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            sx(x),
            top + ph + 18.0,
            tick(x)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">mean NDCG@10</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, (m, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{m}</text>"#,
            left + pw + 15.0,
            left + pw + 35.0,
            left + pw + 40.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(x: f64) -> String {
    if x.abs() >= 10_000.0 {
        format!("{:.0}k", x / 1000.0)
    } else {
        format!("{x:.0}")
    }
}
