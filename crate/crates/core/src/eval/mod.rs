//! Metrics, ablation tooling, synthetic data and the experiment runner.

mod errors;
mod metrics;
mod perturb;
mod report;
mod runner;
mod synthetic;

pub use errors::{classify, error_analysis, ErrorBreakdown};
pub use metrics::{ndcg_at_10, NDCG_DEPTH};
pub use perturb::{derangement, perturb, perturb_queries, PerturbTarget, Perturbation};
pub use report::{plot, results_csv, results_json, write_report, Axis, CSV_HEADER};
pub use runner::{
    run_experiment, Aggregate, BudgetErrors, Dataset, ExperimentConfig, ExperimentReport, Method, QueryRow, RgsConfig,
};
pub use synthetic::{gen_synthetic, SyntheticData, SyntheticParams};
