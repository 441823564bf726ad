//! Metrics, the centralized baselines and experiment sweeps.

mod centralized;
mod experiment;
mod metrics;

pub use centralized::{run_centralized, CentralConfig};
pub use experiment::{
    by_cell, curve_csv, plan_groups, run_experiment, summary_csv, trend_checks, CellKey,
    CellResult, CurvePoint, ExperimentPlan, ExperimentReport, TrendCheck, Variant,
};
pub use metrics::{compute_metrics, ClassMetrics, MetricsReport, Summary};
